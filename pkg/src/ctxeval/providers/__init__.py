from .base import (
    MASK,
    PROB_SUM_TOLERANCE,
    BadMask,
    FillMaskCandidate,
    FillMaskQuery,
    GenerateQuery,
    GenerateResult,
    ModeMismatch,
    Provider,
    ProviderError,
    ProtocolError,
    ProviderUnavailable,
    ScoreQuery,
    ScoreResult,
    validate_fill_mask_query,
    validate_generate_query,
    validate_score_query,
)
from .contract import ContractProbe, run_contract_suite
from .http import AUTH_TOKEN_ENV_VAR, ENDPOINT_ENV_VAR, HttpProvider
from .mock import (
    UNKNOWN_ANSWER,
    EchoModel,
    HashScorer,
    ParametricModel,
    SeparableWordScorer,
    SyntheticFillMask,
    TableFillMask,
    build_echo_model,
    build_parametric_model,
)
from .server import ProviderHTTPServer

__all__ = [
    "MASK",
    "PROB_SUM_TOLERANCE",
    "BadMask",
    "FillMaskCandidate",
    "FillMaskQuery",
    "GenerateQuery",
    "GenerateResult",
    "ModeMismatch",
    "Provider",
    "ProviderError",
    "ProtocolError",
    "ProviderUnavailable",
    "ScoreQuery",
    "ScoreResult",
    "validate_fill_mask_query",
    "validate_generate_query",
    "validate_score_query",
    "ContractProbe",
    "run_contract_suite",
    "AUTH_TOKEN_ENV_VAR",
    "ENDPOINT_ENV_VAR",
    "HttpProvider",
    "UNKNOWN_ANSWER",
    "EchoModel",
    "HashScorer",
    "ParametricModel",
    "SeparableWordScorer",
    "SyntheticFillMask",
    "TableFillMask",
    "build_echo_model",
    "build_parametric_model",
    "ProviderHTTPServer",
]
