from .engine import InferenceEngine, SidecarConfig
from .server import SidecarServer

__version__ = "0.1.0"
__all__ = ["InferenceEngine", "SidecarConfig", "SidecarServer", "__version__"]
