from ctxeval.cache import CachingProvider, ResponseCache
from ctxeval.providers import (
    FillMaskQuery,
    GenerateQuery,
    GenerateResult,
    Provider,
    ScoreQuery,
    ScoreResult,
    SyntheticFillMask,
)


class CountingProvider(Provider):
    model_id = "counting"

    def __init__(self):
        self.calls = 0
        self._fill = SyntheticFillMask(seed=0)

    def fill_mask(self, query):
        self.calls += 1
        return self._fill.fill_mask(query)

    def score(self, query):
        self.calls += 1
        if query.options is not None:
            uniform = 1.0 / len(query.options)
            return ScoreResult(option_probs=(uniform,) * len(query.options))
        return ScoreResult(perplexity=1.0 + len(query.prompt) % 7)

    def generate(self, query):
        self.calls += 1
        return GenerateResult(answer_text=f"echo:{len(query.prompt)}")


def test_second_call_hits_cache(tmp_path):
    inner = CountingProvider()
    provider = CachingProvider(inner, ResponseCache(tmp_path / "cache"))
    query = GenerateQuery("a prompt")
    first = provider.generate(query)
    second = provider.generate(query)
    assert first == second
    assert inner.calls == 1


def test_cache_keys_include_query_content(tmp_path):
    inner = CountingProvider()
    provider = CachingProvider(inner, ResponseCache(tmp_path / "cache"))
    provider.generate(GenerateQuery("one"))
    provider.generate(GenerateQuery("two"))
    assert inner.calls == 2


def test_fill_mask_and_score_round_trip(tmp_path):
    inner = CountingProvider()
    provider = CachingProvider(inner, ResponseCache(tmp_path / "cache"))
    fq = FillMaskQuery("[MASK] is here.", top_k=3)
    assert provider.fill_mask(fq) == provider.fill_mask(fq)
    sq = ScoreQuery(prompt="p", continuation="c")
    assert provider.score(sq) == provider.score(sq)
    assert inner.calls == 2


def test_score_batch_forwards_only_misses(tmp_path):
    class BatchCounting(Provider):
        model_id = "batch"
        batches = []

        def score(self, query):
            return ScoreResult(perplexity=1.0 + len(query.prompt))

        def score_batch(self, queries):
            type(self).batches.append(len(queries))
            return [self.score(q) for q in queries]

    inner = BatchCounting()
    provider = CachingProvider(inner, ResponseCache(tmp_path / "cache"))
    queries = [ScoreQuery(prompt=f"p{i}", continuation="c") for i in range(4)]
    provider.score_batch(queries[:2])
    results = provider.score_batch(queries)
    assert BatchCounting.batches == [2, 2]  # second batch only the two misses
    assert [r.perplexity for r in results] == [1.0 + len(f"p{i}") for i in range(4)]


def test_warm_cache_needs_no_provider(tmp_path):
    cache_dir = tmp_path / "cache"
    warm = CachingProvider(CountingProvider(), ResponseCache(cache_dir))
    query = GenerateQuery("stable prompt")
    expected = warm.generate(query)

    class Exploding(Provider):
        model_id = "counting"  # same id, same cache keys

        def generate(self, query):
            raise AssertionError("cache should have answered")

    cold = CachingProvider(Exploding(), ResponseCache(cache_dir))
    assert cold.generate(query) == expected
