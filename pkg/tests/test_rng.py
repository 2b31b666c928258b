import numpy as np
import pytest

from cascade_tails._rng import block_sizes, replicate, replicate_concat, resolve_threads, stream


class TestStreams:
    def test_same_key_same_draws(self):
        assert np.array_equal(stream(3, 1, 2).random(5), stream(3, 1, 2).random(5))

    def test_keys_separate(self):
        assert not np.array_equal(stream(3, 1).random(5), stream(3, 2).random(5))
        assert not np.array_equal(stream(3).random(5), stream(4).random(5))

    def test_large_seed_wraps(self):
        stream(2**64 + 5).random()
        stream(-1).random()


class TestReplicate:
    def test_block_sizes(self):
        assert block_sizes(10, 4) == [4, 4, 2]
        assert block_sizes(8, 4) == [4, 4]
        assert sum(block_sizes(10_001)) == 10_001

    @pytest.mark.parametrize("threads", [2, 4, 16])
    def test_thread_count_does_not_change_results(self, threads):
        fn = lambda g, size: g.standard_normal(size)
        one = replicate_concat(fn, 10_000, 9, key=(1,), block_size=1000, threads=1)
        many = replicate_concat(fn, 10_000, 9, key=(1,), block_size=1000, threads=threads)
        assert np.array_equal(one, many)

    def test_results_in_block_order(self):
        out = replicate(lambda g, size: size, 10, 0, block_size=4, threads=3)
        assert out == [4, 4, 2]

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("CASCADE_TAILS_THREADS", "5")
        assert resolve_threads(None) == 5
        assert resolve_threads(2) == 2
        monkeypatch.delenv("CASCADE_TAILS_THREADS")
        assert resolve_threads(None) == 1
