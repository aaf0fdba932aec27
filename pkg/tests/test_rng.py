import numpy as np

from varadapt.rng import make_rng


def test_same_stream_same_draws():
    assert make_rng(5, "a", 1).random(8).tobytes() == make_rng(5, "a", 1).random(8).tobytes()


def test_streams_independent():
    base = make_rng(5, "a").random(8)
    assert not np.array_equal(base, make_rng(5, "b").random(8))
    assert not np.array_equal(base, make_rng(6, "a").random(8))
    assert not np.array_equal(base, make_rng(5, "a", 0).random(8))


def test_philox_and_full_u64_seed():
    r = make_rng(2**64 - 1, "x")
    assert isinstance(r.bit_generator, np.random.Philox)
    r.random()
