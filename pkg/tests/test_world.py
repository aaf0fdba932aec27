import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varadapt.world import (ConfigError, DomainSpec, build_world, default_domains, default_world,
                            encode_image, encode_text, sample_domain)


def _straight_line(world, x):
    e = world.encoder
    out = []
    for row in np.atleast_2d(x):
        h = [np.tanh(sum(e["W1"][j, i] * row[i] for i in range(world.P)) + e["b1"][j])
             for j in range(world.hidden)]
        out.append([sum(e["W2"][d, j] * h[j] for j in range(world.hidden)) + e["b2"][d]
                    for d in range(world.D)])
    return np.array(out)


def test_same_seed_bit_identical():
    a, b = default_world(7), default_world(7)
    for k in a.encoder:
        assert a.encoder[k].tobytes() == b.encoder[k].tobytes()


def test_different_seed_different_weights():
    a = build_world(7, 8, 16, 32, default_domains(7))
    b = build_world(8, 8, 16, 32, default_domains(7))
    assert not np.array_equal(a.encoder["W1"], b.encoder["W1"])


def test_zero_domains_rejected():
    with pytest.raises(ConfigError):
        build_world(7, 8, 16, 32, [])


def test_duplicate_names_rejected():
    d = default_domains(7)
    with pytest.raises(ConfigError):
        build_world(7, 8, 16, 32, [d[0], DomainSpec("src", d[1].mean, d[1].scale)])


def test_mean_dimension_mismatch():
    with pytest.raises(ConfigError):
        build_world(7, 4, 16, 32, default_domains(7, 8))


def test_nonpositive_scale_rejected():
    with pytest.raises(ConfigError):
        DomainSpec("x", np.zeros(3), np.array([1.0, 0.0, 1.0]))


def test_encoder_weights_are_frozen(world):
    with pytest.raises(ValueError):
        world.encoder["W1"][0, 0] = 1.0


def test_zero_encoder_gives_zero(world):
    zero = {k: np.zeros_like(v) for k, v in world.encoder.items()}
    w0 = type(world)(world.P, world.D, world.hidden, world.domains, zero, world.seed)
    assert np.array_equal(encode_image(w0, np.ones(world.P)), np.zeros(world.D))


def test_matches_straight_line(world, rng):
    x = rng.normal(size=(5, world.P))
    np.testing.assert_allclose(encode_image(world, x), _straight_line(world, x), rtol=1e-12,
                               atol=1e-12)


def test_single_and_batch_agree(world, rng):
    x = rng.normal(size=(3, world.P))
    np.testing.assert_allclose(encode_image(world, x)[1], encode_image(world, x[1]), rtol=1e-14)


def test_dimension_mismatch(world):
    with pytest.raises(ValueError):
        encode_image(world, np.zeros(world.P + 1))


def test_text_is_encoded_mean(world):
    for name in world.domain_names:
        t = encode_text(world, name)
        np.testing.assert_array_equal(t, encode_image(world, world.domain(name).mean))
        assert t @ t / (np.linalg.norm(t) ** 2) == pytest.approx(1.0, abs=1e-15)


def test_equal_means_equal_text():
    m = np.arange(3.0)
    w = build_world(1, 3, 4, 5, [DomainSpec("a", m, np.ones(3)), DomainSpec("b", m, 2 * np.ones(3))])
    np.testing.assert_array_equal(encode_text(w, "a"), encode_text(w, "b"))


def test_unknown_domain(world):
    with pytest.raises(KeyError):
        encode_text(world, "nope")
    with pytest.raises(KeyError):
        sample_domain(world, "nope", 3, np.random.default_rng(0))


def test_default_world_separated(world):
    a, b = encode_text(world, "src"), encode_text(world, "trg")
    assert a @ b / (np.linalg.norm(a) * np.linalg.norm(b)) < 0.99
    ms, mt = world.domain("src").mean, world.domain("trg").mean
    assert np.linalg.norm(ms - mt) == pytest.approx(4.0)


def test_near_duplicate_domains_warn(caplog):
    m = np.ones(3)
    build_world(1, 3, 4, 5, [DomainSpec("a", m, np.ones(3)), DomainSpec("b", m + 1e-9, np.ones(3))])
    assert any("cosine" in r.getMessage() for r in caplog.records)


def test_sample_tiny_scale_is_mean():
    m = np.array([1.0, -2.0, 3.0])
    w = build_world(1, 3, 4, 5, [DomainSpec("a", m, np.full(3, 1e-300)),
                                 DomainSpec("b", -m, np.ones(3))])
    X = sample_domain(w, "a", 4, np.random.default_rng(0))
    np.testing.assert_array_equal(X, np.tile(m, (4, 1)))


def test_sample_deterministic(world):
    a = sample_domain(world, "src", 7, np.random.default_rng(3))
    b = sample_domain(world, "src", 7, np.random.default_rng(3))
    assert a.tobytes() == b.tobytes()


def test_sample_mean_law_of_large_numbers():
    w = build_world(2, 4, 4, 5, default_domains(2, 4))
    n = 10000
    d = w.domain("trg")
    X = sample_domain(w, "trg", n, np.random.default_rng(11))
    assert np.all(np.abs(X.mean(0) - d.mean) <= 4 * d.scale / np.sqrt(n))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_encoder_purity(seed):
    w = build_world(seed, 3, 4, 5, default_domains(seed, 3))
    x = np.random.default_rng(seed).normal(size=3)
    assert encode_image(w, x).tobytes() == encode_image(w, x.copy()).tobytes()
