import numpy as np
import pytest

from partial_sic.channel import (
    Role, complex_noise, generate_phase_noise, make_channel, noise_variance_for_snr,
    phase_variance_from_baud, stream, synthesize_received, user_amplitudes,
)
from partial_sic.errors import ConfigurationError


def test_zero_phase_variance_is_constant():
    theta = generate_phase_noise(100, 0.0, 0.7, np.random.default_rng(0))
    np.testing.assert_array_equal(theta, 0.7)


def test_phase_increment_variance():
    theta = generate_phase_noise(1_000_001, 0.01, 0.0, np.random.default_rng(1))
    assert np.var(np.diff(theta)) == pytest.approx(0.01, rel=0.01)
    assert abs(np.mean(np.diff(theta))) < 5 * np.sqrt(0.01 / 1e6)


def test_paper_phase_variance():
    assert phase_variance_from_baud(1e4) == pytest.approx(0.01)


def test_negative_variances_rejected():
    with pytest.raises(ConfigurationError):
        generate_phase_noise(10, -0.1, 0.0, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        make_channel(10, [1.0], 0.01, -1.0, [np.random.default_rng(0)])


def test_noiseless_single_user_passthrough():
    x = np.random.default_rng(0).choice([-1.0, 1.0], 64)
    y = synthesize_received([x], np.ones((1, 64)), 0.0, np.random.default_rng(1))
    np.testing.assert_array_equal(y, x)


def test_two_db_amplitude_ratio():
    amps = user_amplitudes([2.0, 0.0])
    assert amps[0] / amps[1] == pytest.approx(1.2589, abs=1e-4)


def test_noise_variance_per_dimension():
    sigma_n2 = 0.3
    w = complex_noise(1_000_000, sigma_n2, np.random.default_rng(2))
    assert np.var(w.real) == pytest.approx(sigma_n2, rel=0.01)
    assert np.var(w.imag) == pytest.approx(sigma_n2, rel=0.01)


def test_received_noise_moment():
    rng = np.random.default_rng(3)
    n = 1_000_000
    x = rng.choice([-1.0, 1.0], (2, n))
    ch = make_channel(n, [1.3, 1.0], 0.01, 0.2, [rng, rng])
    y = synthesize_received(x, ch.h, 0.2, rng)
    w = y - np.sum(ch.h * x, axis=0)
    assert 0.5 * np.mean(np.abs(w) ** 2) == pytest.approx(0.2, rel=0.01)


def test_length_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        synthesize_received([np.ones(10), np.ones(11)], np.ones((2, 10)), 0.1,
                            np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        make_channel(10, [1.0, 1.0], 0.0, 0.1, [np.random.default_rng(0)])


def test_constant_magnitude():
    ch = make_channel(500, [1.5, 0.7], 0.01, 0.1, [stream(0, 0, u, Role.PHASE) for u in range(2)])
    np.testing.assert_allclose(np.abs(ch.h[0]), 1.5)
    np.testing.assert_allclose(np.abs(ch.h[1]), 0.7)


def test_superposition():
    n = 200
    x = np.random.default_rng(5).choice([-1.0, 1.0], (2, n))
    h = make_channel(n, [1.2, 1.0], 0.01, 0.0, [stream(9, 0, u, Role.PHASE) for u in range(2)]).h
    y = synthesize_received(x, h, 0.1, stream(9, 0, -1, Role.NOISE))
    y0 = synthesize_received(x[:1], h[:1], 0.0, stream(9, 0, -1, Role.NOISE))
    y1 = synthesize_received(x[1:], h[1:], 0.0, stream(9, 0, -1, Role.NOISE))
    w = complex_noise(n, 0.1, stream(9, 0, -1, Role.NOISE))
    np.testing.assert_allclose(y, y0 + y1 + w, atol=1e-12)


def test_snr_bookkeeping():
    snr_db = 6.0
    sigma_n2 = noise_variance_for_snr(snr_db)
    n = 5000
    x = np.random.default_rng(6).choice([-1.0, 1.0], n)
    h = make_channel(n, [1.0], 0.01, sigma_n2, [np.random.default_rng(7)]).h[0]
    measured = np.mean(np.abs(h * x) ** 2) / (2 * sigma_n2)
    assert 10 * np.log10(measured) == pytest.approx(snr_db, abs=0.043)  # 1% in linear
    assert measured == pytest.approx(10 ** (snr_db / 10), rel=0.01)


def test_reproducible_streams():
    def draw():
        rngs = [stream(42, 3, u, Role.PHASE) for u in range(2)]
        h = make_channel(300, [1.0, 1.0], 0.01, 0.1, rngs).h
        x = np.ones((2, 300))
        return synthesize_received(x, h, 0.1, stream(42, 3, -1, Role.NOISE))

    np.testing.assert_array_equal(draw(), draw())


def test_streams_are_distinct():
    a = stream(1, 0, 0, Role.DATA).random(4)
    assert not np.array_equal(a, stream(1, 0, 0, Role.PHASE).random(4))
    assert not np.array_equal(a, stream(1, 1, 0, Role.DATA).random(4))
    assert not np.array_equal(a, stream(1, 0, 1, Role.DATA).random(4))
