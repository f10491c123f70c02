"""Multiuser received signal with Wiener phase noise and AWGN."""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError


class Role(IntEnum):
    DATA = 0
    PHASE = 1
    NOISE = 2
    PILOT = 3


def stream(base_seed, trial, user, role):
    """Independent counter-based generator keyed by (seed, trial, user, role).

    Any stream can be regenerated on its own, so a trial's payload, phase
    walk and noise do not depend on execution order.  Shared streams (the
    receiver noise) use ``user=-1``.
    """
    seq = np.random.SeedSequence([int(base_seed), int(trial), int(user) + 1, int(role)])
    return np.random.Generator(np.random.Philox(seq))


def phase_variance_from_baud(baud_rate):
    """Phase increment variance 100 / f0 in rad^2 per symbol."""
    return 100.0 / baud_rate


def generate_phase_noise(length, sigma_p2, initial_phase, rng):
    """Wiener phase walk ``theta_t = theta_{t-1} + delta_t``.

    ``theta_0`` equals ``initial_phase``; increments are N(0, sigma_p2).
    """
    if sigma_p2 < 0:
        raise ConfigurationError(f"phase noise variance must be >= 0, got {sigma_p2}")
    steps = rng.standard_normal(max(length - 1, 0)) * np.sqrt(sigma_p2)
    theta = np.empty(length)
    if length:
        theta[0] = initial_phase
        theta[1:] = initial_phase + np.cumsum(steps)
    return theta


def user_amplitudes(powers_db):
    """Amplitudes ``sqrt(10^(P/10))`` for received powers in dB."""
    return np.sqrt(10.0 ** (np.asarray(powers_db, dtype=np.float64) / 10.0))


def noise_variance_for_snr(snr_db, amplitude=1.0):
    """Per-dimension noise variance giving Es/N0 = ``snr_db`` at ``amplitude``."""
    return amplitude**2 / (2.0 * 10.0 ** (snr_db / 10.0))


@dataclass(eq=False)
class ChannelRealization:
    """Per-user, per-symbol coefficients ``h[u, t]`` and noise level."""

    h: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    sigma_n2: float
    sigma_p2: float

    @property
    def n_users(self):
        return self.h.shape[0]


def make_channel(length, amplitudes, sigma_p2, sigma_n2, phase_rngs):
    """Draw one channel realization, one phase stream per user.

    Each user's initial phase is uniform on [0, 2 pi).
    """
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    if len(phase_rngs) != amplitudes.size:
        raise ConfigurationError("need one phase stream per user")
    if sigma_n2 < 0:
        raise ConfigurationError(f"noise variance must be >= 0, got {sigma_n2}")
    phases = np.empty((amplitudes.size, length))
    for u, rng in enumerate(phase_rngs):
        phases[u] = generate_phase_noise(length, sigma_p2, rng.uniform(0, 2 * np.pi), rng)
    h = amplitudes[:, None] * np.exp(1j * phases)
    return ChannelRealization(h, amplitudes, phases, float(sigma_n2), float(sigma_p2))


def complex_noise(length, sigma_n2, rng):
    """Circularly symmetric Gaussian noise, variance ``sigma_n2`` per dimension."""
    return np.sqrt(sigma_n2) * (rng.standard_normal(length) + 1j * rng.standard_normal(length))


def synthesize_received(symbols, h, sigma_n2, rng):
    """``y_t = sum_u h[u, t] x[u, t] + w_t``.

    ``symbols`` is a sequence of per-user symbol arrays or frames with a
    ``symbols`` attribute; all users must be frame synchronous.
    """
    rows = [np.asarray(getattr(x, "symbols", x), dtype=np.complex128) for x in symbols]
    h = np.atleast_2d(np.asarray(h))
    lengths = {r.size for r in rows}
    if len(lengths) != 1 or h.shape != (len(rows), rows[0].size):
        raise ConfigurationError(
            f"frame lengths {sorted(lengths)} do not match channel shape {h.shape}"
        )
    y = np.sum(h * np.vstack(rows), axis=0)
    return y + complex_noise(y.size, sigma_n2, rng)
