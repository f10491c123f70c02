"""Iterative EM channel estimation and turbo decoding for one user.

The E-step is turbo decoding, which yields soft symbols.  The M-step
re-estimates the time-varying channel over a sliding window of ``2W + 1``
symbols and the per-dimension noise-plus-interference variance.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .framing import pilot_soft_symbols, soft_symbol_estimates
from .turbo import DEFAULT_TURBO_ITERATIONS, LLR_CLAMP, siso_decode

CSI_MODES = ("em", "perfect", "pilot_only")
_DEGENERATE_POWER = 1e-9


@dataclass(eq=False)
class ChannelEstimate:
    h_hat: np.ndarray
    sigma2: float
    window: int
    degenerate: int = 0

    @property
    def magnitude(self):
        return np.abs(self.h_hat)

    @property
    def phase(self):
        return np.angle(self.h_hat)


def window_sum(values, half_width):
    """Sum of ``values[t - W : t + W + 1]`` for every t, truncated at the edges."""
    values = np.asarray(values)
    n = values.size
    csum = np.concatenate([np.zeros(1, dtype=values.dtype), np.cumsum(values)])
    t = np.arange(n)
    hi = np.minimum(t + half_width, n - 1) + 1
    lo = np.maximum(t - half_width, 0)
    return csum[hi] - csum[lo]


def estimate_channel_window(y, soft, half_width, previous=None):
    """Sliding-window M-step estimate of ``h_t``.

    The phase is ``Arg sum(conj(x_hat) y)`` over the window and the
    magnitude is the projection of the same sum on that phase divided by
    ``sum E|x|^2``, i.e. ``h_t = sum(conj(x_hat) y) / sum E|x|^2``.

    Windows whose soft symbols carry no energy are degenerate; they keep
    the value from ``previous`` when given, otherwise the nearest valid
    estimate in time.
    """
    if half_width < 1:
        raise ConfigurationError(f"window half-width must be >= 1, got {half_width}")
    y = np.asarray(y, dtype=np.complex128)
    x_hat = np.asarray(soft.x_hat, dtype=np.complex128)
    if y.shape != x_hat.shape:
        raise ConfigurationError("received sequence and soft symbols differ in length")
    corr = window_sum(np.conj(x_hat) * y, half_width)
    energy = window_sum(np.asarray(soft.second_moment, dtype=np.float64), half_width)
    power = window_sum(np.abs(x_hat) ** 2, half_width)
    valid = (power > _DEGENERATE_POWER) & (energy > 0)
    h_hat = np.zeros_like(corr)
    h_hat[valid] = corr[valid] / energy[valid]
    n_bad = int((~valid).sum())
    if n_bad:
        h_hat = _fill_degenerate(h_hat, valid, previous)
    return ChannelEstimate(h_hat, float("nan"), half_width, n_bad)


def _fill_degenerate(h_hat, valid, previous):
    if previous is not None:
        h_hat[~valid] = np.asarray(previous)[~valid]
        return h_hat
    if not valid.any():
        return h_hat
    idx = np.flatnonzero(valid)
    t = np.arange(h_hat.size)
    # hold the most recent valid estimate, back-fill before the first one
    nearest = idx[np.clip(np.searchsorted(idx, t, side="right") - 1, 0, None)]
    h_hat[~valid] = h_hat[nearest[~valid]]
    return h_hat


def estimate_noise_variance(y, h_hat, x_hat):
    """Per-dimension residual variance ``sum|y - h_hat x_hat|^2 / (2 X)``."""
    y = np.asarray(y)
    return float(np.sum(np.abs(y - h_hat * x_hat) ** 2) / (2 * y.size))


def pilot_channel_estimate(y, layout, half_width=None):
    """Channel estimate from pilots alone.

    Pilot-centred window estimates are interpolated linearly in magnitude
    and unwrapped phase; the ends hold the first and last pilot values.
    ``half_width`` defaults to twice the mean pilot spacing so that about
    five pilots are averaged.
    """
    pilots = layout.pilot_index
    if pilots.size == 0:
        raise ConfigurationError("pilot-only estimation needs at least one pilot")
    if half_width is None:
        half_width = max(1, int(round(2 * layout.length / pilots.size)))
    est = estimate_channel_window(y, pilot_soft_symbols(layout), half_width)
    at_pilots = est.h_hat[pilots]
    t = np.arange(layout.length)
    mag = np.interp(t, pilots, np.abs(at_pilots))
    phase = np.interp(t, pilots, np.unwrap(np.angle(at_pilots)))
    h_hat = mag * np.exp(1j * phase)
    resid = y[pilots] - h_hat[pilots] * layout.pilot_symbols
    sigma2 = float(np.sum(np.abs(resid) ** 2) / (2 * pilots.size))
    return ChannelEstimate(h_hat, sigma2, half_width, est.degenerate)


def channel_llrs(y, estimate, layout, sigma_floor=1e-6):
    """BPSK channel LLRs ``2 Re(conj(h_hat) y) / sigma^2`` in coded-bit order."""
    sigma2 = max(estimate.sigma2, sigma_floor)
    metric = 2.0 * np.real(np.conj(estimate.h_hat) * y) / sigma2
    llr = layout.to_coded_order(layout.demultiplex(metric))
    return np.clip(llr, -LLR_CLAMP, LLR_CLAMP)


@dataclass(eq=False)
class EmResult:
    info_llr: np.ndarray
    coded_app: np.ndarray
    soft: object
    estimate: ChannelEstimate
    iterations: int
    degenerate_windows: int = 0
    e_bar_trace: list = field(default_factory=list)


def em_decode_user(y, code, layout, half_width=16, em_iterations=15,
                   csi_mode="em", true_h=None, init_soft=None,
                   turbo_iterations=DEFAULT_TURBO_ITERATIONS,
                   decoder="log-map", pilot_half_width=None):
    """Joint channel estimation and decoding of one user.

    Parameters
    ----------
    y : ndarray
        Residual signal for this user (interference already subtracted).
    code : CodeConfig
    layout : FrameLayout
    half_width : int
        Window half-width W of the data-aided M-step.
    em_iterations : int
        Rounds of (channel LLRs, turbo decoding, M-step).
    csi_mode : {"em", "perfect", "pilot_only"}
        ``perfect`` uses ``true_h`` as the channel and only re-estimates the
        noise variance; ``pilot_only`` keeps the pilot-based channel.
    true_h : ndarray, optional
        Genie channel; required for ``perfect``, and when given the
        normalized channel MSE after every M-step is logged in
        ``e_bar_trace``.
    init_soft : SoftSymbolEstimate, optional
        Soft symbols from an earlier SIC stage; the first channel estimate
        is then an M-step on ``y`` with them instead of the pilot-only one.
    """
    if em_iterations < 1:
        raise ConfigurationError("em_iterations must be >= 1")
    if csi_mode not in CSI_MODES:
        raise ConfigurationError(f"unknown csi_mode {csi_mode!r}")
    y = np.asarray(y, dtype=np.complex128)

    if csi_mode == "perfect":
        if true_h is None:
            raise ConfigurationError("perfect CSI mode needs the true channel")
        pil = layout.pilot_index
        resid = y[pil] - true_h[pil] * layout.pilot_symbols
        sigma2 = float(np.sum(np.abs(resid) ** 2) / (2 * max(pil.size, 1)))
        estimate = ChannelEstimate(np.asarray(true_h, dtype=np.complex128), sigma2, half_width)
    elif csi_mode == "em" and init_soft is not None:
        estimate = estimate_channel_window(y, init_soft, half_width)
        estimate.sigma2 = estimate_noise_variance(y, estimate.h_hat, init_soft.x_hat)
    else:
        estimate = pilot_channel_estimate(y, layout, pilot_half_width)

    degenerate = estimate.degenerate
    trace = []
    for _ in range(em_iterations):
        llr = channel_llrs(y, estimate, layout)
        coded_app, info_llr = siso_decode(llr, code, turbo_iterations, decoder)
        soft = soft_symbol_estimates(coded_app, layout)
        if csi_mode == "em":
            new = estimate_channel_window(y, soft, half_width, previous=estimate.h_hat)
            degenerate += new.degenerate
        else:
            new = ChannelEstimate(estimate.h_hat, float("nan"), estimate.window)
        new.sigma2 = estimate_noise_variance(y, new.h_hat, soft.x_hat)
        estimate = new
        if true_h is not None:
            trace.append(normalized_channel_mse(true_h, estimate.h_hat))
    return EmResult(info_llr, coded_app, soft, estimate, em_iterations, degenerate, trace)


def normalized_channel_mse(h, h_hat):
    """Mean of ``|h - h_hat|^2 / |h|^2``."""
    h = np.asarray(h)
    return float(np.mean(np.abs(h - h_hat) ** 2 / np.abs(h) ** 2))
