"""Multistage successive interference cancellation with partial weights.

Each user's reconstructed waveform ``h_hat * x_hat`` is scaled by a
weight in [0, 1] before it is subtracted.  The weight that maximizes the
cancellation efficiency

    beta = 1 - E[|h x - alpha h_hat x_hat|^2 / |h x|^2]

for constant-envelope symbols and channel errors uncorrelated with the
channel is

    alpha = E[Re{x conj(x_hat)}] / (E[|x_hat|^2] (1 + E_bar)),

with ``E_bar`` the normalized channel MSE.  Known pilots reduce it to
``1 / (1 + E_bar)``.
"""

import csv
import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .em import em_decode_user, normalized_channel_mse
from .errors import ConfigurationError
from .framing import hard_decisions, modulate_and_frame
from .turbo import DEFAULT_TURBO_ITERATIONS, LLR_CLAMP, encode, hard_bits

log = logging.getLogger(__name__)

SCHEMES = ("full", "partial")
E_BAR_MODES = ("genie", "lookup")
CORRELATION_MODES = ("hard", "reencode", "genie")


def compute_alpha(soft, e_bar, mode="data", correlation="hard", reference=None, clamp=True):
    """Optimal partial-cancellation weight for one user.

    Parameters
    ----------
    soft : SoftSymbolEstimate
    e_bar : float
        Normalized channel MSE estimate, >= 0.
    mode : {"data", "pilot"}
    correlation : {"hard", "reencode", "genie"}
        How ``E[Re{x conj(x_hat)}]`` is estimated.  ``hard`` puts the sign
        of ``x_hat`` in place of ``x``; for BPSK this gives
        ``mean|x_hat| >= mean|x_hat|^2`` and hence never a data weight
        below the pilot weight.  ``reencode`` and ``genie`` correlate with
        ``reference``: the re-encoded hard info-bit decisions or the
        transmitted symbols.
    reference : ndarray, optional
        Frame-length reference symbols for ``reencode`` and ``genie``.
    """
    if e_bar < 0:
        raise ConfigurationError(f"E_bar must be >= 0, got {e_bar}")
    if mode == "pilot":
        alpha = 1.0 / (1.0 + e_bar)
    elif mode == "data":
        x_hat = soft.x_hat[~soft.pilot_mask]
        power = float(np.mean(np.abs(x_hat) ** 2)) if x_hat.size else 0.0
        if power <= 0.0:
            return 0.0
        if correlation == "hard":
            ref = hard_decisions(x_hat)
        elif correlation in ("reencode", "genie"):
            if reference is None:
                raise ConfigurationError(f"{correlation} correlation needs reference symbols")
            ref = np.asarray(reference)[~soft.pilot_mask]
        else:
            raise ConfigurationError(f"unknown correlation mode {correlation!r}")
        corr = float(np.mean(np.real(ref * np.conj(x_hat))))
        alpha = corr / (power * (1.0 + e_bar))
    else:
        raise ConfigurationError(f"unknown alpha mode {mode!r}")
    return float(np.clip(alpha, 0.0, 1.0)) if clamp else float(alpha)


def alpha_vector(alpha_data, alpha_pilot, pilot_mask):
    return np.where(pilot_mask, alpha_pilot, alpha_data)


class EBarTable:
    """Piecewise-linear map from estimated SINR (dB) to E_bar."""

    def __init__(self, sinr_db, e_bar):
        order = np.argsort(sinr_db)
        self.sinr_db = np.asarray(sinr_db, dtype=np.float64)[order]
        self.e_bar = np.asarray(e_bar, dtype=np.float64)[order]
        if self.sinr_db.size == 0:
            raise ConfigurationError("E_bar table is empty")

    def lookup(self, sinr_db):
        """Return ``(E_bar, clamped)``; out-of-range SINR takes the nearest entry."""
        clamped = bool(sinr_db < self.sinr_db[0] or sinr_db > self.sinr_db[-1])
        if clamped:
            log.debug("SINR %.2f dB outside E_bar table, clamped", sinr_db)
        return float(np.interp(sinr_db, self.sinr_db, self.e_bar)), clamped

    @classmethod
    def read(cls, path=None):
        """Load a table; without ``path`` the packaged default is used."""
        if path is None:
            text = resources.files("partial_sic.data").joinpath("ebar_table.csv").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        rows = [r for r in csv.reader(line for line in text.splitlines()
                                      if line and not line.startswith("#"))]
        header, body = rows[0], rows[1:]
        i, j = header.index("sinr_db"), header.index("e_bar")
        return cls([float(r[i]) for r in body], [float(r[j]) for r in body])

    def write(self, path, comment=None):
        with open(path, "w", newline="") as fh:
            if comment:
                for line in comment.splitlines():
                    fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["sinr_db", "e_bar"])
            for s, e in zip(self.sinr_db, self.e_bar):
                w.writerow([f"{s:.4f}", f"{e:.6g}"])


def estimated_sinr_db(h_hat, sigma2):
    """Receiver-side SINR ``mean|h_hat|^2 / (2 sigma_hat^2)`` in dB."""
    signal = float(np.mean(np.abs(h_hat) ** 2))
    return 10.0 * np.log10(max(signal, 1e-12) / max(2.0 * sigma2, 1e-12))


def estimate_e_bar(mode, true_h=None, estimate=None, table=None):
    """E_bar from the genie channel or from the SINR look-up table.

    Returns ``(E_bar, clamped)``; ``clamped`` flags a table look-up
    outside the tabulated SINR range.
    """
    if isinstance(mode, (int, float)):
        return float(mode), False
    if mode == "genie":
        if true_h is None or estimate is None:
            raise ConfigurationError("genie E_bar needs the true and estimated channel")
        return normalized_channel_mse(true_h, estimate.h_hat), False
    if mode == "lookup":
        if estimate is None:
            raise ConfigurationError("lookup E_bar needs a channel estimate")
        return (table or default_table()).lookup(estimated_sinr_db(estimate.h_hat, estimate.sigma2))
    raise ConfigurationError(f"unknown e_bar_mode {mode!r}")


_DEFAULT_TABLE = None


def default_table():
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = EBarTable.read()
    return _DEFAULT_TABLE


@dataclass(eq=False)
class CancellationDiagnostics:
    beta: float
    e_bar: float
    i_full: float
    i_partial: float
    gamma_bar: float
    correlation: float
    soft_power: float


def cancellation_diagnostics(h, x, h_hat, x_hat, alpha):
    """Genie measures of how well one user's signal is removed.

    ``alpha`` may be a scalar or a per-symbol vector.  ``i_full`` is the
    normalized residual interference with ``alpha = 1`` and ``i_partial``
    with the given ``alpha``; ``beta = 1 - i_partial``.
    """
    h, x, h_hat, x_hat = (np.asarray(a) for a in (h, x, h_hat, x_hat))
    y = h * x
    y_hat = h_hat * x_hat
    power = np.abs(y) ** 2
    i_full = float(np.mean(np.abs(y - y_hat) ** 2 / power))
    i_partial = float(np.mean(np.abs(y - alpha * y_hat) ** 2 / power))
    return CancellationDiagnostics(
        beta=1.0 - i_partial,
        e_bar=normalized_channel_mse(h, h_hat),
        i_full=i_full,
        i_partial=i_partial,
        gamma_bar=i_partial / i_full if i_full > 0 else float("nan"),
        correlation=float(np.mean(np.real(x * np.conj(x_hat)))),
        soft_power=float(np.mean(np.abs(x_hat) ** 2)),
    )


@dataclass(eq=False)
class StageState:
    """Estimates produced for user ``user`` at stage ``stage``."""

    stage: int
    user: int
    alpha_data: float
    alpha_pilot: float
    h_hat: np.ndarray
    soft: object
    info_llr: np.ndarray
    sigma2: float
    e_bar: float
    e_bar_clamped: bool = False
    diagnostics: CancellationDiagnostics = None
    e_bar_genie: float = float("nan")

    def reconstruction(self):
        """Weighted waveform ``alpha * h_hat * x_hat`` removed from the others."""
        a = alpha_vector(self.alpha_data, self.alpha_pilot, self.soft.pilot_mask)
        return a * self.h_hat * self.soft.x_hat


def compute_residual(y, states, user, stage):
    """Received samples minus the weighted interference of the other users.

    Users decoded before ``user`` contribute their stage ``stage``
    estimates, the later ones their stage ``stage - 1`` estimates.
    Missing states contribute nothing.
    """
    residual = np.array(y, dtype=np.complex128, copy=True)
    for (s, u1), state in states.items():
        if (u1 < user and s == stage) or (u1 > user and s == stage - 1):
            residual -= state.reconstruction()
    return residual


def decoding_order(powers_db):
    """User indices by descending received power, ties by index."""
    powers = np.asarray(powers_db, dtype=np.float64)
    return sorted(range(powers.size), key=lambda u: (-powers[u], u))


@dataclass(frozen=True)
class ReceiverConfig:
    stages: int = 7
    scheme: str = "partial"
    half_width: int = 16
    em_iterations: int = 15
    turbo_iterations: int = DEFAULT_TURBO_ITERATIONS
    csi_mode: str = "em"
    e_bar_mode: object = "genie"
    correlation: str = "reencode"
    alpha_clamp: bool = True
    decoder: str = "log-map"
    early_exit: bool = True
    warm_start: bool = True

    def validate(self):
        problems = []
        if self.stages < 1:
            problems.append("stages must be >= 1")
        if self.scheme not in SCHEMES:
            problems.append(f"scheme must be one of {SCHEMES}")
        if not isinstance(self.e_bar_mode, (int, float)) and self.e_bar_mode not in E_BAR_MODES:
            problems.append(f"e_bar_mode must be one of {E_BAR_MODES}")
        if self.correlation not in CORRELATION_MODES:
            problems.append(f"correlation must be one of {CORRELATION_MODES}")
        if problems:
            raise ConfigurationError(problems)
        return self


@dataclass(frozen=True, eq=False)
class UserLink:
    """Receiver-side knowledge of one user: its code and frame layout."""

    code: object
    layout: object


@dataclass(eq=False)
class SicResult:
    decisions: list
    states: dict
    order: list
    early_exit_stage: int = None
    stage_decisions: dict = field(default_factory=dict)


def _reference(correlation, result, link, true_x, u):
    if correlation == "genie":
        if true_x is None:
            raise ConfigurationError("genie correlation needs the true symbols")
        return true_x[u]
    if correlation == "reencode":
        bits = hard_bits(result.info_llr)
        return modulate_and_frame(encode(bits, link.code), link.layout).symbols
    return None


def run_multistage_sic(y, users, receiver, order=None, true_h=None, true_x=None, table=None):
    """Decode all users with ``receiver.stages`` SIC stages.

    Parameters
    ----------
    y : ndarray
        Received samples.
    users : list of UserLink
        Indexed like ``true_h`` / ``true_x`` rows.
    receiver : ReceiverConfig
    order : list of int, optional
        Decoding order; defaults to the listed order.
    true_h, true_x : ndarray, optional
        Genie channel and symbols, shape (U, T).  Needed for perfect CSI,
        genie E_bar, genie correlation and the cancellation diagnostics.

    Returns
    -------
    SicResult
        ``decisions[u]`` are the final info-bit decisions of user ``u``;
        ``stage_decisions[(s, u)]`` the decisions after stage ``s``;
        ``states[(s, position)]`` the stage states keyed by decoding
        position.  When every user's info LLRs saturate, later stages are
        skipped and their states repeat the last computed ones.
    """
    receiver.validate()
    order = list(range(len(users))) if order is None else list(order)
    genie = true_h is not None and true_x is not None
    states = {}
    stage_decisions = {}
    early_exit = None

    for s in range(receiver.stages):
        saturated = True
        for pos, u in enumerate(order):
            link = users[u]
            residual = compute_residual(y, states, pos, s)
            prev = states.get((s - 1, pos))
            init = prev.soft if (prev is not None and receiver.warm_start) else None
            result = em_decode_user(
                residual, link.code, link.layout,
                half_width=receiver.half_width,
                em_iterations=receiver.em_iterations,
                csi_mode=receiver.csi_mode,
                true_h=None if true_h is None else true_h[u],
                init_soft=init,
                turbo_iterations=receiver.turbo_iterations,
                decoder=receiver.decoder,
            )
            est, soft = result.estimate, result.soft
            e_bar_genie = (normalized_channel_mse(true_h[u], est.h_hat)
                           if true_h is not None else float("nan"))
            if receiver.scheme == "full":
                a_d = a_p = 1.0
                e_bar, clamped = (e_bar_genie, False)
            else:
                e_bar, clamped = estimate_e_bar(
                    receiver.e_bar_mode,
                    None if true_h is None else true_h[u], est, table,
                )
                a_d = compute_alpha(soft, e_bar, "data", receiver.correlation,
                                    _reference(receiver.correlation, result, link, true_x, u),
                                    receiver.alpha_clamp)
                a_p = compute_alpha(soft, e_bar, "pilot", clamp=receiver.alpha_clamp)
            state = StageState(s, u, a_d, a_p, est.h_hat, soft, result.info_llr,
                               est.sigma2, e_bar, clamped, e_bar_genie=e_bar_genie)
            if genie:
                state.diagnostics = cancellation_diagnostics(
                    true_h[u], true_x[u], est.h_hat, soft.x_hat,
                    alpha_vector(a_d, a_p, soft.pilot_mask),
                )
            states[(s, pos)] = state
            stage_decisions[(s, u)] = hard_bits(result.info_llr)
            saturated &= bool(np.all(np.abs(result.info_llr) >= LLR_CLAMP))
        if receiver.early_exit and saturated and s < receiver.stages - 1:
            early_exit = s
            for later in range(s + 1, receiver.stages):
                for pos, u in enumerate(order):
                    states[(later, pos)] = states[(s, pos)]
                    stage_decisions[(later, u)] = stage_decisions[(s, u)]
            break

    last = receiver.stages - 1
    decisions = [None] * len(users)
    for u in order:
        decisions[u] = stage_decisions[(last, u)]
    return SicResult(decisions, states, order, early_exit, stage_decisions)
