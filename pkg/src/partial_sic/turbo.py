"""Parallel concatenated turbo code with an exact log-MAP SISO decoder.

The mother code is the UMTS-style rate-1/3 code built from two 8-state
recursive systematic convolutional (RSC) encoders, generators (13, 15)
octal with feedback 13.  Both encoders are terminated with three tail
steps.  Higher rates are reached by periodic puncturing of the two
parity streams.

Mother codeword layout (length ``3 * B + 12``)::

    [x_0, z_0, z'_0, x_1, z_1, z'_1, ..., tail_1 (x, z) * 3, tail_2 (x', z') * 3]

LLR sign convention: positive means bit 0 is more likely.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from numba import njit

from .errors import ConfigurationError

LLR_CLAMP = 30.0
DEFAULT_TURBO_ITERATIONS = 8
_NEG = -1.0e30


class Trellis:
    """State tables of a binary RSC encoder.

    Parameters
    ----------
    feedback, feedforward : int
        Generator polynomials as integers, usually written in octal
        (``0o13``, ``0o15``).  The most significant bit multiplies the
        current register input.
    """

    def __init__(self, feedback=0o13, feedforward=0o15):
        memory = max(feedback.bit_length(), feedforward.bit_length()) - 1
        if memory < 1 or not (feedback >> memory) & 1:
            raise ConfigurationError(
                f"feedback polynomial {feedback:o} must have degree {memory}"
            )
        self.feedback = feedback
        self.feedforward = feedforward
        self.memory = memory
        self.n_states = 1 << memory

        # tap i (1..memory) multiplies the register content delayed by i
        fb_taps = [(feedback >> (memory - i)) & 1 for i in range(memory + 1)]
        ff_taps = [(feedforward >> (memory - i)) & 1 for i in range(memory + 1)]

        next_state = np.zeros((self.n_states, 2), dtype=np.int64)
        parity = np.zeros((self.n_states, 2), dtype=np.int64)
        tail_input = np.zeros(self.n_states, dtype=np.int64)
        for s in range(self.n_states):
            # bit i-1 of the state holds the register value delayed by i
            reg = [(s >> (i - 1)) & 1 for i in range(1, memory + 1)]
            fb = 0
            for i in range(1, memory + 1):
                fb ^= fb_taps[i] & reg[i - 1]
            tail_input[s] = fb
            for u in (0, 1):
                a = u ^ fb
                z = ff_taps[0] & a
                for i in range(1, memory + 1):
                    z ^= ff_taps[i] & reg[i - 1]
                parity[s, u] = z
                next_state[s, u] = ((s << 1) | a) & (self.n_states - 1)
        self.next_state = next_state
        self.parity = parity
        self.tail_input = tail_input

    def encode(self, bits):
        """Run the encoder from state 0 and terminate it.

        Returns ``(parity, tail_sys, tail_par)`` as uint8 arrays.
        """
        bits = np.asarray(bits, dtype=np.int64)
        parity = np.empty(bits.size, dtype=np.uint8)
        s = 0
        for k, u in enumerate(bits):
            parity[k] = self.parity[s, u]
            s = self.next_state[s, u]
        tail_sys = np.empty(self.memory, dtype=np.uint8)
        tail_par = np.empty(self.memory, dtype=np.uint8)
        for j in range(self.memory):
            u = self.tail_input[s]
            tail_sys[j] = u
            tail_par[j] = self.parity[s, u]
            s = self.next_state[s, u]
        assert s == 0
        return parity, tail_sys, tail_par


def build_interleaver(length, seed):
    """Seeded pseudo-random permutation of ``range(length)``.

    The permuted sequence is ``x[perm]``; the same seed always yields the
    same permutation.
    """
    if length < 1:
        raise ConfigurationError(f"interleaver length must be >= 1, got {length}")
    return np.random.default_rng(np.random.SeedSequence(seed)).permutation(length)


def parse_puncture_pattern(text):
    """Parse ``"p1/p2"`` or ``"sys/p1/p2"`` bit strings into a (3, P) mask."""
    rows = [r.strip() for r in text.split("/")]
    if len(rows) not in (2, 3) or any(set(r) - {"0", "1"} or not r for r in rows):
        raise ConfigurationError(f"malformed puncture pattern {text!r}")
    if len({len(r) for r in rows}) != 1:
        raise ConfigurationError(f"puncture pattern rows differ in length: {text!r}")
    if len(rows) == 2:
        rows = ["1" * len(rows[0])] + rows
    return validate_puncture_pattern(np.array([[c == "1" for c in r] for r in rows]))


def format_puncture_pattern(pattern):
    return "/".join("".join("1" if b else "0" for b in row) for row in pattern[1:])


def validate_puncture_pattern(pattern):
    pattern = np.asarray(pattern, dtype=bool)
    if pattern.ndim != 2 or pattern.shape[0] != 3 or pattern.shape[1] < 1:
        raise ConfigurationError("puncture pattern must have shape (3, period)")
    if not pattern[0].all():
        raise ConfigurationError("puncture pattern must not remove systematic bits")
    return pattern


def puncture_pattern_for_rate(rate, max_period=20):
    """Periodic parity puncturing that approximates ``rate``.

    Kept parity bits per period are the best rational approximation of
    ``1/rate - 1`` with denominator at most ``max_period``, spread evenly
    over the interleaved (p1, p2) slots.
    """
    if not 1 / 3 <= rate < 1:
        raise ConfigurationError(f"rate must lie in [1/3, 1), got {rate}")
    frac = Fraction(1 / rate - 1).limit_denominator(max_period)
    kept, period = frac.numerator, frac.denominator
    slots = 2 * period
    keep = np.zeros(slots, dtype=bool)
    for j in range(slots):
        keep[j] = (j + 1) * kept // slots > j * kept // slots
    pattern = np.ones((3, period), dtype=bool)
    pattern[1] = keep[0::2]
    pattern[2] = keep[1::2]
    return pattern


def rate_match(parity_streams, pattern):
    """Puncture a (2, B) parity array; kept bits in time-major order."""
    parity_streams = np.asarray(parity_streams)
    pattern = validate_puncture_pattern(pattern)
    n = parity_streams.shape[1]
    mask = _tile_pattern(pattern[1:], n)
    return parity_streams.T[mask.T]


def depuncture(stream, pattern, length):
    """Inverse of :func:`rate_match`; removed positions are filled with 0."""
    pattern = validate_puncture_pattern(pattern)
    mask = _tile_pattern(pattern[1:], length)
    out = np.zeros((length, 2), dtype=np.float64)
    stream = np.asarray(stream, dtype=np.float64)
    if stream.size != mask.sum():
        raise ConfigurationError(
            f"punctured stream has {stream.size} values, pattern keeps {mask.sum()}"
        )
    out[mask.T] = stream
    return out.T


def _tile_pattern(rows, n):
    period = rows.shape[1]
    reps = -(-n // period) if n else 0
    return np.tile(rows, (1, reps))[:, :n]


@dataclass(eq=False)
class CodeConfig:
    """A concrete turbo code: block length, interleaver and puncturing.

    ``rate`` is the realized rate ``info_length / coded_length``
    (tail bits included), which differs from the nominal rate by at most
    one puncture period.  With ``coded_target`` set, the last punctured
    parity bits are kept as needed so the codeword has exactly that many
    bits.
    """

    info_length: int
    puncture: np.ndarray
    interleaver: np.ndarray
    feedback: int = 0o13
    feedforward: int = 0o15
    nominal_rate: float = field(default=float("nan"))
    coded_target: int = None

    def __post_init__(self):
        problems = []
        if self.info_length < 1:
            problems.append(f"info_length must be >= 1, got {self.info_length}")
        perm = np.asarray(self.interleaver)
        if perm.shape != (self.info_length,) or not np.array_equal(
            np.sort(perm), np.arange(self.info_length)
        ):
            problems.append("interleaver is not a permutation of the info block")
        try:
            self.puncture = validate_puncture_pattern(self.puncture)
        except ConfigurationError as exc:
            problems.extend(exc.violations)
        if problems:
            raise ConfigurationError(problems)
        self.interleaver = perm.astype(np.int64)

    @classmethod
    def for_rate(cls, rate, block_length, interleaver_seed=0, puncture=None):
        """Pick the info length so the codeword fills ``block_length`` bits."""
        pattern = puncture_pattern_for_rate(rate) if puncture is None else puncture
        pattern = validate_puncture_pattern(pattern)
        trellis = Trellis()
        tail = 4 * trellis.memory
        period = pattern.shape[1]
        per_period = pattern.sum()
        info = int((block_length - tail) * period // per_period)
        # the partial last period may overshoot; shrink until it fits
        while info > 1 and info + _tile_pattern(pattern[1:], info).sum() + tail > block_length:
            info -= 1
        if info < 1:
            raise ConfigurationError(f"block_length {block_length} too short for rate {rate}")
        return cls(
            info_length=info,
            puncture=pattern,
            interleaver=build_interleaver(info, interleaver_seed),
            nominal_rate=rate,
            coded_target=block_length,
        )

    @cached_property
    def trellis(self):
        return Trellis(self.feedback, self.feedforward)

    @cached_property
    def mother_length(self):
        return 3 * self.info_length + 4 * self.trellis.memory

    @cached_property
    def keep_mask(self):
        """Boolean mask over the mother codeword selecting transmitted bits."""
        b = self.info_length
        keep = np.ones(self.mother_length, dtype=bool)
        rows = _tile_pattern(self.puncture, b)
        keep[: 3 * b] = rows.T.reshape(-1)
        if self.coded_target is not None:
            deficit = self.coded_target - int(keep.sum())
            if deficit < 0:
                raise ConfigurationError(
                    f"codeword of {keep.sum()} bits exceeds target {self.coded_target}"
                )
            # restore the last punctured parity bits to fill the block exactly
            dropped = np.flatnonzero(~keep)
            if deficit > dropped.size:
                raise ConfigurationError(f"cannot fill {self.coded_target} coded bits")
            keep[dropped[dropped.size - deficit:]] = True
        return keep

    @property
    def coded_length(self):
        return int(self.keep_mask.sum())

    @property
    def rate(self):
        return self.info_length / self.coded_length


def encode(info_bits, config):
    """Turbo-encode ``info_bits`` and puncture to ``config.coded_length`` bits."""
    return encode_mother(info_bits, config)[config.keep_mask]


def encode_mother(info_bits, config):
    """Unpunctured rate-1/3 codeword in the documented mother layout."""
    bits = np.asarray(info_bits, dtype=np.uint8)
    if bits.shape != (config.info_length,):
        raise ConfigurationError(
            f"expected {config.info_length} info bits, got {bits.size}"
        )
    trellis = config.trellis
    b, m = config.info_length, trellis.memory
    p1, ts1, tp1 = trellis.encode(bits)
    p2, ts2, tp2 = trellis.encode(bits[config.interleaver])
    out = np.empty(config.mother_length, dtype=np.uint8)
    out[0 : 3 * b : 3] = bits
    out[1 : 3 * b : 3] = p1
    out[2 : 3 * b : 3] = p2
    tails = 3 * b
    out[tails : tails + 2 * m : 2] = ts1
    out[tails + 1 : tails + 2 * m : 2] = tp1
    out[tails + 2 * m :: 2] = ts2
    out[tails + 2 * m + 1 :: 2] = tp2
    return out


@njit(cache=True, nogil=True)
def _max_star(a, b, max_log):
    if a > b:
        d = a - b
        m = a
    else:
        d = b - a
        m = b
    if max_log or d > 40.0:
        return m
    return m + np.log1p(np.exp(-d))


@njit(cache=True, nogil=True)
def _bcjr(sys_llr, par_llr, apriori, tail_sys, tail_par,
          next_state, parity, tail_input, max_log):
    n_info = sys_llr.size
    n_tail = tail_sys.size
    n_steps = n_info + n_tail
    n_states = next_state.shape[0]

    # branch metrics: gamma[k, s, u]
    gamma = np.full((n_steps, n_states, 2), _NEG)
    for k in range(n_info):
        ls = 0.5 * (sys_llr[k] + apriori[k])
        lp = 0.5 * par_llr[k]
        for s in range(n_states):
            for u in range(2):
                z = parity[s, u]
                gamma[k, s, u] = (ls if u == 0 else -ls) + (lp if z == 0 else -lp)
    for j in range(n_tail):
        k = n_info + j
        ls = 0.5 * tail_sys[j]
        lp = 0.5 * tail_par[j]
        for s in range(n_states):
            u = tail_input[s]
            z = parity[s, u]
            gamma[k, s, u] = (ls if u == 0 else -ls) + (lp if z == 0 else -lp)

    alpha = np.full((n_steps + 1, n_states), _NEG)
    alpha[0, 0] = 0.0
    for k in range(n_steps):
        for s in range(n_states):
            a = alpha[k, s]
            if a <= _NEG:
                continue
            for u in range(2):
                g = gamma[k, s, u]
                if g <= _NEG:
                    continue
                ns = next_state[s, u]
                alpha[k + 1, ns] = _max_star(alpha[k + 1, ns], a + g, max_log)
        top = _NEG
        for s in range(n_states):
            if alpha[k + 1, s] > top:
                top = alpha[k + 1, s]
        for s in range(n_states):
            if alpha[k + 1, s] > _NEG:
                alpha[k + 1, s] -= top

    beta = np.full((n_steps + 1, n_states), _NEG)
    beta[n_steps, 0] = 0.0
    for k in range(n_steps - 1, -1, -1):
        for s in range(n_states):
            acc = _NEG
            for u in range(2):
                g = gamma[k, s, u]
                if g <= _NEG:
                    continue
                b = beta[k + 1, next_state[s, u]]
                if b <= _NEG:
                    continue
                acc = _max_star(acc, g + b, max_log)
            beta[k, s] = acc
        top = _NEG
        for s in range(n_states):
            if beta[k, s] > top:
                top = beta[k, s]
        for s in range(n_states):
            if beta[k, s] > _NEG:
                beta[k, s] -= top

    # a-posteriori LLRs of the input and parity bit of every step
    u_app = np.empty(n_steps)
    z_app = np.empty(n_steps)
    for k in range(n_steps):
        u0 = _NEG
        u1 = _NEG
        z0 = _NEG
        z1 = _NEG
        for s in range(n_states):
            a = alpha[k, s]
            if a <= _NEG:
                continue
            for u in range(2):
                g = gamma[k, s, u]
                if g <= _NEG:
                    continue
                b = beta[k + 1, next_state[s, u]]
                if b <= _NEG:
                    continue
                v = a + g + b
                if u == 0:
                    u0 = _max_star(u0, v, max_log)
                else:
                    u1 = _max_star(u1, v, max_log)
                if parity[s, u] == 0:
                    z0 = _max_star(z0, v, max_log)
                else:
                    z1 = _max_star(z1, v, max_log)
        u_app[k] = u0 - u1
        z_app[k] = z0 - z1
    return u_app, z_app


@njit(cache=True, nogil=True)
def _bcjr_scaled(sys_llr, par_llr, apriori, tail_sys, tail_par,
                 next_state, parity, tail_input):
    # Same posteriors as the exact log-domain recursion, evaluated in the
    # linear domain with per-step normalization.  Branch weights are
    # exp(+-L/2) factors; only four distinct values exist per step.
    n_info = sys_llr.size
    n_tail = tail_sys.size
    n_steps = n_info + n_tail
    n_states = next_state.shape[0]

    w = np.zeros((n_steps, n_states, 2))
    for k in range(n_steps):
        if k < n_info:
            ls = 0.5 * (sys_llr[k] + apriori[k])
            lp = 0.5 * par_llr[k]
        else:
            ls = 0.5 * tail_sys[k - n_info]
            lp = 0.5 * tail_par[k - n_info]
        # shift exponents so the largest branch weight is exp(0)
        shift = abs(ls) + abs(lp)
        e = np.empty((2, 2))
        for u in range(2):
            for z in range(2):
                e[u, z] = np.exp((ls if u == 0 else -ls) + (lp if z == 0 else -lp) - shift)
        for s in range(n_states):
            if k < n_info:
                for u in range(2):
                    w[k, s, u] = e[u, parity[s, u]]
            else:
                u = tail_input[s]
                w[k, s, u] = e[u, parity[s, u]]

    alpha = np.zeros((n_steps + 1, n_states))
    alpha[0, 0] = 1.0
    for k in range(n_steps):
        total = 0.0
        for s in range(n_states):
            a = alpha[k, s]
            if a == 0.0:
                continue
            for u in range(2):
                v = a * w[k, s, u]
                alpha[k + 1, next_state[s, u]] += v
                total += v
        if total > 0.0:
            for s in range(n_states):
                alpha[k + 1, s] /= total

    beta = np.zeros((n_steps + 1, n_states))
    beta[n_steps, 0] = 1.0
    for k in range(n_steps - 1, -1, -1):
        total = 0.0
        for s in range(n_states):
            acc = 0.0
            for u in range(2):
                acc += w[k, s, u] * beta[k + 1, next_state[s, u]]
            beta[k, s] = acc
            total += acc
        if total > 0.0:
            for s in range(n_states):
                beta[k, s] /= total

    u_app = np.empty(n_steps)
    z_app = np.empty(n_steps)
    for k in range(n_steps):
        u0 = 0.0
        u1 = 0.0
        z0 = 0.0
        z1 = 0.0
        for s in range(n_states):
            a = alpha[k, s]
            if a == 0.0:
                continue
            for u in range(2):
                v = a * w[k, s, u] * beta[k + 1, next_state[s, u]]
                if u == 0:
                    u0 += v
                else:
                    u1 += v
                if parity[s, u] == 0:
                    z0 += v
                else:
                    z1 += v
        u_app[k] = np.log(max(u0, 1e-300)) - np.log(max(u1, 1e-300))
        z_app[k] = np.log(max(z0, 1e-300)) - np.log(max(z1, 1e-300))
    return u_app, z_app


DECODER_METHODS = ("log-map", "log-map-logdomain", "max-log")


def constituent_siso(sys_llr, par_llr, apriori, tail_sys, tail_par,
                     trellis=None, method="log-map", clamp=LLR_CLAMP):
    """BCJR over one terminated RSC trellis.

    Returns the APP LLRs ``(info, parity, tail_sys, tail_par)``, each
    clipped to ``[-clamp, clamp]``.

    ``method`` selects the recursion: ``"log-map"`` (exact, scaled linear
    domain), ``"log-map-logdomain"`` (exact, Jacobian logarithm in the log
    domain; slower, kept as a cross-check) or ``"max-log"``.
    """
    trellis = trellis or Trellis()
    args = (
        np.ascontiguousarray(sys_llr, dtype=np.float64),
        np.ascontiguousarray(par_llr, dtype=np.float64),
        np.ascontiguousarray(apriori, dtype=np.float64),
        np.ascontiguousarray(tail_sys, dtype=np.float64),
        np.ascontiguousarray(tail_par, dtype=np.float64),
        trellis.next_state, trellis.parity, trellis.tail_input,
    )
    if method == "log-map":
        u_app, z_app = _bcjr_scaled(*args)
    elif method in ("log-map-logdomain", "max-log"):
        u_app, z_app = _bcjr(*args, method == "max-log")
    else:
        raise ConfigurationError(f"unknown decoder method {method!r}")
    n = len(sys_llr)
    np.clip(u_app, -clamp, clamp, out=u_app)
    np.clip(z_app, -clamp, clamp, out=z_app)
    return u_app[:n], z_app[:n], u_app[n:], z_app[n:]


def siso_decode(channel_llrs, config, iterations=DEFAULT_TURBO_ITERATIONS,
                method="log-map", clamp=LLR_CLAMP):
    """Iterative turbo decoding.

    Parameters
    ----------
    channel_llrs : array_like, shape (C,)
        Channel LLRs of the transmitted (punctured) codeword.
    config : CodeConfig
    iterations : int
        Full turbo iterations (one pass of each constituent decoder).  A
        final pass of the first decoder refreshes its parity APPs.
    method : str
        Constituent recursion, see :func:`constituent_siso`.

    Returns
    -------
    coded_app : ndarray, shape (C,)
        APP LLRs of every transmitted coded bit.
    info_app : ndarray, shape (B,)
        APP LLRs of the information bits.
    """
    llrs = np.asarray(channel_llrs, dtype=np.float64)
    if llrs.shape != (config.coded_length,):
        raise ConfigurationError(
            f"expected {config.coded_length} channel LLRs, got {llrs.size}"
        )
    if iterations < 1:
        raise ConfigurationError("turbo iterations must be >= 1")
    trellis = config.trellis
    b, m = config.info_length, trellis.memory
    perm = config.interleaver

    mother = np.zeros(config.mother_length)
    mother[config.keep_mask] = llrs
    ls = mother[0 : 3 * b : 3]
    lp1 = mother[1 : 3 * b : 3]
    lp2 = mother[2 : 3 * b : 3]
    tail1 = mother[3 * b : 3 * b + 2 * m]
    tail2 = mother[3 * b + 2 * m :]
    ls_perm = ls[perm]

    def run(sys, par, apr, tail):
        return constituent_siso(sys, par, apr, tail[0::2], tail[1::2],
                                trellis, method, clamp)

    apriori1 = np.zeros(b)
    for _ in range(iterations):
        app1 = run(ls, lp1, apriori1, tail1)
        ext1 = np.clip(app1[0] - ls - apriori1, -clamp, clamp)
        apriori2 = ext1[perm]
        app2 = run(ls_perm, lp2, apriori2, tail2)
        ext2 = np.clip(app2[0] - ls_perm - apriori2, -clamp, clamp)
        apriori1 = np.empty(b)
        apriori1[perm] = ext2
    app1 = run(ls, lp1, apriori1, tail1)

    info_app = app1[0]
    out = np.empty(config.mother_length)
    out[0 : 3 * b : 3] = info_app
    out[1 : 3 * b : 3] = app1[1]
    out[2 : 3 * b : 3] = app2[1]
    out[3 * b : 3 * b + 2 * m : 2] = app1[2]
    out[3 * b + 1 : 3 * b + 2 * m : 2] = app1[3]
    out[3 * b + 2 * m :: 2] = app2[2]
    out[3 * b + 2 * m + 1 :: 2] = app2[3]
    return out[config.keep_mask], info_app


def hard_bits(llrs):
    """Bit decisions from LLRs; a zero LLR decides 0."""
    return (np.asarray(llrs) < 0).astype(np.uint8)
