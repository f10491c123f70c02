"""Brute-force MAP decoders for small blocks.

These enumerate every information word and share no code with the
trellis tables or the BCJR kernels they are used to check.
"""

import itertools

import numpy as np
from scipy.special import logsumexp

from .turbo import LLR_CLAMP


def shift_register_encode(bits, feedback=0o13, feedforward=0o15):
    """Terminated RSC encoding written directly from the generator taps.

    Returns ``(parity, tail_sys, tail_par)`` as lists of ints.
    """
    memory = feedback.bit_length() - 1
    fb = [(feedback >> (memory - i)) & 1 for i in range(memory + 1)]
    ff = [(feedforward >> (memory - i)) & 1 for i in range(memory + 1)]
    reg = [0] * memory  # reg[i] holds the register value delayed by i + 1

    def step(u):
        a = u
        for i in range(memory):
            a ^= fb[i + 1] & reg[i]
        z = ff[0] & a
        for i in range(memory):
            z ^= ff[i + 1] & reg[i]
        reg.insert(0, a)
        reg.pop()
        return z

    parity = [step(int(u)) for u in bits]
    tail_sys, tail_par = [], []
    for _ in range(memory):
        u = 0
        for i in range(memory):
            u ^= fb[i + 1] & reg[i]
        tail_sys.append(u)
        tail_par.append(step(u))
    return parity, tail_sys, tail_par


def _bit_posteriors(words, metrics, clamp):
    metrics = np.asarray(metrics)
    words = np.asarray(words)
    out = np.empty(words.shape[1])
    for k in range(words.shape[1]):
        zero = words[:, k] == 0
        out[k] = logsumexp(metrics[zero]) - logsumexp(metrics[~zero])
    return np.clip(out, -clamp, clamp)


def _metric(bits, llrs):
    # log-likelihood up to a constant: +L/2 for a 0, -L/2 for a 1
    return 0.5 * float(np.dot(1.0 - 2.0 * np.asarray(bits, dtype=float), llrs))


def constituent_map(sys_llr, par_llr, apriori, tail_sys, tail_par,
                    feedback=0o13, feedforward=0o15, clamp=LLR_CLAMP):
    """Exact info-bit posteriors of one terminated RSC code by enumeration."""
    n = len(sys_llr)
    words = list(itertools.product((0, 1), repeat=n))
    metrics = []
    for w in words:
        p, ts, tp = shift_register_encode(w, feedback, feedforward)
        metrics.append(
            _metric(w, np.add(sys_llr, apriori)) + _metric(p, par_llr)
            + _metric(ts, tail_sys) + _metric(tp, tail_par)
        )
    return _bit_posteriors(words, metrics, clamp)


def turbo_map(channel_llrs, config, clamp=LLR_CLAMP):
    """Exact info-bit posteriors of a whole punctured turbo code."""
    n = config.info_length
    mother_llr = np.zeros(config.mother_length)
    mother_llr[config.keep_mask] = channel_llrs
    perm = config.interleaver
    words = list(itertools.product((0, 1), repeat=n))
    metrics = []
    for w in words:
        w = np.array(w)
        p1, ts1, tp1 = shift_register_encode(w, config.feedback, config.feedforward)
        p2, ts2, tp2 = shift_register_encode(w[perm], config.feedback, config.feedforward)
        cw = np.empty(config.mother_length)
        cw[0 : 3 * n : 3] = w
        cw[1 : 3 * n : 3] = p1
        cw[2 : 3 * n : 3] = p2
        cw[3 * n :] = np.ravel(np.column_stack([ts1, tp1])).tolist() + \
            np.ravel(np.column_stack([ts2, tp2])).tolist()
        metrics.append(_metric(cw, mother_llr))
    return _bit_posteriors(words, metrics, clamp)
