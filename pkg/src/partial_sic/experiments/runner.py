"""Seeded Monte Carlo sweeps over SNR, power imbalance and SIC scheme."""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..channel import (Role, make_channel, noise_variance_for_snr, stream,
                       synthesize_received, user_amplitudes)
from ..framing import PilotConfig, make_layout, modulate_and_frame
from ..sic import EBarTable, UserLink, decoding_order, estimated_sinr_db, run_multistage_sic
from ..turbo import CodeConfig, build_interleaver, encode, parse_puncture_pattern

log = logging.getLogger(__name__)

# trial index reserved for per-experiment constants (pilot sequences)
_FIXED_TRIAL = 2**32


@dataclass(frozen=True)
class SweepPoint:
    snr_db: float
    imbalance_db: float
    scheme: str


@dataclass
class MetricsRecord:
    """Metrics of one (sweep point, stage, user), over one or more trials.

    Means are weighted by ``symbols``.
    """

    snr_db: float
    imbalance_db: float
    scheme: str
    stage: int
    user: int
    bit_errors: int
    bits: int
    frame_errors: int = 0
    trials: int = 1
    symbols: int = 0
    e_bar: float = float("nan")
    alpha_data: float = float("nan")
    alpha_pilot: float = float("nan")
    beta: float = float("nan")
    soft_power: float = float("nan")
    wall_time: float = 0.0

    @property
    def key(self):
        return (self.snr_db, self.imbalance_db, self.scheme, self.stage, self.user)

    @property
    def ber(self):
        return self.bit_errors / self.bits if self.bits else float("nan")


_MEAN_FIELDS = ("e_bar", "alpha_data", "alpha_pilot", "beta", "soft_power")


def aggregate(records):
    """Combine records of a single sweep point, stage and user.

    Counts are summed exactly; means use exactly rounded sums so the result
    does not depend on the order of ``records``.
    """
    records = list(records)
    if not records:
        raise ValueError("nothing to aggregate")
    keys = {r.key for r in records}
    if len(keys) != 1:
        raise ValueError(f"records from different sweep points: {sorted(keys)}")
    weight = sum(r.symbols for r in records)
    means = {}
    for name in _MEAN_FIELDS:
        if weight:
            means[name] = math.fsum(getattr(r, name) * r.symbols for r in records) / weight
        else:
            means[name] = float("nan")
    first = records[0]
    return replace(
        first,
        bit_errors=sum(r.bit_errors for r in records),
        bits=sum(r.bits for r in records),
        frame_errors=sum(r.frame_errors for r in records),
        trials=sum(r.trials for r in records),
        symbols=weight,
        wall_time=math.fsum(r.wall_time for r in records),
        **means,
    )


def accumulate_metrics(records):
    """Group records by (sweep point, stage, user) and aggregate each group."""
    groups = {}
    for r in records:
        groups.setdefault(r.key, []).append(r)
    return [aggregate(groups[k]) for k in sorted(groups, key=_sort_key)]


def _sort_key(key):
    snr, imb, scheme, stage, user = key
    return (imb, scheme, snr, stage, user)


@dataclass(eq=False)
class Link:
    """Transmitter/receiver setup shared by every trial of an experiment."""

    users: list
    frame_length: int


def build_links(cfg):
    users = []
    for u, uc in enumerate(cfg.users):
        puncture = parse_puncture_pattern(uc.puncture) if uc.puncture else None
        code = CodeConfig.for_rate(uc.rate, uc.block_length, cfg.interleaver_seed, puncture)
        # both transmitters share the channel interleaver
        perm = build_interleaver(code.coded_length, cfg.channel_interleaver_seed)
        pilots = PilotConfig(uc.pilot_count, uc.pilot_boost_db, uc.pilot_placement)
        layout = make_layout(code.coded_length, pilots, perm,
                             stream(cfg.base_seed, _FIXED_TRIAL, u, Role.PILOT))
        users.append(UserLink(code, layout))
    return Link(users, users[0].layout.length)


@dataclass(eq=False)
class TrialOutput:
    records: list
    sinr_pairs: list = field(default_factory=list)


def simulate_trial(cfg, link, point, trial, table=None, collect_sinr=False):
    """One frame per user through the channel and the SIC receiver.

    Payload bits, phase walks and noise depend only on
    ``(base_seed, trial, user, role)``, so every sweep point and scheme sees
    the same realizations.
    """
    start = time.perf_counter()
    seed = cfg.base_seed
    n_users = len(link.users)
    bits, frames = [], []
    for u, ul in enumerate(link.users):
        b = stream(seed, trial, u, Role.DATA).integers(0, 2, ul.code.info_length, dtype=np.uint8)
        bits.append(b)
        frames.append(modulate_and_frame(encode(b, ul.code), ul.layout))
    powers = cfg.user_powers_db(point.imbalance_db)
    amps = user_amplitudes(powers)
    sigma_n2 = noise_variance_for_snr(point.snr_db, amplitude=float(amps.min()))
    channel = make_channel(link.frame_length, amps, cfg.sigma_p2, sigma_n2,
                           [stream(seed, trial, u, Role.PHASE) for u in range(n_users)])
    y = synthesize_received(frames, channel.h, sigma_n2, stream(seed, trial, -1, Role.NOISE))
    true_x = np.vstack([f.symbols for f in frames])
    order = decoding_order(powers)
    result = run_multistage_sic(y, link.users, cfg.receiver(point.scheme), order,
                                true_h=channel.h, true_x=true_x, table=table)
    elapsed = time.perf_counter() - start

    records = []
    pairs = []
    for s in range(cfg.stages):
        for pos, u in enumerate(order):
            state = result.states[(s, pos)]
            errors = int(np.count_nonzero(result.stage_decisions[(s, u)] != bits[u]))
            d = state.diagnostics
            n_sym = link.frame_length
            records.append(MetricsRecord(
                snr_db=point.snr_db, imbalance_db=point.imbalance_db, scheme=point.scheme,
                stage=s, user=u, bit_errors=errors, bits=bits[u].size,
                frame_errors=int(errors > 0), trials=1, symbols=n_sym,
                e_bar=state.e_bar_genie, alpha_data=state.alpha_data,
                alpha_pilot=state.alpha_pilot, beta=d.beta,
                soft_power=state.soft.soft_power(),
                wall_time=elapsed / (cfg.stages * n_users),
            ))
            if collect_sinr and (result.early_exit_stage is None or s <= result.early_exit_stage):
                pairs.append((estimated_sinr_db(state.h_hat, state.sigma2), state.e_bar_genie))
    return TrialOutput(records, pairs)


def sweep_points(cfg):
    return [SweepPoint(snr, imb, scheme)
            for imb in cfg.power_imbalance_db
            for scheme in cfg.scheme
            for snr in cfg.snr_grid_db]


@dataclass(eq=False)
class RunOutput:
    records: list
    failed_trials: list
    sinr_pairs: list = field(default_factory=list)

    def aggregates(self):
        return accumulate_metrics(self.records)


def run_experiment(cfg, threads=1, progress=None, collect_sinr=False):
    """Run every sweep point x trial; results do not depend on ``threads``.

    A trial that raises is logged and counted in ``failed_trials`` as
    ``(point, trial, message)``; the sweep continues.
    """
    link = build_links(cfg)
    table = EBarTable.read(cfg.e_bar_table) if cfg.e_bar_mode == "lookup" else None
    jobs = [(p, t) for p in sweep_points(cfg) for t in range(cfg.trials)]

    def work(job):
        point, trial = job
        try:
            return simulate_trial(cfg, link, point, trial, table, collect_sinr)
        except Exception as exc:  # noqa: BLE001 - one bad trial must not stop a sweep
            log.warning("trial %d at %s failed: %s", trial, point, exc)
            return exc

    records, failed, pairs = [], [], []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(work, jobs))
    else:
        outputs = []
        for i, job in enumerate(jobs):
            outputs.append(work(job))
            if progress:
                progress(i + 1, len(jobs))
    for (point, trial), out in zip(jobs, outputs):
        if isinstance(out, Exception):
            failed.append((point, trial, str(out)))
        else:
            records.extend(out.records)
            pairs.extend(out.sinr_pairs)
    return RunOutput(records, failed, pairs)


def calibrate_ebar(cfg, threads=1, bin_width_db=1.0):
    """SINR -> E_bar look-up table from genie runs of ``cfg``.

    Every (stage, user) state contributes one (estimated SINR, genie E_bar)
    pair; pairs are averaged in SINR bins of ``bin_width_db``.
    """
    cfg = replace(cfg, e_bar_mode="genie")
    out = run_experiment(cfg, threads=threads, collect_sinr=True)
    pairs = np.array([p for p in out.sinr_pairs if np.isfinite(p).all()])
    if pairs.size == 0:
        raise RuntimeError("calibration produced no usable samples")
    bins = np.floor(pairs[:, 0] / bin_width_db).astype(int)
    sinr, e_bar = [], []
    for b in np.unique(bins):
        sel = pairs[bins == b]
        sinr.append(float(sel[:, 0].mean()))
        e_bar.append(float(sel[:, 1].mean()))
    return EBarTable(sinr, e_bar)
