"""Command line entry point: ``partial-sic {run, calibrate-ebar, oracle}``."""

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .errors import ConfigurationError
from .experiments.config import ExperimentConfig, apply_preset, load_config, validate
from .experiments.results import emit_results
from .experiments.runner import calibrate_ebar, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("partial_sic")


def _load(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig(snr_grid_db=[])
    if getattr(args, "snr_grid", None):
        cfg.snr_grid_db = [float(v) for v in args.snr_grid.split(",")]
    if args.preset:
        apply_preset(cfg, args.preset)
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    return validate(cfg)


def cmd_run(args):
    cfg = _load(args)
    if args.output:
        cfg.output_path = args.output

    def progress(done, total):
        if done % max(1, total // 20) == 0 or done == total:
            log.info("%d/%d trials", done, total)

    out = run_experiment(cfg, threads=args.threads, progress=progress)
    emit_results(out.aggregates(), cfg, cfg.output_path, len(out.failed_trials))
    if out.failed_trials:
        log.warning("%d trials failed", len(out.failed_trials))
    log.info("wrote %s", cfg.output_path)
    return EXIT_OK


def cmd_calibrate(args):
    cfg = _load(args)
    if not cfg.snr_grid_db:
        cfg.snr_grid_db = list(np.arange(-2.0, 10.1, 1.0))
    cfg = replace(cfg, scheme=["partial"])
    table = calibrate_ebar(cfg, threads=args.threads)
    comment = "SINR -> E_bar look-up table\n" + "\n".join(cfg.echo())
    table.write(args.output, comment)
    log.info("wrote %d table rows to %s", table.sinr_db.size, args.output)
    return EXIT_OK


def cmd_oracle(args):
    from .oracle import constituent_map, turbo_map
    from .turbo import (CodeConfig, Trellis, build_interleaver, constituent_siso,
                        encode, hard_bits, puncture_pattern_for_rate, siso_decode)

    rng = np.random.default_rng(args.seed or 0)
    trellis = Trellis()
    worst, mismatches, turbo_agree = 0.0, 0, 0
    for draw in range(args.draws):
        n = int(rng.integers(1, args.max_bits + 1))
        bits = rng.integers(0, 2, n)
        parity, ts, tp = trellis.encode(bits)
        sigma2 = 1.0

        def llr(c):
            return 2.0 * ((1 - 2.0 * np.asarray(c)) + rng.normal(0, 1, len(c))) / sigma2

        ls, lp, lts, ltp = llr(bits), llr(parity), llr(ts), llr(tp)
        la = rng.normal(0, 1, n)
        got = constituent_siso(ls, lp, la, lts, ltp, trellis)[0]
        ref = constituent_map(ls, lp, la, lts, ltp)
        worst = max(worst, float(np.abs(got - ref).max()))
        mismatches += int(not np.array_equal(hard_bits(got), hard_bits(ref)))

        code = CodeConfig(n, puncture_pattern_for_rate(1 / 3), build_interleaver(n, draw))
        cw = encode(bits, code)
        ch = llr(cw)
        turbo_agree += int(np.array_equal(hard_bits(siso_decode(ch, code)[1]),
                                          hard_bits(turbo_map(ch, code))))
    print(f"constituent log-MAP vs enumeration: max |dLLR| = {worst:.3e}, "
          f"hard-decision mismatches = {mismatches}/{args.draws}")
    print(f"turbo decoder vs exact turbo MAP: hard decisions agree on "
          f"{turbo_agree}/{args.draws} draws")
    ok = worst <= 1e-6 and mismatches == 0
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser():
    parser = argparse.ArgumentParser(prog="partial-sic", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--trials", type=int, help="override trials")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--preset", choices=("desk", "paper"))

    run = sub.add_parser("run", help="run a Monte Carlo sweep and write CSV")
    common(run)
    run.add_argument("--output", help="override output_path")
    run.set_defaults(func=cmd_run)

    cal = sub.add_parser("calibrate-ebar", help="regenerate the SINR -> E_bar table")
    common(cal)
    cal.add_argument("--snr-grid", help="comma-separated SNRs (dB)")
    cal.add_argument("--output", default="ebar_table.csv")
    cal.set_defaults(func=cmd_calibrate)

    orc = sub.add_parser("oracle", help="brute-force checks of the SISO decoder")
    orc.add_argument("--max-bits", type=int, default=10)
    orc.add_argument("--draws", type=int, default=1000)
    orc.add_argument("--seed", type=int, default=0)
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        for v in exc.violations:
            print(f"configuration error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
