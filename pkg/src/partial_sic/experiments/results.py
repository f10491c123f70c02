"""CSV emission and parsing of aggregated sweep results."""

import csv
import io
import math

from .. import __version__
from .runner import MetricsRecord

COLUMNS = ("snr_db", "imbalance_db", "scheme", "stage", "user", "ber", "bit_errors",
           "bits", "e_bar", "alpha_data", "alpha_pilot", "beta", "trials")


def format_results(aggregates, cfg=None, failed_trials=0):
    """CSV text: ``#`` header lines (version, config echo), then the table."""
    buf = io.StringIO()
    buf.write(f"# partial_sic {__version__}\n")
    if cfg is not None:
        for line in cfg.echo():
            buf.write(f"# {line}\n")
    buf.write(f"# failed_trials = {failed_trials}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for a in aggregates:
        writer.writerow([
            repr(a.snr_db), repr(a.imbalance_db), a.scheme, a.stage, a.user,
            repr(a.ber), a.bit_errors, a.bits, repr(a.e_bar), repr(a.alpha_data),
            repr(a.alpha_pilot), repr(a.beta), a.trials,
        ])
    return buf.getvalue()


def emit_results(aggregates, cfg, destination, failed_trials=0):
    """Write :func:`format_results` output to ``destination``.

    I/O errors are re-raised with the path in the message.
    """
    text = format_results(aggregates, cfg, failed_trials)
    try:
        with open(destination, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {destination}: {exc.strerror}") from exc
    return destination


def csv_body(text):
    """The table part of a results file, without the header comments."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def parse_results(text):
    """Aggregates back from CSV text written by :func:`format_results`."""
    reader = csv.DictReader(io.StringIO(csv_body(text)))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(MetricsRecord(
            snr_db=float(row["snr_db"]), imbalance_db=float(row["imbalance_db"]),
            scheme=row["scheme"], stage=int(row["stage"]), user=int(row["user"]),
            bit_errors=int(row["bit_errors"]), bits=int(row["bits"]),
            trials=int(row["trials"]), e_bar=float(row["e_bar"]),
            alpha_data=float(row["alpha_data"]), alpha_pilot=float(row["alpha_pilot"]),
            beta=float(row["beta"]),
        ))
    return out


def read_results(path):
    with open(path) as fh:
        return parse_results(fh.read())


def required_snr(aggregates, target_ber=1e-4, scheme=None, stage=None, user=None):
    """SNR at which the BER curve crosses ``target_ber``.

    Interpolates linearly in (SNR, log10 BER) between the last grid point
    above the target and the first at or below it.  Zero-error points are
    treated as BER = 0.5 / bits.  Returns ``nan`` when the curve never
    crosses.
    """
    pts = sorted(
        (a.snr_db, max(a.bit_errors, 0.5) / a.bits)
        for a in aggregates
        if (scheme is None or a.scheme == scheme)
        and (stage is None or a.stage == stage)
        and (user is None or a.user == user)
    )
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b0 > target_ber >= b1:
            l0, l1, lt = math.log10(b0), math.log10(b1), math.log10(target_ber)
            return s0 + (s1 - s0) * (l0 - lt) / (l0 - l1)
    if pts and pts[0][1] <= target_ber:
        return pts[0][0]
    return float("nan")
