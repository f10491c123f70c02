"""Experiment configuration files.

The format is INI-style: one ``[experiment]`` section with scalar or
comma-separated list values, and one ``[user N]`` section per user in
decoding order (strongest first).  Without user sections the two users of
the reference setup are used (rates 0.72 and 0.53).

Example::

    [experiment]
    snr_grid_db = 0, 1, 2, 3
    power_imbalance_db = 2
    sigma_p2 = 0.01
    scheme = full, partial
    trials = 200
    base_seed = 1

    [user 0]
    rate = 0.72

    [user 1]
    rate = 0.53
"""

import configparser
import dataclasses
import re
from dataclasses import dataclass, field

from ..em import CSI_MODES
from ..errors import ConfigurationError
from ..sic import CORRELATION_MODES, E_BAR_MODES, SCHEMES, ReceiverConfig
from ..turbo import DECODER_METHODS, parse_puncture_pattern

DEFAULT_RATES = (0.72, 0.53)

PRESETS = {
    "paper": dict(block_length=5000, pilot_count=256, em_iterations=15, stages=7),
    "desk": dict(block_length=1000, pilot_count=51, em_iterations=5, stages=3),
}


@dataclass
class UserConfig:
    rate: float
    block_length: int = 5000
    pilot_count: int = 256
    pilot_boost_db: float = 3.0
    pilot_placement: str = "uniform"
    power_db: float = None
    puncture: str = None


@dataclass
class ExperimentConfig:
    snr_grid_db: list
    users: list = field(default_factory=lambda: [UserConfig(r) for r in DEFAULT_RATES])
    power_imbalance_db: list = field(default_factory=lambda: [2.0])
    sigma_p2: float = 0.01
    baud_rate: float = None
    W: int = 16
    em_iterations: int = 15
    turbo_iterations: int = 8
    stages: int = 7
    scheme: list = field(default_factory=lambda: ["partial"])
    csi_mode: str = "em"
    e_bar_mode: str = "genie"
    e_bar_table: str = None
    correlation: str = "reencode"
    alpha_clamp: bool = True
    decoder: str = "log-map"
    early_exit: bool = True
    warm_start: bool = True
    trials: int = 100
    base_seed: int = 0
    interleaver_seed: int = 1
    channel_interleaver_seed: int = 7
    output_path: str = "results.csv"
    source_text: str = field(default="", repr=False)

    def receiver(self, scheme):
        return ReceiverConfig(
            stages=self.stages, scheme=scheme, half_width=self.W,
            em_iterations=self.em_iterations, turbo_iterations=self.turbo_iterations,
            csi_mode=self.csi_mode, e_bar_mode=self.e_bar_mode,
            correlation=self.correlation, alpha_clamp=self.alpha_clamp,
            decoder=self.decoder, early_exit=self.early_exit,
            warm_start=self.warm_start,
        )

    def user_powers_db(self, imbalance_db):
        """Received power of each user; the last user sits at 0 dB."""
        n = len(self.users)
        return [u.power_db if u.power_db is not None else (n - 1 - i) * imbalance_db
                for i, u in enumerate(self.users)]

    def echo(self):
        """Key-value lines describing every field, for result headers."""
        lines = []
        for f in dataclasses.fields(self):
            if f.name in ("users", "source_text"):
                continue
            lines.append(f"{f.name} = {_fmt(getattr(self, f.name))}")
        for i, u in enumerate(self.users):
            for f in dataclasses.fields(u):
                lines.append(f"user.{i}.{f.name} = {_fmt(getattr(u, f.name))}")
        return lines


def _fmt(value):
    if isinstance(value, (list, tuple)):
        return ", ".join(str(v) for v in value)
    return str(value)


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _bool(text):
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_EXPERIMENT_KEYS = {
    "snr_grid_db": _float_list,
    "power_imbalance_db": _float_list,
    "sigma_p2": float,
    "baud_rate": float,
    "w": int,
    "em_iterations": int,
    "turbo_iterations": int,
    "stages": int,
    "scheme": _str_list,
    "csi_mode": str,
    "e_bar_mode": str,
    "e_bar_table": str,
    "correlation": str,
    "alpha_clamp": _bool,
    "decoder": str,
    "early_exit": _bool,
    "warm_start": _bool,
    "trials": int,
    "base_seed": int,
    "interleaver_seed": int,
    "channel_interleaver_seed": int,
    "output_path": str,
}

_USER_KEYS = {
    "rate": float,
    "block_length": int,
    "pilot_count": int,
    "pilot_boost_db": float,
    "pilot_placement": str,
    "power_db": float,
    "puncture": str,
}

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_OPTION = re.compile(r"^([^=:\s#;][^=:]*?)\s*[=:]")


def _duplicates(text):
    problems = []
    seen_sections = set()
    section, seen = None, set()
    for line in text.splitlines():
        if m := _SECTION.match(line):
            section = m.group(1).strip()
            if section in seen_sections:
                problems.append(f"duplicate section [{section}]")
            seen_sections.add(section)
            seen = set()
        elif (m := _OPTION.match(line)) and not line[0].isspace():
            key = m.group(1).strip().lower()
            if key in seen:
                problems.append(f"duplicate key {key!r} in [{section}]")
            seen.add(key)
    return problems


def parse_config(text):
    """Parse and validate an experiment configuration.

    Raises :class:`ConfigurationError` listing every violation found.
    """
    problems = _duplicates(text)
    parser = configparser.ConfigParser(strict=False, interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(problems + [f"malformed config: {exc}"]) from exc

    values = {}
    users = []
    if not parser.has_section("experiment"):
        problems.append("missing section [experiment]")
    for name in parser.sections():
        if name == "experiment":
            values = _convert(parser[name], _EXPERIMENT_KEYS, name, problems)
        elif m := re.fullmatch(r"user\s+(\d+)", name):
            users.append((int(m.group(1)), _convert(parser[name], _USER_KEYS, name, problems)))
        else:
            problems.append(f"unknown section [{name}]")

    if "snr_grid_db" not in values and parser.has_section("experiment"):
        problems.append("missing required key 'snr_grid_db' in [experiment]")
    users.sort()
    if [i for i, _ in users] != list(range(len(users))):
        problems.append("user sections must be numbered 0, 1, ... without gaps")
    user_cfgs = []
    for i, u in users:
        if "rate" not in u:
            problems.append(f"missing required key 'rate' in [user {i}]")
            continue
        user_cfgs.append(UserConfig(**u))

    if problems:
        raise ConfigurationError(problems)
    if "w" in values:
        values["W"] = values.pop("w")
    cfg = ExperimentConfig(**values, source_text=text)
    if user_cfgs:
        cfg.users = user_cfgs
    if cfg.baud_rate is not None:
        if "sigma_p2" in values:
            raise ConfigurationError("give either sigma_p2 or baud_rate, not both")
        cfg.sigma_p2 = 100.0 / cfg.baud_rate
    validate(cfg)
    return cfg


def _convert(section, schema, name, problems):
    out = {}
    for key, raw in section.items():
        if key not in schema:
            problems.append(f"unknown key {key!r} in [{name}]")
            continue
        try:
            out[key] = schema[key](raw)
        except ValueError as exc:
            problems.append(f"bad value for {key!r} in [{name}]: {exc}")
    return out


def validate(cfg):
    """Range checks on a config; raises with all violations."""
    p = []
    if not cfg.snr_grid_db:
        p.append("snr_grid_db must not be empty")
    if not cfg.power_imbalance_db:
        p.append("power_imbalance_db must not be empty")
    if cfg.sigma_p2 < 0:
        p.append("sigma_p2 must be >= 0")
    if cfg.baud_rate is not None and cfg.baud_rate <= 0:
        p.append("baud_rate must be > 0")
    for name in ("W", "em_iterations", "turbo_iterations", "stages", "trials"):
        if getattr(cfg, name) < 1:
            p.append(f"{name} must be >= 1")
    if not cfg.scheme or set(cfg.scheme) - set(SCHEMES):
        p.append(f"scheme must be a non-empty list from {SCHEMES}")
    if cfg.csi_mode not in CSI_MODES:
        p.append(f"csi_mode must be one of {CSI_MODES}")
    if cfg.e_bar_mode not in E_BAR_MODES:
        p.append(f"e_bar_mode must be one of {E_BAR_MODES}")
    if cfg.correlation not in CORRELATION_MODES:
        p.append(f"correlation must be one of {CORRELATION_MODES}")
    if cfg.decoder not in DECODER_METHODS:
        p.append(f"decoder must be one of {DECODER_METHODS}")
    if not cfg.users:
        p.append("at least one user is required")
    lengths = set()
    for i, u in enumerate(cfg.users):
        if not 1 / 3 <= u.rate < 1:
            p.append(f"user {i}: rate must lie in [1/3, 1)")
        if u.block_length < 16:
            p.append(f"user {i}: block_length must be >= 16")
        if u.pilot_count < 1:
            p.append(f"user {i}: pilot_count must be >= 1")
        if u.pilot_boost_db < 0:
            p.append(f"user {i}: pilot_boost_db must be >= 0")
        if u.puncture is not None:
            try:
                parse_puncture_pattern(u.puncture)
            except ConfigurationError as exc:
                p.extend(f"user {i}: {v}" for v in exc.violations)
        lengths.add(u.block_length + u.pilot_count)
    if len(lengths) > 1:
        p.append("all users need the same frame length (block_length + pilot_count)")
    if p:
        raise ConfigurationError(p)
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def apply_preset(cfg, name):
    """Override block length, pilots, EM iterations and stages in place."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}")
    preset = PRESETS[name]
    for u in cfg.users:
        u.block_length = preset["block_length"]
        u.pilot_count = preset["pilot_count"]
    cfg.em_iterations = preset["em_iterations"]
    cfg.stages = preset["stages"]
    return validate(cfg)
