"""Line-oriented ``key = value`` configuration with ``[section]`` headers.

Keys may also be written fully qualified (``plant.cart_mass = 1.2``) outside
any section. ``#`` starts a comment. Tuples are comma separated. Unknown keys
are errors, as are values that break a module invariant; both name the field
path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .evo import DEFAULT_SAFE, FitnessConfig, GaConfig, validate_safe_region
from .lqg import LqgWeights
from .plant import InvalidParameter, PlantParams, SensorModel
from .switching import DIM_NAMES, Hypercube, RegionError


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimSettings:
    ts: float = 0.01  # control period, s
    substeps: int = 10  # RK4 steps per control period

    def __post_init__(self):
        if not 0 < self.ts <= 0.1:
            raise InvalidParameter("ts", "must lie in (0, 0.1]")
        if self.substeps < 1 or self.ts / self.substeps > 0.02:
            raise InvalidParameter("substeps", "must be >= 1 with ts/substeps <= 0.02")


@dataclass(frozen=True)
class SwitchSettings:
    nhc_file: str = "nhc.txt"
    lhc_file: str = "lhc.txt"
    t_sw: float = 0.5  # s
    lhc_margin: float = 4.0
    coverage: float = 0.99
    calibration_duration: float = 1000.0  # s
    calibration_source: str = "estimate"

    def __post_init__(self):
        if not self.t_sw >= 0:
            raise InvalidParameter("t_sw", "must be >= 0")
        if not self.lhc_margin >= 1:
            raise InvalidParameter("lhc_margin", "must be >= 1")
        if not 0 < self.coverage <= 1:
            raise InvalidParameter("coverage", "must lie in (0, 1]")
        if not self.calibration_duration >= 1:
            raise InvalidParameter("calibration_duration", "must be >= 1")
        if self.calibration_source not in ("estimate", "true"):
            raise InvalidParameter("calibration_source", "must be 'estimate' or 'true'")


@dataclass(frozen=True)
class ScenarioSettings:
    duration: float = 100.0  # s
    repeats: int = 5
    amplitude: float = 0.15  # m
    low_freq: float = 0.05  # Hz
    high_freq: float = 0.5  # Hz
    offset: float = 0.15  # m

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidParameter("duration", "must be > 0")
        if self.repeats < 1:
            raise InvalidParameter("repeats", "must be >= 1")
        for name in ("low_freq", "high_freq"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(name, "must be > 0")


@dataclass(frozen=True)
class Config:
    seed: int = 0
    sim: SimSettings = field(default_factory=SimSettings)
    plant: PlantParams = field(default_factory=PlantParams)
    sensors: SensorModel = field(default_factory=SensorModel)
    lqg: LqgWeights = field(default_factory=lambda: LqgWeights(r=0.01))
    ga: GaConfig = field(default_factory=GaConfig)
    fitness: FitnessConfig = field(default_factory=FitnessConfig)
    safe: Hypercube = DEFAULT_SAFE
    switch: SwitchSettings = field(default_factory=SwitchSettings)
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)


SECTIONS = ("sim", "plant", "sensors", "lqg", "ga", "fitness", "safe", "switch", "scenario")

_COMMENTS = {
    "sim": "control period and integrator substeps",
    "plant": "cart-pole, motor and rail parameters (SI units, volts)",
    "sensors": "offsets, quantisation steps and noise std of the p / theta sensors",
    "lqg": "LQR state/input weights; process noise covariance = w_scale * I",
    "ga": "genetic algorithm; init_mode = lqg_seeded | uniform",
    "fitness": "p_w in m, a_w in deg; episodes start within ic_fraction of the safe box",
    "safe": "safe region bounds (lo, hi) relative to the regulation point",
    "switch": "region files live in --out; lhc_margin inflates the calibrated exit box",
    "scenario": "experiment duration (s), repeats per cell and square-wave settings",
}


def _convert(raw: str, default, path: str):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(","))
        return raw.strip().strip('"')
    except ValueError:
        raise ConfigError(f"{path}: cannot parse {raw!r} as {type(default).__name__}") from None


def _read_lines(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    entries: dict[str, dict[str, tuple[str, int]]] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]") or len(body) < 3:
                raise ConfigError(f"line {lineno}: malformed section header {line.strip()!r}")
            section = body[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        key, sep, value = body.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key = key.strip()
        if section:
            sec, name = section, key
        elif "." in key:
            sec, name = key.split(".", 1)
        else:
            sec, name = "", key
        if sec and sec not in SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section in key {key!r}")
        bucket = entries.setdefault(sec, {})
        if name in bucket:
            raise ConfigError(f"line {lineno}: duplicate key {(sec + '.' if sec else '') + name}")
        bucket[name] = (value.strip(), lineno)
    return entries


def parse_config(text: str) -> Config:
    entries = _read_lines(text)
    top = entries.pop("", {})
    seed = 0
    for name, (raw, lineno) in top.items():
        if name != "seed":
            raise ConfigError(f"line {lineno}: unknown key {name!r}")
        seed = _convert(raw, 0, "seed")

    built = {}
    defaults = Config()
    for sec in SECTIONS:
        given = entries.get(sec, {})
        current = getattr(defaults, sec)
        if sec == "safe":
            built[sec] = _parse_safe(given, current)
            continue
        known = {f.name: f for f in fields(current)}
        values = {}
        for name, (raw, lineno) in given.items():
            if name not in known:
                raise ConfigError(f"line {lineno}: unknown key {sec}.{name}")
            values[name] = _convert(raw, getattr(current, name), f"{sec}.{name}")
        try:
            built[sec] = replace(current, **values)
        except InvalidParameter as exc:
            raise ConfigError(f"{sec}.{exc.field}: {str(exc).split(': ', 1)[1]}") from None
    cfg = Config(seed=seed, **built)
    try:
        validate_safe_region(cfg.safe, cfg.plant)
    except InvalidParameter as exc:
        raise ConfigError(f"safe: {str(exc).split(': ', 1)[1]}") from None
    return cfg


def _parse_safe(given: dict[str, tuple[str, int]], current: Hypercube) -> Hypercube:
    lo, hi = list(current.lo), list(current.hi)
    for name, (raw, lineno) in given.items():
        if name not in DIM_NAMES:
            raise ConfigError(f"line {lineno}: unknown key safe.{name}")
        bounds = _convert(raw, (0.0, 0.0), f"safe.{name}")
        if len(bounds) != 2:
            raise ConfigError(f"safe.{name}: expected 'lo, hi'")
        i = DIM_NAMES.index(name)
        lo[i], hi[i] = bounds
    try:
        return Hypercube(tuple(lo), tuple(hi))
    except RegionError as exc:
        raise ConfigError(f"safe.{exc}") from None


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, tuple):
        return ", ".join(_format_value(float(x)) for x in v)
    return str(v)


def serialize_config(cfg: Config) -> str:
    """Reference config text; ``parse_config`` reads it back to an equal Config."""
    out = ["# hybridpend configuration", f"seed = {cfg.seed}", ""]
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        out.append(f"# {_COMMENTS[sec]}")
        out.append(f"[{sec}]")
        if sec == "safe":
            for name, a, b in zip(DIM_NAMES, obj.lo, obj.hi):
                out.append(f"{name} = {_format_value((a, b))}")
        else:
            for f in fields(obj):
                out.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        out.append("")
    return "\n".join(out)


def load_config(spec: str | None) -> Config:
    """``None`` or ``'default'`` gives the built-in defaults; anything else is a path."""
    if spec in (None, "", "default"):
        return Config()
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"config file not found: {spec}")
    return parse_config(path.read_text())
