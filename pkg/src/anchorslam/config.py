"""Simulation and experiment configuration, loaded from YAML."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .encounter import BLUETOOTH, WIFI
from .slam import ConfusionMatrix, FilterConfig, MeasurementMode, NoiseParams
from .slam.filter import ITERATIVE, ONE_SHOT


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Everything one simulated trial needs. Defaults give the reference setup."""

    seed: int = 0
    steps: int = 1000
    warmup: int = 50

    # world
    n_agents: int = 23
    width: float = 50.0
    height: float = 60.0
    n_building_anchors: int = 30
    n_known_anchors: int = 0
    n_access_points: int = 300
    min_separation: float = 2.0
    anchor_types: tuple = ("elevator", "stairs", "turn", "organic")
    confusion_accuracy: float = 0.85
    confusion_probs: tuple | None = None
    trigger_radius: float = 1.5
    anchor_noise: float = 0.3

    # walking
    step_length: float = 0.7
    wander: float = 0.15
    session_steps: int = 0
    sigma_l: float = 0.05
    sigma_phi: float = 0.01

    # filter
    n_particles: int = 75
    sampling: str = ITERATIVE
    beta: float = 0.1
    max_iters: int = 10
    p0: float = 0.1
    measurement_mode: str = "range"

    # encounters
    use_encounters: bool = True
    encounter_model: str = WIFI
    bluetooth_threshold: float = -90.0
    wifi_threshold: float = 8.0
    top_n: int = 5
    scan_prob: float = 1.0
    encounter_cooldown: int = 5
    r_var: float | None = None

    # radio channel
    wifi_tx_power: float = -35.0
    wifi_gamma: float = 3.0
    wifi_rss_noise: float = 4.0
    bt_tx_power: float = -52.0
    bt_gamma: float = 3.0
    bt_rss_noise: float = 4.0
    calibration_samples: int = 20000

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def entrance(self) -> tuple:
        """Door on the west wall; every walk starts here with a known pose."""
        return (0.0, self.height / 2)

    @property
    def mode(self) -> MeasurementMode:
        return MeasurementMode(self.measurement_mode)

    def confusion(self) -> ConfusionMatrix:
        if self.confusion_probs is not None:
            return ConfusionMatrix(self.anchor_types, np.array(self.confusion_probs, dtype=float))
        return ConfusionMatrix.symmetric(self.anchor_types, self.confusion_accuracy)

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            noise=NoiseParams(self.sigma_l, self.sigma_phi),
            mode=self.mode,
            sampling=self.sampling,
            beta=self.beta,
            max_iters=self.max_iters,
            p0=self.p0,
            confusion=self.confusion(),
            building_R=self.anchor_noise**2,
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[f.name] = v
        return out


_POSITIVE_INT = ("steps", "n_agents", "n_particles", "max_iters", "top_n", "calibration_samples")
_NONNEG_INT = ("warmup", "session_steps", "n_building_anchors", "n_known_anchors", "n_access_points", "encounter_cooldown")
_POSITIVE = ("width", "height", "trigger_radius", "anchor_noise", "step_length", "beta", "p0",
             "wifi_threshold", "wifi_gamma", "bt_gamma")
_NONNEG = ("min_separation", "wander", "sigma_l", "sigma_phi", "wifi_rss_noise", "bt_rss_noise")


def validate(cfg: SimConfig) -> None:
    for name in _POSITIVE_INT:
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
            raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
    for name in _NONNEG_INT:
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 0:
            raise ConfigError(f"{name} must be an integer >= 0, got {v!r}")
    for name in _POSITIVE:
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(f"{name} must be > 0, got {v!r}")
    for name in _NONNEG:
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v >= 0:
            raise ConfigError(f"{name} must be >= 0, got {v!r}")
    if cfg.n_known_anchors > cfg.n_building_anchors:
        raise ConfigError("n_known_anchors cannot exceed n_building_anchors")
    if cfg.sampling not in (ONE_SHOT, ITERATIVE):
        raise ConfigError(f"sampling must be {ONE_SHOT!r} or {ITERATIVE!r}, got {cfg.sampling!r}")
    if cfg.encounter_model not in (BLUETOOTH, WIFI):
        raise ConfigError(f"encounter_model must be {BLUETOOTH!r} or {WIFI!r}, got {cfg.encounter_model!r}")
    if cfg.measurement_mode not in ("range", "offset"):
        raise ConfigError(f"measurement_mode must be 'range' or 'offset', got {cfg.measurement_mode!r}")
    if not -120 <= cfg.bluetooth_threshold <= 0:
        raise ConfigError(f"bluetooth_threshold must lie in [-120, 0] dBm, got {cfg.bluetooth_threshold}")
    if not 0 <= cfg.scan_prob <= 1:
        raise ConfigError(f"scan_prob must lie in [0, 1], got {cfg.scan_prob}")
    if not 0 < cfg.confusion_accuracy <= 1:
        raise ConfigError(f"confusion_accuracy must lie in (0, 1], got {cfg.confusion_accuracy}")
    if cfg.r_var is not None and not cfg.r_var > 0:
        raise ConfigError(f"r_var must be > 0 when given, got {cfg.r_var}")
    if len(set(cfg.anchor_types)) != len(cfg.anchor_types) or not cfg.anchor_types:
        raise ConfigError("anchor_types must be a non-empty list of unique names")
    try:
        cfg.confusion()
    except ValueError as exc:
        raise ConfigError(f"confusion_probs: {exc}") from None


@dataclass(frozen=True)
class ExperimentSpec:
    """A parameter sweep: one SimConfig field varied over values, for n seeds."""

    base: SimConfig = field(default_factory=SimConfig)
    param: str | None = None
    values: tuple = ()
    n_seeds: int = 1
    out_dir: str = "results"

    def __post_init__(self):
        names = {f.name for f in fields(SimConfig)}
        if self.param is not None:
            if self.param not in names or self.param == "seed":
                raise ConfigError(f"sweep param {self.param!r} is not a SimConfig field")
            if not self.values:
                raise ConfigError("sweep values must be a non-empty list")
        if isinstance(self.n_seeds, bool) or not isinstance(self.n_seeds, int) or self.n_seeds < 1:
            raise ConfigError(f"n_seeds must be an integer >= 1, got {self.n_seeds!r}")

    def cells(self):
        """(value, seed) pairs; seeds are shared across values for paired comparisons."""
        values = self.values if self.param is not None else (None,)
        for value in values:
            for k in range(self.n_seeds):
                yield value, self.base.seed + k

    def config_for(self, value, seed: int) -> SimConfig:
        changes = {"seed": seed}
        if self.param is not None:
            changes[self.param] = value
        try:
            return self.base.replace(**changes)
        except (TypeError, ConfigError) as exc:
            raise ConfigError(f"sweep value {value!r} for {self.param}: {exc}") from None


_SWEEP_KEYS = {"param", "values", "n_seeds", "out_dir"}


def _coerce(name: str, value: Any, default: Any):
    if isinstance(value, list) and name in ("anchor_types",):
        return tuple(value)
    if isinstance(value, list) and name == "confusion_probs":
        return tuple(tuple(row) for row in value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def config_from_dict(data: dict | None, base: SimConfig | None = None) -> SimConfig:
    data = dict(data or {})
    known = {f.name: f for f in fields(SimConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    base = base or SimConfig()
    changes = {k: _coerce(k, v, getattr(base, k)) for k, v in data.items()}
    try:
        return base.replace(**changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _read_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{path}: parse error at {where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_config(path, overrides: dict | None = None):
    """Parse a YAML config file.

    Top-level keys are :class:`SimConfig` fields. A ``sweep`` mapping (with
    ``param``, ``values``, ``n_seeds``, ``out_dir``) turns the file into an
    :class:`ExperimentSpec`; otherwise a :class:`SimConfig` is returned. An
    empty file yields the defaults. Unknown keys are rejected by name.
    """
    data = _read_yaml(path)
    data.update(overrides or {})
    sweep = data.pop("sweep", None)
    cfg = config_from_dict(data)
    if sweep is None:
        return cfg
    if not isinstance(sweep, dict):
        raise ConfigError("sweep must be a mapping")
    unknown = sorted(set(sweep) - _SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"unknown sweep key(s): {', '.join(unknown)}")
    return ExperimentSpec(base=cfg, param=sweep.get("param"), values=tuple(sweep.get("values", ())),
                          n_seeds=sweep.get("n_seeds", 1), out_dir=sweep.get("out_dir", "results"))
