"""Experiment configuration: YAML/JSON files <-> nested dataclasses."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import jsonschema
import numpy as np
import yaml

from .baselines import GuidanceConfig
from .gp import GPConfig
from .lbfblc import Gains
from .mpfc import OcpConfig
from .paths import PathSpec
from .quadrotor import QuadParams
from .wind import WindModel, random_scenario

HIGH_LEVEL = ("mpfc", "carrot", "nlgl", "mpc")
LOW_LEVEL = ("lb-fblc", "fblc", "fflc", "lb-fflc")

SCHEMA = json.loads((Path(__file__).parent / "configs" / "schema.json").read_text())


@dataclass(frozen=True)
class WindSpec:
    """How the disturbance of a scenario is built.

    ``mode``: ``none`` (calm air), ``random`` (seeded constant + turbulence
    draw) or ``explicit`` (``model`` holds a literal wind description).
    """

    mode: str = "none"
    seed: int = 0
    speed_range: tuple[float, float] = (3.0, 10.0)
    altitude: float = 5.0
    n_components: int = 256
    gust_amplitude: float | None = None
    gust_start: float = 7.0
    gust_duration: float = 1.0
    model: Mapping[str, Any] | None = None

    def build(self) -> WindModel:
        if self.mode == "none":
            return WindModel.calm()
        if self.mode == "random":
            return random_scenario(
                self.seed, tuple(self.speed_range), self.altitude, self.n_components,
                self.gust_amplitude, self.gust_start, self.gust_duration,
            )
        if self.mode == "explicit":
            return WindModel.from_dict(self.model or {})
        raise ValueError(f"unknown wind mode {self.mode!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "scenario"
    duration: float = 20.0
    dt: float = 0.01
    n_sub: int = 10
    plan_period: float = 0.1
    seed: int = 0
    measurement_noise: float = 0.005
    high_level: str = "mpfc"
    low_level: str = "lb-fblc"
    path: PathSpec = field(default_factory=lambda: PathSpec("circle"))
    wind: WindSpec = field(default_factory=WindSpec)
    quad: QuadParams = field(default_factory=QuadParams)
    actuator_lag: float = 0.0
    gp: GPConfig = field(default_factory=GPConfig)
    gp_update_every: int = 1
    gains: Mapping[str, Any] = field(default_factory=lambda: {"kp": [2.0] * 3, "kd": [1.0] * 3,
                                                              "Q": [1.0] * 6, "k_eps": 1e20})
    ocp: OcpConfig = field(default_factory=OcpConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if self.duration <= 0 or self.dt <= 0:
            raise ValueError("duration and dt must be positive")
        if abs(self.duration / self.dt - round(self.duration / self.dt)) > 1e-9:
            raise ValueError("duration must be an integer number of control periods")
        if abs(self.plan_period / self.dt - round(self.plan_period / self.dt)) > 1e-9 or self.plan_period < self.dt:
            raise ValueError("plan_period must be a positive multiple of dt")
        if self.high_level in ("mpfc", "mpc") and abs(self.ocp.dt - self.plan_period) > 1e-12:
            raise ValueError("ocp.dt must equal plan_period (one OCP step per replanning period)")
        if self.high_level not in HIGH_LEVEL:
            raise ValueError(f"high_level must be one of {HIGH_LEVEL}")
        if self.low_level not in LOW_LEVEL:
            raise ValueError(f"low_level must be one of {LOW_LEVEL}")
        if self.gp_update_every < 1:
            raise ValueError("gp_update_every must be >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def plan_every(self) -> int:
        return int(round(self.plan_period / self.dt))

    def build_gains(self) -> Gains:
        g = self.gains
        return Gains.build(g.get("kp", [2.0] * 3), g.get("kd", [1.0] * 3), g.get("Q"), g.get("k_eps", 1e20))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        data = copy.deepcopy(dict(data))
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ValueError(f"invalid config at {where}: {exc.message}") from None
        kw: dict[str, Any] = {}
        for key, value in data.items():
            if key == "path":
                value = PathSpec.from_dict(value)
            elif key == "wind":
                value = WindSpec(**{k: tuple(v) if k == "speed_range" else v for k, v in value.items()})
            elif key == "quad":
                value = QuadParams(**{k: tuple(v) if isinstance(v, list) else v for k, v in value.items()})
            elif key == "gp":
                value = GPConfig(**value)
            elif key == "ocp":
                value = OcpConfig.from_dict(value)
            elif key == "guidance":
                value = GuidanceConfig(**value)
            kw[key] = value
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key in self.__dataclass_fields__:
            value = getattr(self, key)
            if isinstance(value, PathSpec):
                value = value.to_dict()
            elif key == "quad":
                value = {"mass": value.mass, "g": value.g, "k_drag": list(value.k_drag),
                         "accel_limit": list(value.accel_limit)}
            elif key == "ocp":
                value = {k: _plain(v) for k, v in asdict(value).items()}
            elif hasattr(value, "__dataclass_fields__"):
                value = {k: _plain(v) for k, v in asdict(value).items()}
            elif isinstance(value, Mapping):
                value = {k: _plain(v) for k, v in value.items()}
            out[key] = value
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=_plain)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        data = self.to_dict()
        for key, value in changes.items():
            # a new path replaces the old one; other sections merge
            if key != "path" and isinstance(value, Mapping) and isinstance(data.get(key), Mapping):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return ExperimentConfig.from_dict(data)


def _plain(v: Any) -> Any:
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, Mapping):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, float) and not np.isfinite(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, np.generic):
        return v.item()
    return v


def _unplain(v: Any) -> Any:
    if v == "inf":
        return float("inf")
    if v == "-inf":
        return float("-inf")
    if isinstance(v, list):
        return [_unplain(x) for x in v]
    if isinstance(v, dict):
        return {k: _unplain(x) for k, x in v.items()}
    return v


def load_yaml(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return _unplain(yaml.safe_load(fh) or {})


def load_experiment(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_yaml(path))


@dataclass(frozen=True)
class SweepItem:
    """One concrete scenario of a sweep; ``variant`` and ``disturbance`` are
    the labels used to group results into table rows and columns."""

    id: str
    variant: str
    disturbance: str
    config: ExperimentConfig


def expand_sweep(spec: Mapping[str, Any]) -> list[SweepItem]:
    """Expand a sweep description into concrete scenarios.

    ``spec`` keys: ``base`` (experiment dict), ``paths`` (list of path dicts
    or kind names), ``controllers`` (list of ``[high, low]``),
    ``disturbances`` (list of ``{label, wind, seeds?}``) and optional
    ``overrides`` (list of ``{label, ...experiment keys}``).
    """
    base = dict(spec.get("base", {}))
    items: list[SweepItem] = []
    paths = spec.get("paths") or [base.get("path", {"kind": "circle"})]
    controllers = spec.get("controllers") or [[base.get("high_level", "mpfc"), base.get("low_level", "lb-fblc")]]
    disturbances = spec.get("disturbances") or [{"label": "none", "wind": {"mode": "none"}}]
    overrides = spec.get("overrides") or [{"label": ""}]
    for ov in overrides:
        ov = dict(ov)
        ov_label = ov.pop("label", "")
        for high, low in controllers:
            for dist in disturbances:
                seeds = dist.get("seeds", [dist.get("wind", {}).get("seed", 0)])
                for p in paths:
                    pdict = {"kind": p} if isinstance(p, str) else dict(p)
                    for seed in seeds:
                        data = copy.deepcopy(base)
                        for key, value in copy.deepcopy(ov).items():
                            if isinstance(value, dict) and isinstance(data.get(key), dict):
                                data[key] = {**data[key], **value}
                            else:
                                data[key] = value
                        data["high_level"], data["low_level"] = high, low
                        data["path"] = pdict
                        data["wind"] = {**dist.get("wind", {}), "seed": int(seed)}
                        group = "|".join(x for x in (ov_label, high, low, dist["label"]) if x)
                        sid = f"{group}|{pdict['kind']}|s{seed}"
                        data["name"] = sid
                        items.append(SweepItem(sid, ov_label, dist["label"], ExperimentConfig.from_dict(data)))
    return sorted(items, key=lambda it: it.id)


def load_sweep(path: str | Path) -> dict[str, Any]:
    """Load a sweep file; a ``base_file`` key names an experiment file
    (relative to the sweep file) whose contents seed ``base``."""
    path = Path(path)
    spec = load_yaml(path)
    base_file = spec.pop("base_file", None)
    if base_file is not None:
        spec["base"] = {**load_yaml(path.parent / base_file), **spec.get("base", {})}
    return spec
