"""Run configuration: dataclasses, YAML loading and ``key=value`` overrides.

Defaults reproduce the published simulation setup, so an empty config file is
the Profile 1 experiment.
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .association import GnnConfig, TrackerParams
from .imm import GateConfig, ImmConfig
from .models import DEFAULT_PAD_VARIANCE, ca_model, cv_model
from .sim import PROFILES, NoiseProfile, ScenarioConfig, Segment, TargetSpec
from .tpm_adapt import TpmConfig

TRACKERS = ("safe_imm", "imm_mixture_only", "kf_cv", "kf_ca")
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


@dataclass
class ModelParams:
    q_cv: float = 0.5
    q_ca: float = 0.2
    pad_variance: float = DEFAULT_PAD_VARIANCE


@dataclass
class MetricParams:
    ospa_c: float = 2.0
    ospa_p: float = 1.0
    match_radius: float = 2.0


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    tracker: str = "safe_imm"
    likelihood: str = "student_t"
    nu: float = 5.0
    nu_jam: float = 2.0
    tpm: TpmConfig = field(default_factory=TpmConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    gnn: GnnConfig = field(default_factory=GnnConfig)
    models: ModelParams = field(default_factory=ModelParams)
    metrics: MetricParams = field(default_factory=MetricParams)
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        if self.tracker not in TRACKERS:
            raise ConfigError(f"tracker: expected one of {TRACKERS}, got {self.tracker!r}")
        if self.likelihood not in ("gaussian", "student_t"):
            raise ConfigError(f"likelihood: expected 'gaussian' or 'student_t', got {self.likelihood!r}")

    def imm_config(self) -> ImmConfig:
        gate = dataclasses.replace(self.gate, enabled=self.gate.enabled and self.tracker == "safe_imm")
        return ImmConfig(gate=gate, tpm=self.tpm, likelihood=self.likelihood, nu=self.nu,
                         pad_variance=self.models.pad_variance)

    def tracker_params(self) -> TrackerParams:
        cv, ca = cv_model(self.models.q_cv, 0), ca_model(self.models.q_ca, 1)
        imm = self.imm_config()
        if self.tracker == "kf_cv":
            models = (cv,)
        elif self.tracker == "kf_ca":
            models = (ca,)
        else:
            models = (cv, ca)
        if len(models) == 1:
            imm = dataclasses.replace(imm, tpm=dataclasses.replace(imm.tpm, enabled=False, pi_base=np.eye(1)))
        nu = self.nu_jam if (self.scenario.jamming and self.likelihood == "student_t") else None
        return TrackerParams(models=models, imm=imm, gnn=self.gnn, nu=nu)

    def with_seed(self, seed: int) -> "RunConfig":
        cfg = copy.deepcopy(self)
        cfg.scenario.seed = int(seed)
        return cfg


def _build(cls, data: Any, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown field")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _scenario(data: Any) -> ScenarioConfig:
    if data is None:
        return ScenarioConfig()
    if not isinstance(data, dict):
        raise ConfigError("scenario: expected a mapping")
    data = dict(data)
    preset = data.pop("preset", None)
    noise = data.pop("noise_profile", None)
    targets = data.pop("targets", None)
    if preset is not None:
        if preset not in PROFILES:
            raise ConfigError(f"scenario.preset: unknown preset {preset!r}; known: {sorted(PROFILES)}")
        profile = copy.copy(PROFILES[preset])
    else:
        profile = NoiseProfile()
    if noise is not None:
        if not isinstance(noise, dict):
            raise ConfigError("scenario.noise_profile: expected a mapping")
        for k, v in noise.items():
            if k not in ("sigma_pos", "sigma_vel"):
                raise ConfigError(f"scenario.noise_profile.{k}: unknown field")
            setattr(profile, k, float(v))
    cfg = _build(ScenarioConfig, data, "scenario")
    cfg.noise_profile = profile
    if targets is not None:
        cfg.targets = [_target(t, f"scenario.targets[{i}]") for i, t in enumerate(targets)]
    return cfg


def _target(data: Any, path: str) -> TargetSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    data = dict(data)
    segs = data.pop("segments", []) or []
    spec = _build(TargetSpec, data, path)
    spec.position = tuple(float(x) for x in spec.position)
    spec.velocity = tuple(float(x) for x in spec.velocity)
    if len(spec.position) != 3 or len(spec.velocity) != 3:
        raise ConfigError(f"{path}: position and velocity need three components")
    spec.segments = [_build(Segment, s, f"{path}.segments[{j}]") for j, s in enumerate(segs)]
    return spec


def _tpm(data: Any) -> TpmConfig:
    if isinstance(data, str):
        if data not in ("fixed", "adaptive"):
            raise ConfigError(f"tpm: expected 'fixed', 'adaptive' or a mapping, got {data!r}")
        return TpmConfig(enabled=data == "adaptive")
    return _build(TpmConfig, data, "tpm")


def config_from_dict(data: Optional[dict]) -> RunConfig:
    data = dict(data or {})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
    kwargs: dict[str, Any] = {}
    kwargs["scenario"] = _scenario(data.pop("scenario", None))
    kwargs["tpm"] = _tpm(data.pop("tpm", None))
    kwargs["gate"] = _build(GateConfig, data.pop("gate", None), "gate")
    kwargs["gnn"] = _build(GnnConfig, data.pop("gnn", None), "gnn")
    kwargs["models"] = _build(ModelParams, data.pop("models", None), "models")
    kwargs["metrics"] = _build(MetricParams, data.pop("metrics", None), "metrics")
    if "seeds" in data:
        seeds = data["seeds"]
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        elif isinstance(seeds, dict) and set(seeds) <= {"start", "count"}:
            seeds = list(range(int(seeds.get("start", 0)), int(seeds.get("start", 0)) + int(seeds["count"])))
        if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("seeds: expected an integer count, a list of integers or {start, count}")
        data["seeds"] = seeds
    try:
        return RunConfig(**kwargs, **data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` strings (values parsed as YAML scalars) to a raw config dict."""
    data = copy.deepcopy(data or {})
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {key}: cannot parse value {raw!r}") from exc
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if child is None or isinstance(child, str):
                # e.g. `tpm: fixed` shorthand being refined by tpm.alpha_max=...
                child = {} if child is None else {"enabled": child == "adaptive"}
                node[part] = child
            elif not isinstance(child, dict):
                raise ConfigError(f"override {key}: {part} is not a section")
            node = child
        node[parts[-1]] = value
    return data


def load_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{path}:{where} invalid YAML") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_config(path, overrides=None) -> RunConfig:
    return config_from_dict(apply_overrides(load_raw(path), overrides))
