"""Experiment configuration: flat ``key = value`` files with dotted keys.

An empty file is valid and runs Case I with the default hyperparameters. Keys
not listed in :data:`KEYS` are rejected so typos fail loudly.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .environments import FULL_ARENA, Region, Variant
from .es_engine import EsConfig, Method, parse_method
from .weighting import WeightingConfig

TASK_KINDS = {"case1": Variant.GOAL, "case2": Variant.OBSTACLE, "puddle": Variant.PUDDLE}

# Case I goals: the part of the first quadrant away from the start (0, 0).
CASE1_REGION = Region(0.2, 0.5, 0.2, 0.5)

# Per-family budgets and goal/obstacle regions.
TASK_DEFAULTS = {
    "case1": dict(generations=200, phase1_generations=500, region=CASE1_REGION),
    "case2": dict(generations=1000, phase1_generations=None, region=FULL_ARENA),
    "puddle": dict(generations=500, phase1_generations=None, region=FULL_ARENA),
}

ALL_METHODS = (Method.FS, Method.CA, Method.IWIES_N, Method.IWIES_QU, Method.IWIES_MIX)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    horizon: int = 100
    goal_tolerance: float = 0.01
    control_cost_coeff: float = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "case1"
    phases: int = 2
    generations_per_phase: int = 200
    phase1_generations: int | None = 500
    runs: int = 10
    trials: int = 1
    methods: tuple[Method, ...] = ALL_METHODS
    es: EsConfig = field(default_factory=lambda: EsConfig(
        alpha=0.001, fitness_shaping="rank", weighting=WeightingConfig(rho0=0.05, delta_rho=0.01)))
    env: EnvConfig = field(default_factory=EnvConfig)
    goal_region_phase1: Region = CASE1_REGION
    goal_region_phase2: Region = CASE1_REGION
    output_dir: Path = Path("iwies-out")
    worker_counts: tuple[int, ...] = (1, 2, 4)
    save_checkpoints: bool = False

    def __post_init__(self) -> None:
        if self.task not in TASK_KINDS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {sorted(TASK_KINDS)}")
        if self.runs < 1 or self.trials < 1 or self.phases < 1:
            raise ConfigError("runs, trials and phases must be >= 1")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        if self.generations_per_phase < 1:
            raise ConfigError("generations_per_phase must be >= 1")

    @property
    def variant(self) -> Variant:
        return TASK_KINDS[self.task]

    @property
    def first_phase_generations(self) -> int:
        if self.phase1_generations is None:
            return self.generations_per_phase
        return self.phase1_generations


def defaults_for(task: str) -> ExperimentConfig:
    if task not in TASK_DEFAULTS:
        raise ConfigError(f"unknown task {task!r}")
    d = TASK_DEFAULTS[task]
    return ExperimentConfig(
        task=task,
        generations_per_phase=d["generations"],
        phase1_generations=d["phase1_generations"],
        goal_region_phase1=d["region"],
        goal_region_phase2=d["region"],
    )


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


# key -> (section, field, parser); section is one of top/es/weighting/env.
KEYS = {
    "task": ("top", "task", str.strip),
    "phases": ("top", "phases", int),
    "generations": ("top", "generations_per_phase", int),
    "phase1_generations": ("top", "phase1_generations", int),
    "runs": ("top", "runs", int),
    "trials": ("top", "trials", int),
    "methods": ("top", "methods", lambda s: tuple(parse_method(m) for m in s.split(","))),
    "goal_region_phase1": ("top", "goal_region_phase1", Region.parse),
    "goal_region_phase2": ("top", "goal_region_phase2", Region.parse),
    "output_dir": ("top", "output_dir", Path),
    "timing.worker_counts": ("top", "worker_counts", _ints),
    "save_checkpoints": ("top", "save_checkpoints", _bool),
    "es.m": ("es", "m", int),
    "es.sigma": ("es", "sigma", float),
    "es.alpha": ("es", "alpha", float),
    "es.master_seed": ("es", "master_seed", int),
    "es.workers": ("es", "workers", int),
    "es.backend": ("es", "backend", str.strip),
    "es.fitness_shaping": ("es", "fitness_shaping", str.strip),
    "es.weighting.rho0": ("weighting", "rho0", float),
    "es.weighting.delta_rho": ("weighting", "delta_rho", float),
    "es.weighting.normalize_metrics": ("weighting", "normalize_metrics", _bool),
    "env.horizon": ("env", "horizon", int),
    "env.goal_tolerance": ("env", "goal_tolerance", float),
    "env.control_cost_coeff": ("env", "control_cost_coeff", float),
}


def parse_config_text(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str  # keep key case
    try:
        parser.read_string("[root]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return dict(parser["root"])


def apply_overrides(base: ExperimentConfig, values: dict[str, str]) -> ExperimentConfig:
    groups: dict[str, dict] = {"top": {}, "es": {}, "weighting": {}, "env": {}}
    for key, raw in values.items():
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        section, name, parse = KEYS[key]
        try:
            groups[section][name] = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    try:
        weighting = replace(base.es.weighting, **groups["weighting"])
        es = replace(base.es, weighting=weighting, **groups["es"])
        env = replace(base.env, **groups["env"])
        return replace(base, es=es, env=env, **groups["top"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Read a config file (optional) and apply ``overrides`` on top.

    The task key is resolved first so that per-task defaults (generation
    budget, sampling region) apply before the remaining keys.
    """
    values: dict[str, str] = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    values.update(overrides or {})
    task = values.get("task", "case1").strip()
    return apply_overrides(defaults_for(task), values)


def weighting_defaults() -> WeightingConfig:
    return ExperimentConfig().es.weighting
