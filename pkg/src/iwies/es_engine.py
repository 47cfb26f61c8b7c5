"""NES optimisation loop with instance-weighted gradient estimates.

``train_from_scratch`` is the plain-NES first phase (and the FS baseline);
``adapt`` is the weighted incremental phase started from a previous optimum;
``run_incremental`` chains phases over a sequence of tasks.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .behavior import BehaviorCharacterization
from .environments import TaskSpec
from .parallel_eval import (
    ScalarPacket,
    SeedSchedule,
    WorkerPool,
    accumulate_update,
    evaluate_instance,
    evaluate_population,
    reconstruct_and_update,
)
from .policy_net import MlpArchitecture, init_random, param_count
from .weighting import (
    Metric,
    PopulationMetrics,
    WeightingConfig,
    anneal,
    compute_weights,
    weight_entropy,
)

NAV_ARCH = MlpArchitecture(input_dim=2, hidden=(128, 128), output_dim=2, action_clip=0.1)

SHAPINGS = ("none", "centered", "centered_rank", "rank")


class Method(str, Enum):
    FS = "fs"
    CA = "ca"
    IWIES_N = "iwies-n"
    IWIES_QU = "iwies-qu"
    IWIES_MIX = "iwies-mix"

    @property
    def metric(self) -> Metric:
        return _METHOD_METRIC[self]

    @property
    def label(self) -> str:
        return _METHOD_LABEL[self]


_METHOD_METRIC = {
    Method.FS: Metric.UNIFORM,
    Method.CA: Metric.UNIFORM,
    Method.IWIES_N: Metric.NOVELTY,
    Method.IWIES_QU: Metric.QUALITY,
    Method.IWIES_MIX: Metric.MIX,
}
_METHOD_LABEL = {
    Method.FS: "FS",
    Method.CA: "CA",
    Method.IWIES_N: "IW-IES-N",
    Method.IWIES_QU: "IW-IES-Qu",
    Method.IWIES_MIX: "IW-IES-Mix",
}


def parse_method(name: str) -> Method:
    key = name.strip().lower()
    for method in Method:
        if key in (method.value, method.label.lower()):
            return method
    raise ValueError(f"unknown method {name!r}")


@dataclass(frozen=True)
class EsConfig:
    m: int = 16
    sigma: float = 0.05
    alpha: float = 0.05
    generations: int = 200
    weighting: WeightingConfig = field(default_factory=WeightingConfig)
    master_seed: int = 0
    arch: MlpArchitecture = NAV_ARCH
    workers: int = 1
    backend: str = "thread"
    fitness_shaping: str = "none"

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"population size must be >= 1, got {self.m}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.generations < 0:
            raise ValueError(f"generations must be >= 0, got {self.generations}")
        if self.fitness_shaping not in SHAPINGS:
            raise ValueError(f"fitness_shaping must be one of {SHAPINGS}")


@dataclass(frozen=True)
class GenerationReport:
    generation: int
    unperturbed_return: float
    mean_fitness: float
    rho: float
    weight_min: float
    weight_max: float
    weight_entropy: float
    wall_ms: float


@dataclass
class PhaseResult:
    theta_star: np.ndarray
    bc_star: BehaviorCharacterization
    reports: list[GenerationReport]

    @property
    def average_return(self) -> float:
        if not self.reports:
            return math.nan
        return float(np.mean([r.unperturbed_return for r in self.reports]))

    @property
    def jumpstart_return(self) -> float:
        return self.reports[0].unperturbed_return if self.reports else math.nan


def estimate_gradient(fitness, weights, epsilons, sigma: float) -> np.ndarray:
    """Weighted score-function estimate ``sum_i w_i f_i eps_i / (m sigma)``."""
    eps = np.asarray(epsilons, dtype=np.float64)
    f = np.asarray(fitness, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if eps.ndim != 2 or not (len(f) == len(w) == eps.shape[0]):
        raise ValueError(
            f"dimension mismatch: fitness {f.shape}, weights {w.shape}, eps {eps.shape}"
        )
    m, d = eps.shape
    coeffs = [float(wi) * float(fi) for wi, fi in zip(w, f)]
    return accumulate_update(coeffs, lambda i: eps[i], d, m, sigma)


def shape_fitness(fitness: Sequence[float], kind: str) -> list[float]:
    """Optional fitness transform applied before the update.

    ``centered`` subtracts the population mean; ``centered_rank`` maps ranks
    onto [-0.5, 0.5] and ``rank`` onto [0, 1] (ties share the average rank).
    With ``rank`` every utility is nonnegative, so a large instance weight
    always pulls the update toward that instance.
    """
    f = np.asarray(fitness, dtype=np.float64)
    if kind == "none":
        return f.tolist()
    if kind == "centered":
        return (f - f.mean()).tolist()
    if kind in ("centered_rank", "rank"):
        if f.size == 1:
            return [0.5 if kind == "rank" else 0.0]
        order = np.argsort(f, kind="stable")
        ranks = np.empty(f.size)
        ranks[order] = np.arange(f.size, dtype=np.float64)
        for value in np.unique(f):
            tie = f == value
            ranks[tie] = ranks[tie].mean()
        scaled = ranks / (f.size - 1)
        return (scaled if kind == "rank" else scaled - 0.5).tolist()
    raise ValueError(f"unknown fitness shaping {kind!r}")


def es_step(
    theta: np.ndarray,
    config: EsConfig,
    generation: int,
    rho: float,
    task: TaskSpec,
    bc_prev_opt: BehaviorCharacterization | None = None,
    *,
    schedule: SeedSchedule | None = None,
    pool: WorkerPool | None = None,
) -> tuple[np.ndarray, GenerationReport]:
    """One generation: evaluate, exchange scalars, weight, update.

    The report's ``unperturbed_return`` is for ``theta`` before the update.
    """
    t0 = time.perf_counter()
    weighting = config.weighting
    if weighting.uses_novelty and bc_prev_opt is None:
        raise ValueError(f"{weighting.metric.value} weighting needs the previous optimum's behavior")
    schedule = schedule or SeedSchedule(config.master_seed)
    packets = evaluate_population(
        config.arch, theta, config.sigma, generation, config.m, task,
        bc_prev_opt if weighting.uses_novelty else None, schedule,
        workers=config.workers, pool=pool,
    )
    new_theta, weights = _update(theta, packets, config, generation, rho, schedule)
    unperturbed = evaluate_instance(task, config.arch, theta, False)[0]
    report = GenerationReport(
        generation=generation,
        unperturbed_return=unperturbed,
        mean_fitness=float(np.mean([p.fitness for p in packets])),
        rho=rho,
        weight_min=float(weights.min()),
        weight_max=float(weights.max()),
        weight_entropy=weight_entropy(weights),
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )
    return new_theta, report


def _update(theta, packets: list[ScalarPacket], config: EsConfig, generation: int,
            rho: float, schedule: SeedSchedule):
    metrics = PopulationMetrics(
        novelty=[p.novelty for p in packets], quality=[p.quality for p in packets]
    )
    weights = compute_weights(metrics, config.weighting, rho)
    fitness = shape_fitness([p.fitness for p in packets], config.fitness_shaping)
    new_theta = reconstruct_and_update(
        theta, packets, weights.tolist(), config.sigma, config.alpha, generation,
        schedule, fitness=fitness,
    )
    return new_theta, weights


def _finish(theta: np.ndarray, task: TaskSpec, config: EsConfig, reports) -> PhaseResult:
    bc = evaluate_instance(task, config.arch, theta, True)[1]
    return PhaseResult(theta_star=theta, bc_star=bc, reports=reports)


def _run_phase(theta, task, config, bc_prev, schedule, pool, rho0, delta_rho):
    reports = []
    rho = rho0
    for g in range(config.generations):
        theta, report = es_step(theta, config, g, rho, task, bc_prev, schedule=schedule, pool=pool)
        reports.append(report)
        rho = anneal(rho, delta_rho)
    return _finish(theta, task, config, reports)


def train_from_scratch(
    task: TaskSpec,
    config: EsConfig,
    *,
    phase: int = 1,
    pool: WorkerPool | None = None,
    theta0: np.ndarray | None = None,
) -> PhaseResult:
    """Plain NES from a random initialisation (uniform weights, no temperature).

    ``theta0`` replaces the seeded random initialisation when given.
    """
    plain = replace(config, weighting=WeightingConfig(Metric.UNIFORM))
    if theta0 is None:
        theta = init_random(config.arch, [config.master_seed, phase])
    else:
        theta = np.array(theta0, dtype=np.float64)
    schedule = SeedSchedule(config.master_seed, stream=phase)
    return _run_phase(theta, task, plain, None, schedule, pool, math.nan, 0.0)


def adapt(
    theta_prev: np.ndarray,
    bc_prev: BehaviorCharacterization,
    task: TaskSpec,
    config: EsConfig,
    *,
    phase: int = 2,
    pool: WorkerPool | None = None,
) -> PhaseResult:
    """Weighted NES started from ``theta_prev``; temperature grows by ``delta_rho`` per generation."""
    theta = np.array(theta_prev, dtype=np.float64)
    if theta.shape != (param_count(config.arch),):
        raise ValueError(
            f"previous optimum has shape {theta.shape}, policy needs ({param_count(config.arch)},)"
        )
    schedule = SeedSchedule(config.master_seed, stream=phase)
    w = config.weighting
    return _run_phase(theta, task, config, bc_prev, schedule, pool, w.rho0, w.delta_rho)


def config_for(config: EsConfig, method: Method) -> EsConfig:
    return replace(config, weighting=replace(config.weighting, metric=method.metric))


def continue_incremental(
    first: PhaseResult,
    tasks: Sequence[TaskSpec],
    config: EsConfig,
    method: Method,
    *,
    first_phase: int = 2,
    pool: WorkerPool | None = None,
) -> list[PhaseResult]:
    """Phases after a given one: FS restarts, every other method adapts."""
    method = Method(method)
    cfg = config_for(config, method)
    results = []
    prev = first
    for k, task in enumerate(tasks):
        phase = first_phase + k
        if method is Method.FS:
            prev = train_from_scratch(task, cfg, phase=phase, pool=pool)
        else:
            prev = adapt(prev.theta_star, prev.bc_star, task, cfg, phase=phase, pool=pool)
        results.append(prev)
    return results


def run_incremental(tasks: Sequence[TaskSpec], config: EsConfig, method: Method | str) -> list[PhaseResult]:
    if not tasks:
        raise ValueError("need at least one task")
    method = parse_method(method) if isinstance(method, str) else method
    with WorkerPool(config.workers, config.backend) as pool:
        first = train_from_scratch(tasks[0], config, phase=1, pool=pool)
        return [first, *continue_incremental(first, tasks[1:], config, method, pool=pool)]
