"""Seed-synchronised population evaluation.

Every party holding a :class:`SeedSchedule` can regenerate any perturbation
from ``(stream, generation, index)`` alone, so workers only ever exchange
:class:`ScalarPacket` values. Results are independent of the number of workers
and of completion order.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .behavior import BehaviorCharacterization, bc_nav, distance
from .environments import TaskSpec, rollout
from .policy_net import MlpArchitecture, perturb

_U64 = 2**64


class ProtocolError(RuntimeError):
    """Raised when the gathered packets do not form a complete population."""


@dataclass(frozen=True)
class SeedSchedule:
    """Maps ``(generation, index)`` to an independent Philox stream.

    ``master_seed`` is the Philox key; ``stream`` (typically the phase
    number), the instance index and the generation occupy the three high
    counter words, which makes the mapping injective. The low word is left for
    the generator's own draws.
    """

    master_seed: int
    stream: int = 0

    def generator(self, generation: int, index: int) -> np.random.Generator:
        if generation < 0 or index < 0:
            raise ValueError("generation and index must be non-negative")
        counter = [0, self.stream % _U64, index % _U64, generation % _U64]
        key = self.master_seed % (2**128)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derive_perturbation(schedule: SeedSchedule, generation: int, worker_index: int, d: int) -> np.ndarray:
    return schedule.generator(generation, worker_index).standard_normal(d)


@dataclass(frozen=True)
class ScalarPacket:
    generation: int
    worker_index: int
    fitness: float
    novelty: float
    quality: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.fitness, self.novelty, self.quality)):
            raise ValueError(f"non-finite packet {self}")

    def to_text(self) -> str:
        return (f"gen={self.generation} worker={self.worker_index} "
                f"f={self.fitness!r} n={self.novelty!r} q={self.quality!r}")

    @classmethod
    def from_text(cls, line: str) -> "ScalarPacket":
        kv = dict(item.split("=", 1) for item in line.split())
        return cls(int(kv["gen"]), int(kv["worker"]), float(kv["f"]),
                   float(kv["n"]), float(kv["q"]))


def evaluate_instance(task, arch: MlpArchitecture, z: np.ndarray, want_bc: bool):
    """Fitness and (optionally) behavior characterization of one parameter vector.

    Navigation tasks are rolled out; any other task object must provide
    ``evaluate(z, want_bc) -> (fitness, bc)``.
    """
    if isinstance(task, TaskSpec):
        trace = rollout(task, arch, z)
        bc = bc_nav(trace, task.horizon) if want_bc else None
        return trace.episode_return, bc
    return task.evaluate(z, want_bc)


def _evaluate_shard(
    indices: Sequence[int],
    arch: MlpArchitecture,
    theta: np.ndarray,
    sigma: float,
    generation: int,
    task,
    bc_prev: BehaviorCharacterization | None,
    schedule: SeedSchedule,
) -> list[ScalarPacket]:
    packets = []
    for i in indices:
        eps = derive_perturbation(schedule, generation, i, theta.shape[0])
        fitness, bc = evaluate_instance(task, arch, perturb(theta, eps, sigma), bc_prev is not None)
        novelty = 0.0 if bc_prev is None else distance(bc, bc_prev)
        packets.append(ScalarPacket(generation, i, fitness, novelty, fitness))
    return packets


def _noop(x):
    return x


class WorkerPool:
    """A fixed set of evaluation workers; ``workers == 1`` runs inline.

    ``backend`` is ``"thread"`` or ``"process"``. Threads share the
    interpreter lock, so wall-clock speedups need the process backend.
    """

    def __init__(self, workers: int = 1, backend: str = "thread"):
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        if backend not in ("thread", "process"):
            raise ValueError(f"unknown backend {backend!r}")
        self.workers = workers
        self.backend = backend
        self._executor: Executor | None = None

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    @property
    def executor(self) -> Executor:
        if self._executor is None:
            if self.backend == "process":
                self._executor = ProcessPoolExecutor(self.workers)
            else:
                self._executor = ThreadPoolExecutor(self.workers)
        return self._executor

    def warm(self) -> None:
        """Start every worker now rather than on first use."""
        if self.workers > 1:
            list(self.executor.map(_noop, range(self.workers)))

    def map_shards(self, shards: list[list[int]], *args) -> list[ScalarPacket]:
        if self.workers == 1:
            return [p for shard in shards for p in _evaluate_shard(shard, *args)]
        futures = [self.executor.submit(_evaluate_shard, shard, *args) for shard in shards if shard]
        return [p for fut in futures for p in fut.result()]


def evaluate_population(
    arch: MlpArchitecture,
    theta: np.ndarray,
    sigma: float,
    generation: int,
    m: int,
    task: TaskSpec,
    bc_prev: BehaviorCharacterization | None,
    schedule: SeedSchedule,
    workers: int = 1,
    pool: WorkerPool | None = None,
) -> list[ScalarPacket]:
    """Evaluate the ``m`` perturbed instances; packets come back sorted by index.

    Instance ``i`` is handled by worker ``i % workers``. Novelty is measured
    against ``bc_prev`` (0 when absent); quality is the episode return.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if pool is not None:
        workers = pool.workers
    shards = [list(range(k, m, workers)) for k in range(workers)]
    args = (arch, theta, sigma, generation, task, bc_prev, schedule)
    if pool is None:
        with WorkerPool(workers) as tmp:
            packets = tmp.map_shards(shards, *args)
    else:
        packets = pool.map_shards(shards, *args)
    return sorted(packets, key=lambda p: p.worker_index)


def accumulate_update(coeffs: Sequence[float], eps_of, d: int, m: int, sigma: float) -> np.ndarray:
    """``(1 / (m * sigma)) * sum_i coeffs[i] * eps_of(i)`` summed in index order."""
    total = np.zeros(d)
    for i, c in enumerate(coeffs):
        total += c * eps_of(i)
    return total / (m * sigma)


def check_packets(packets: Sequence[ScalarPacket], m: int, generation: int | None = None) -> None:
    if len(packets) != m:
        raise ProtocolError(f"expected {m} packets, got {len(packets)}")
    for i, p in enumerate(packets):
        if p.worker_index != i:
            raise ProtocolError(f"missing or out-of-order packet for worker {i}")
        if generation is not None and p.generation != generation:
            raise ProtocolError(f"packet from generation {p.generation}, expected {generation}")


def reconstruct_and_update(
    theta: np.ndarray,
    packets: Sequence[ScalarPacket],
    weights: Sequence[float],
    sigma: float,
    alpha: float,
    generation: int,
    schedule: SeedSchedule,
    fitness: Sequence[float] | None = None,
) -> np.ndarray:
    """Rebuild each perturbation from the schedule and apply the weighted step.

    ``fitness`` overrides the packet fitness values (e.g. after shaping).
    """
    m = len(weights)
    check_packets(packets, m, generation)
    f = [p.fitness for p in packets] if fitness is None else list(fitness)
    d = theta.shape[0]
    coeffs = [w * fi for w, fi in zip(weights, f)]
    grad = accumulate_update(
        coeffs, lambda i: derive_perturbation(schedule, generation, i, d), d, m, sigma
    )
    return theta + alpha * grad


def default_workers() -> int:
    return os.cpu_count() or 1
