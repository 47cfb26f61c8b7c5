"""Experiment orchestration: paired method comparisons and timing sweeps.

For each run a phase-1 task is sampled and optimised once; every method then
adapts from that shared optimum on the same later tasks with the same
perturbation seeds, so per-run differences come from the adaptation rule only.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .checkpoint import write_checkpoint
from .config import ExperimentConfig
from .environments import TaskSpec, sample_task
from .es_engine import (
    EsConfig,
    Method,
    PhaseResult,
    adapt,
    config_for,
    continue_incremental,
    train_from_scratch,
)
from .parallel_eval import WorkerPool

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "run_id", "method", "phase", "generation", "unperturbed_return",
    "mean_fitness", "rho", "weight_min", "weight_max",
)
SHARED = "shared"


class DeterminismError(RuntimeError):
    pass


@dataclass
class MethodSummary:
    method: str
    average_returns: list[float] = field(default_factory=list)
    jumpstarts: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def mean_average_return(self) -> float:
        return _mean(self.average_returns)

    @property
    def stderr(self) -> float:
        return standard_error(self.average_returns)

    @property
    def mean_jumpstart(self) -> float:
        return _mean(self.jumpstarts)

    @property
    def jumpstart_stderr(self) -> float:
        return standard_error(self.jumpstarts)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "mean_average_return": self.mean_average_return,
            "stderr": self.stderr,
            "mean_jumpstart": self.mean_jumpstart,
            "jumpstart_stderr": self.jumpstart_stderr,
            "wall_seconds": self.wall_seconds,
            "average_returns": self.average_returns,
            "jumpstarts": self.jumpstarts,
        }


@dataclass
class RunSummary:
    config: ExperimentConfig
    methods: dict[str, MethodSummary]
    started: str = ""
    finished: str = ""
    complete: bool = True

    def table(self) -> str:
        head = f"{'method':<12}{'avg return':>14}{'± s.e.':>10}{'gen-0 return':>16}{'± s.e.':>10}{'wall s':>10}"
        lines = [head, "-" * len(head)]
        for s in self.methods.values():
            lines.append(
                f"{s.method:<12}{s.mean_average_return:>14.3f}{s.stderr:>10.3f}"
                f"{s.mean_jumpstart:>16.3f}{s.jumpstart_stderr:>10.3f}{s.wall_seconds:>10.1f}"
            )
        return "\n".join(lines)

    def as_dict(self) -> dict:
        cfg = self.config
        return {
            "task": cfg.task,
            "runs": cfg.runs,
            "trials": cfg.trials,
            "phases": cfg.phases,
            "generations_per_phase": cfg.generations_per_phase,
            "master_seed": cfg.es.master_seed,
            "complete": self.complete,
            "started": self.started,
            "finished": self.finished,
            "methods": [s.as_dict() for s in self.methods.values()],
        }


def _mean(values) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def standard_error(values) -> float:
    """Sample standard deviation over ``sqrt(n)``; NaN for fewer than two values."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return math.nan
    return float(v.std(ddof=1) / math.sqrt(v.size))


def pooled_stderr(a, b) -> float:
    """Standard error of the difference of two independent means."""
    return math.hypot(standard_error(a), standard_error(b))


def run_seed(master_seed: int, run: int, trial: int = 0) -> int:
    """Independent 64-bit ES seed for one (run, trial)."""
    ss = np.random.SeedSequence([master_seed % 2**64, run, trial])
    return int(ss.generate_state(1, np.uint64)[0])


def phase_tasks(cfg: ExperimentConfig, run: int) -> list[TaskSpec]:
    tasks = []
    for phase in range(1, cfg.phases + 1):
        region = cfg.goal_region_phase1 if phase == 1 else cfg.goal_region_phase2
        tasks.append(sample_task(
            cfg.variant, [cfg.es.master_seed % 2**64, run, phase], region,
            horizon=cfg.env.horizon, goal_tolerance=cfg.env.goal_tolerance,
            control_cost_coeff=cfg.env.control_cost_coeff,
        ))
    return tasks


def _fmt(v: float) -> str:
    return repr(float(v))


def _rows(run_id: str, method: str, phase: int, result: PhaseResult):
    for r in result.reports:
        yield (run_id, method, phase, r.generation, _fmt(r.unperturbed_return),
               _fmt(r.mean_fitness), _fmt(r.rho), _fmt(r.weight_min), _fmt(r.weight_max))


def _timing_rows(run_id: str, method: str, phase: int, result: PhaseResult):
    for r in result.reports:
        yield (run_id, method, phase, r.generation, f"{r.wall_ms:.3f}")


def _method_order(cfg: ExperimentConfig) -> dict[str, int]:
    order = {SHARED: -1}
    order.update({m.label: k for k, m in enumerate(cfg.methods)})
    return order


def run_experiment(cfg: ExperimentConfig) -> RunSummary:
    """Run the paired multi-method protocol and write CSV/summary files.

    Files in ``cfg.output_dir``: ``generations.csv`` (deterministic body),
    ``timing.csv`` (per-generation wall time), ``tasks.txt`` (replayable task
    records), ``summary.txt`` and ``summary.json``. With
    ``cfg.save_checkpoints`` the final parameters of every run and method go
    to ``checkpoints/``.
    """
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    summary = RunSummary(
        config=cfg,
        methods={m.label: MethodSummary(m.label) for m in cfg.methods},
        started=datetime.now(timezone.utc).isoformat(),
    )
    order = _method_order(cfg)
    gen_path, timing_path, tasks_path = out / "generations.csv", out / "timing.csv", out / "tasks.txt"
    with open(gen_path, "w", newline="") as gen_f, open(timing_path, "w", newline="") as tim_f, \
            open(tasks_path, "w") as task_f, WorkerPool(cfg.es.workers, cfg.es.backend) as pool:
        gen_csv, tim_csv = csv.writer(gen_f), csv.writer(tim_f)
        gen_csv.writerow(CSV_COLUMNS)
        tim_csv.writerow(("run_id", "method", "phase", "generation", "wall_ms"))
        try:
            for run in range(cfg.runs):
                _run_one(cfg, run, pool, summary, order, gen_csv, tim_csv, task_f)
                gen_f.flush()
        except BaseException:
            summary.complete = False
            gen_f.write("# INCOMPLETE: run aborted\n")
            _write_summary(out, summary)
            raise
    summary.finished = datetime.now(timezone.utc).isoformat()
    _write_summary(out, summary)
    return summary


def _run_one(cfg, run, pool, summary, order, gen_csv, tim_csv, task_f) -> None:
    tasks = phase_tasks(cfg, run)
    for phase, task in enumerate(tasks, start=1):
        task_f.write(f"run={run} phase={phase} {task.to_record()}\n")
    rows, timing = [], []
    per_method: dict[str, list[list[float]]] = {m.label: [[], []] for m in cfg.methods}
    for trial in range(cfg.trials):
        run_id = str(run) if cfg.trials == 1 else f"{run}:{trial}"
        es = replace(cfg.es, master_seed=run_seed(cfg.es.master_seed, run, trial))
        first = train_from_scratch(
            tasks[0], replace(es, generations=cfg.first_phase_generations), phase=1, pool=pool
        )
        rows.extend(_rows(run_id, SHARED, 1, first))
        _save(cfg, run_id, SHARED, first)
        timing.extend(_timing_rows(run_id, SHARED, 1, first))
        log.info("run %s phase 1 final return %.3f", run_id, first.reports[-1].unperturbed_return
                 if first.reports else math.nan)
        for method in cfg.methods:
            t0 = time.perf_counter()
            later = continue_incremental(
                first, tasks[1:], replace(es, generations=cfg.generations_per_phase),
                method, pool=pool,
            )
            summary.methods[method.label].wall_seconds += time.perf_counter() - t0
            for phase, res in enumerate(later, start=2):
                rows.extend(_rows(run_id, method.label, phase, res))
                timing.extend(_timing_rows(run_id, method.label, phase, res))
            if later:
                _save(cfg, run_id, method.label, later[-1])
                per_method[method.label][0].append(float(np.mean([r.average_return for r in later])))
                per_method[method.label][1].append(later[0].jumpstart_return)
            log.info("run %s %s average return %.3f", run_id, method.label,
                     per_method[method.label][0][-1] if later else math.nan)
    for label, (avgs, jumps) in per_method.items():
        if avgs:
            summary.methods[label].average_returns.append(float(np.mean(avgs)))
            summary.methods[label].jumpstarts.append(float(np.mean(jumps)))

    def key(row):
        return (row[2], row[3], order[row[1]], row[0])

    gen_csv.writerows(sorted(rows, key=key))
    tim_csv.writerows(sorted(timing, key=key))


def _save(cfg: ExperimentConfig, run_id: str, label: str, result: PhaseResult) -> None:
    if not cfg.save_checkpoints:
        return
    folder = Path(cfg.output_dir) / "checkpoints"
    folder.mkdir(exist_ok=True)
    write_checkpoint(result.theta_star, cfg.es.arch, folder / f"run{run_id.replace(':', '-')}_{label}.ckpt")


def _write_summary(out: Path, summary: RunSummary) -> None:
    try:
        (out / "summary.txt").write_text(
            f"task={summary.config.task} runs={summary.config.runs} "
            f"complete={summary.complete} finished={summary.finished}\n"
            + (summary.table() if all(s.average_returns for s in summary.methods.values()) else "")
            + "\n"
        )
        (out / "summary.json").write_text(json.dumps(summary.as_dict(), indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write summary in {out}: {exc}") from exc


@dataclass
class TimingTable:
    worker_counts: tuple[int, ...]
    methods: tuple[str, ...]
    seconds: dict[tuple[str, int], float]

    def format(self) -> str:
        head = f"{'method':<12}" + "".join(f"{f'{w} workers':>12}" for w in self.worker_counts)
        lines = [head, "-" * len(head)]
        for m in self.methods:
            lines.append(f"{m:<12}" + "".join(f"{self.seconds[m, w]:>12.2f}" for w in self.worker_counts))
        return "\n".join(lines)


def timing_sweep(
    cfg: ExperimentConfig,
    worker_counts,
    methods=(Method.CA, Method.IWIES_N, Method.IWIES_QU, Method.IWIES_MIX),
    repeats: int = 1,
) -> TimingTable:
    """Time the same seeded adaptation workload at several worker counts.

    A phase-1 optimum is computed once; each method then adapts from it on the
    phase-2 task. Final parameters must agree bit-for-bit across worker counts.
    With ``repeats > 1`` the fastest repetition is kept.
    """
    worker_counts = tuple(worker_counts)
    if not worker_counts:
        raise ValueError("worker_counts must be non-empty")
    tasks = phase_tasks(replace(cfg, phases=2), 0)
    es = replace(cfg.es, master_seed=run_seed(cfg.es.master_seed, 0))
    first = train_from_scratch(tasks[0], replace(es, generations=cfg.first_phase_generations))
    phase2 = replace(es, generations=cfg.generations_per_phase)
    seconds: dict[tuple[str, int], float] = {}
    reference: dict[str, bytes] = {}
    for workers in worker_counts:
        with WorkerPool(workers, cfg.es.backend) as pool:
            pool.warm()
            for method in methods:
                best = math.inf
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    res = adapt(first.theta_star, first.bc_star, tasks[1],
                                config_for(replace(phase2, workers=workers), method), pool=pool)
                    best = min(best, time.perf_counter() - t0)
                seconds[method.label, workers] = best
                digest = res.theta_star.tobytes()
                if reference.setdefault(method.label, digest) != digest:
                    raise DeterminismError(
                        f"{method.label}: final parameters differ with {workers} workers"
                    )
    return TimingTable(worker_counts, tuple(m.label for m in methods), seconds)
