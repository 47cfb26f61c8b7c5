"""Command-line entry point: ``iwies {train,incremental,experiment,timing}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .checkpoint import CheckpointError, write_checkpoint
from .config import ConfigError, ExperimentConfig, load_config
from .environments import SamplingError
from .es_engine import PhaseResult, continue_incremental, parse_method, train_from_scratch
from .harness import (
    CSV_COLUMNS,
    SHARED,
    DeterminismError,
    _rows,
    phase_tasks,
    run_experiment,
    run_seed,
    timing_sweep,
)
from .parallel_eval import ProtocolError, WorkerPool

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DETERMINISM = 4
EXIT_RUNTIME = 5

log = logging.getLogger("iwies")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int, help="master seed (es.master_seed)")
    p.add_argument("--workers", type=int, help="evaluation workers (es.workers)")
    p.add_argument("--task", choices=["case1", "case2", "puddle"])
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--generations", type=int, help="generations for every phase, phase 1 included")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iwies", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="optimise a single phase from scratch")
    _add_common(p)

    p = sub.add_parser("incremental", help="multi-phase run with one method")
    _add_common(p)
    p.add_argument("--method", default="iwies-mix",
                   choices=["fs", "ca", "iwies-n", "iwies-qu", "iwies-mix"])
    p.add_argument("--phases", type=int)

    p = sub.add_parser("experiment", help="repeated paired comparison of methods")
    _add_common(p)
    p.add_argument("--method", help="comma-separated method list (default: all)")
    p.add_argument("--runs", type=int)

    p = sub.add_parser("timing", help="wall-clock sweep over worker counts")
    _add_common(p)
    p.add_argument("--worker-counts", help="comma-separated, e.g. 1,2,4")
    p.add_argument("--repeats", type=int, default=1)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides = {}
    if args.task:
        overrides["task"] = args.task
    if args.seed is not None:
        overrides["es.master_seed"] = str(args.seed)
    if args.workers is not None:
        overrides["es.workers"] = str(args.workers)
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    if args.generations is not None:
        overrides["generations"] = str(args.generations)
        overrides["phase1_generations"] = str(args.generations)
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = str(args.runs)
    if getattr(args, "phases", None) is not None:
        overrides["phases"] = str(args.phases)
    if args.command == "experiment" and args.method:
        overrides["methods"] = args.method
    if args.command == "timing" and args.worker_counts:
        overrides["timing.worker_counts"] = args.worker_counts
    return load_config(args.config, overrides)


def _write_phase_csv(path: Path, labelled: list[tuple[str, int, PhaseResult]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for label, phase, res in labelled:
            w.writerows(_rows("0", label, phase, res))


def cmd_train(cfg: ExperimentConfig) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    task = phase_tasks(replace(cfg, phases=1), 0)[0]
    es = replace(cfg.es, master_seed=run_seed(cfg.es.master_seed, 0),
                 generations=cfg.first_phase_generations)
    res = train_from_scratch(task, es)
    _write_phase_csv(out / "generations.csv", [(SHARED, 1, res)])
    (out / "tasks.txt").write_text(f"run=0 phase=1 {task.to_record()}\n")
    write_checkpoint(res.theta_star, es.arch, out / "theta.ckpt")
    print(f"task: {task.to_record()}")
    print(f"average return {res.average_return:.4f}, final unperturbed return "
          f"{res.reports[-1].unperturbed_return if res.reports else float('nan'):.4f}")
    print(f"wrote {out / 'generations.csv'} and {out / 'theta.ckpt'}")


def cmd_incremental(cfg: ExperimentConfig, method: str) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = phase_tasks(cfg, 0)
    es = replace(cfg.es, master_seed=run_seed(cfg.es.master_seed, 0))
    chosen = parse_method(method)
    with WorkerPool(es.workers, es.backend) as pool:
        first = train_from_scratch(tasks[0], replace(es, generations=cfg.first_phase_generations), pool=pool)
        later = continue_incremental(first, tasks[1:], replace(es, generations=cfg.generations_per_phase),
                                     chosen, pool=pool)
    results = [first, *later]
    labelled = [(SHARED if k == 0 else chosen.label, k + 1, r) for k, r in enumerate(results)]
    _write_phase_csv(out / "generations.csv", labelled)
    (out / "tasks.txt").write_text(
        "".join(f"run=0 phase={k} {t.to_record()}\n" for k, t in enumerate(tasks, start=1))
    )
    for k, res in enumerate(results, start=1):
        write_checkpoint(res.theta_star, es.arch, out / f"theta_phase{k}.ckpt")
        print(f"phase {k}: average return {res.average_return:.4f}, "
              f"gen-0 return {res.jumpstart_return:.4f}")


def cmd_experiment(cfg: ExperimentConfig) -> None:
    summary = run_experiment(cfg)
    print(summary.table())
    print(f"wrote results to {cfg.output_dir}")


def cmd_timing(cfg: ExperimentConfig, repeats: int) -> None:
    table = timing_sweep(cfg, cfg.worker_counts, repeats=repeats)
    print(table.format())
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "timing_sweep.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("method", "workers", "seconds"))
        for (m, workers), sec in table.seconds.items():
            w.writerow((m, workers, f"{sec:.4f}"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _config_from_args(args)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "incremental":
            cmd_incremental(cfg, args.method)
        elif args.command == "experiment":
            cmd_experiment(cfg)
        else:
            cmd_timing(cfg, args.repeats)
    except (ConfigError, CheckpointError) as exc:
        print(f"iwies: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"iwies: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DeterminismError as exc:
        print(f"iwies: determinism violation: {exc}", file=sys.stderr)
        return EXIT_DETERMINISM
    except (SamplingError, ProtocolError, ValueError) as exc:
        print(f"iwies: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
