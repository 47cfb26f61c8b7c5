import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from iwies.config import ExperimentConfig, load_config
from iwies.es_engine import Method
from iwies.harness import (
    CSV_COLUMNS,
    SHARED,
    DeterminismError,
    phase_tasks,
    pooled_stderr,
    run_experiment,
    standard_error,
    timing_sweep,
)


def tiny(tmp_path, **kw) -> ExperimentConfig:
    cfg = load_config(overrides={
        "es.m": "4", "generations": "3", "runs": "2",
        "methods": "fs,ca,iwies-mix", "output_dir": str(tmp_path),
    })
    return replace(cfg, **{"phase1_generations": None, **kw})


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


class TestStatistics:
    def test_standard_error(self):
        v = [1.0, 2.0, 3.0, 4.0]
        assert standard_error(v) == pytest.approx(np.std(v, ddof=1) / 2.0, rel=1e-15)
        assert math.isnan(standard_error([1.0]))

    def test_pooled(self):
        a, b = [0.0, 2.0], [1.0, 1.0, 4.0]
        assert pooled_stderr(a, b) == pytest.approx(math.hypot(standard_error(a), standard_error(b)))


class TestExperiment:
    def test_outputs_and_schema(self, tmp_path):
        cfg = tiny(tmp_path)
        summary = run_experiment(cfg)
        rows = read_rows(tmp_path / "generations.csv")
        assert tuple(rows[0]) == CSV_COLUMNS
        body = rows[1:]
        # 2 runs x (shared phase 1 + 3 methods) x 3 generations
        assert len(body) == 2 * 4 * 3
        assert {r[1] for r in body} == {SHARED, "FS", "CA", "IW-IES-Mix"}
        keys = [(int(r[0]), int(r[2]), int(r[3])) for r in body]
        assert keys == sorted(keys)
        data = json.loads((tmp_path / "summary.json").read_text())
        assert data["complete"] is True
        assert [m["method"] for m in data["methods"]] == ["FS", "CA", "IW-IES-Mix"]
        assert len(summary.methods["CA"].average_returns) == 2
        assert "avg return" in (tmp_path / "summary.txt").read_text()
        assert len((tmp_path / "tasks.txt").read_text().splitlines()) == 4

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_experiment(tiny(a, output_dir=a))
        run_experiment(tiny(b, output_dir=b))
        assert (a / "generations.csv").read_bytes() == (b / "generations.csv").read_bytes()

    def test_paired_start(self, tmp_path):
        # every continuing method starts phase 2 from the same parameters
        cfg = tiny(tmp_path, runs=1, methods=(Method.CA, Method.IWIES_MIX))
        run_experiment(cfg)
        body = read_rows(tmp_path / "generations.csv")[1:]
        gen0 = {r[1]: r[4] for r in body if r[2] == "2" and r[3] == "0"}
        assert gen0["CA"] == gen0["IW-IES-Mix"]

    def test_checkpoints(self, tmp_path):
        from iwies.checkpoint import load_checkpoint
        run_experiment(tiny(tmp_path, runs=1, save_checkpoints=True))
        names = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
        assert names == ["run0_CA.ckpt", "run0_FS.ckpt", "run0_IW-IES-Mix.ckpt", "run0_shared.ckpt"]
        theta, _ = load_checkpoint(tmp_path / "checkpoints" / "run0_CA.ckpt")
        assert np.all(np.isfinite(theta))

    def test_tasks_differ_between_phases_and_runs(self, tmp_path):
        cfg = tiny(tmp_path)
        t0, t1 = phase_tasks(cfg, 0), phase_tasks(cfg, 1)
        assert t0[0].goal != t0[1].goal
        assert t0[1].goal != t1[1].goal
        assert phase_tasks(cfg, 0) == t0

    def test_trials_average(self, tmp_path):
        cfg = tiny(tmp_path, runs=1, trials=2, methods=(Method.CA,))
        summary = run_experiment(cfg)
        ids = {r[0] for r in read_rows(tmp_path / "generations.csv")[1:]}
        assert ids == {"0:0", "0:1"}
        assert len(summary.methods["CA"].average_returns) == 1

    def test_abort_leaves_marker(self, tmp_path, monkeypatch):
        import iwies.harness as h

        def boom(*a, **k):
            raise RuntimeError("worker died")

        monkeypatch.setattr(h, "continue_incremental", boom)
        with pytest.raises(RuntimeError):
            run_experiment(tiny(tmp_path))
        assert "INCOMPLETE" in (tmp_path / "generations.csv").read_text()
        assert json.loads((tmp_path / "summary.json").read_text())["complete"] is False

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            run_experiment(tiny(blocker / "sub", output_dir=blocker / "sub"))


class TestTiming:
    def test_sweep_checks_determinism(self, tmp_path):
        table = timing_sweep(tiny(tmp_path), [1, 2], methods=(Method.CA, Method.IWIES_N))
        assert set(table.seconds) == {("CA", 1), ("CA", 2), ("IW-IES-N", 1), ("IW-IES-N", 2)}
        assert "2 workers" in table.format()

    def test_mismatch_raises(self, tmp_path, monkeypatch):
        import iwies.harness as h
        real = h.adapt
        calls = []

        def skewed(theta, *a, **k):
            calls.append(1)
            res = real(theta, *a, **k)
            if len(calls) > 1:
                res.theta_star[0] += 1e-12
            return res

        monkeypatch.setattr(h, "adapt", skewed)
        with pytest.raises(DeterminismError):
            timing_sweep(tiny(tmp_path), [1, 2], methods=(Method.CA,))

    def test_empty_counts(self, tmp_path):
        with pytest.raises(ValueError):
            timing_sweep(tiny(tmp_path), [])
