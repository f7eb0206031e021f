import csv
import dataclasses
import math

import numpy as np
import pytest

from prunelab.config import config_from_dict
from prunelab.data import Dataset
from prunelab.errors import BudgetExceeded, EmptyDataset, EmptyResults
from prunelab.experiment import (
    CSV_COLUMNS, RunResult, allocate_epochs, evaluate, read_results, report, run_sweep,
)
from prunelab.nn import build_model, mlp_spec


def tiny_config(tmp_path, **over):
    raw = {
        "methods": ["snip", "drive"], "sparsities": [0.5, 0.8], "seeds": [0], "total_epochs": 2,
        "out_dir": str(tmp_path),
        "model": {"sizes": [6, 8, 3]},
        "dataset": {"classes": 3, "dim": 6, "per_class": 30, "test_per_class": 10, "separation": 4.0},
        "prune": {"iterations": 5, "imp_cycles": 2},
        "train": {"batch_size": 16},
    }
    raw.update(over)
    return config_from_dict(raw)


def result(method="drive", kappa=0.9, seed=0, acc=0.5, collapsed=()):
    return RunResult(method, "m", "d", kappa, kappa, seed, 0, 6, acc, 0.1, 1.0, list(collapsed))


class TestAllocate:
    def test_five_fewer_epochs(self):
        assert allocate_epochs(50, 5) == (5, 45)

    def test_no_pretraining(self):
        assert allocate_epochs(6, 0) == (0, 6)

    @pytest.mark.parametrize("e", [6, 7, -1])
    def test_budget_exceeded(self, e):
        with pytest.raises(BudgetExceeded):
            allocate_epochs(6, e)


class TestEvaluate:
    def linear_model(self, k):
        model = build_model(mlp_spec((k, k), bias=False), 0)
        model.params[0].value[:] = np.eye(k, dtype=np.float32) * 10
        return model

    def test_oracle_logits(self):
        labels = np.arange(10).repeat(3)
        ds = Dataset(np.eye(10, dtype=np.float32)[labels], labels, 10)
        assert evaluate(self.linear_model(10), ds) == 1.0

    def test_constant_logits_tie_to_class_zero(self):
        labels = np.arange(10).repeat(5)
        ds = Dataset(np.zeros((50, 10), dtype=np.float32), labels, 10)
        assert evaluate(self.linear_model(10), ds) == pytest.approx(0.1)

    def test_empty(self):
        ds = Dataset(np.zeros((0, 10), dtype=np.float32), np.zeros(0, dtype=np.int64), 10)
        with pytest.raises(EmptyDataset):
            evaluate(self.linear_model(10), ds)


class TestSweep:
    def test_rows_budget_and_persistence(self, tmp_path):
        cfg = tiny_config(tmp_path)
        results = run_sweep(cfg)
        assert len(results) == 4
        with open(tmp_path / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 4
        for r in results:
            assert r.pretrain_epochs + r.train_epochs == cfg.total_epochs
            assert 0 <= r.test_accuracy <= 1
            assert abs(r.achieved_sparsity - r.target_sparsity) <= 1 / 72
        drive = [r for r in results if r.method == "drive"][0]
        snip = [r for r in results if r.method == "snip"][0]
        assert (drive.pretrain_epochs, drive.train_epochs) == (1, 1)
        assert (snip.pretrain_epochs, snip.train_epochs) == (0, 2)
        assert read_results(tmp_path / "results.csv") == [dataclasses.replace(r) for r in results]

    def test_rerun_is_bit_identical(self, tmp_path):
        a = run_sweep(tiny_config(tmp_path / "a"))
        b = run_sweep(tiny_config(tmp_path / "b"))
        key = lambda r: (r.method, r.target_sparsity, r.seed, r.achieved_sparsity, r.test_accuracy,
                         r.pretrain_epochs, r.train_epochs, r.collapsed_layers)
        assert [key(r) for r in a] == [key(r) for r in b]

    def test_parallel_matches_serial(self, tmp_path):
        serial = run_sweep(tiny_config(tmp_path / "s"))
        parallel = run_sweep(tiny_config(tmp_path / "p"), workers=2)
        assert [r.test_accuracy for r in serial] == [r.test_accuracy for r in parallel]

    def test_all_methods(self, tmp_path):
        results = run_sweep(tiny_config(tmp_path, methods=["imp", "snip", "synflow", "drive"], sparsities=[0.7]))
        assert [r.method for r in results] == ["imp", "snip", "synflow", "drive"]

    def test_failed_run_is_recorded_and_sweep_continues(self, tmp_path, monkeypatch):
        import prunelab.experiment as ex

        real = ex.run_one

        def flaky(cfg, method, kappa, seed, train, test):
            if method == "snip" and kappa == 0.5:
                raise RuntimeError("boom")
            return real(cfg, method, kappa, seed, train, test)

        monkeypatch.setattr(ex, "run_one", flaky)
        results = run_sweep(tiny_config(tmp_path))
        assert len(results) == 4 and sum(math.isnan(r.test_accuracy) for r in results) == 1
        assert "boom" in (tmp_path / "errors.log").read_text()
        assert len(read_results(tmp_path / "results.csv")) == 4

    def test_rows_are_flushed_as_runs_finish(self, tmp_path):
        seen = []
        run_sweep(tiny_config(tmp_path), progress=lambda r, done, total: seen.append(
            len(read_results(tmp_path / "results.csv"))))
        assert seen == [1, 2, 3, 4]


class TestReport:
    def test_mean_over_seeds(self, tmp_path):
        rs = [result(seed=s, acc=a) for s, a in enumerate([0.5, 0.6, 0.7])]
        text = report(rs, tmp_path / "r.txt")
        assert "60.00 ± 8.16" in text
        with open(tmp_path / "r.csv") as fh:
            row = next(csv.DictReader(fh))
        assert row["runs"] == "3" and float(row["mean_accuracy"]) == pytest.approx(0.6)

    def test_collapse_flag(self, tmp_path):
        text = report([result(collapsed=["layer03"])], tmp_path / "r.txt")
        assert "collapse" in text.splitlines()[2]

    def test_single_result(self, tmp_path):
        lines = report([result(acc=0.25)], tmp_path / "r.txt").splitlines()
        assert lines[0].split()[:2] == ["method", "90%"]
        assert lines[2].split()[0] == "drive" and "25.00" in lines[2]

    def test_best_early_method_marked(self, tmp_path):
        rs = [result("imp", acc=0.99), result("snip", acc=0.7), result("drive", acc=0.8)]
        lines = report(rs, tmp_path / "r.txt").splitlines()
        marked = [l.split()[0] for l in lines[2:5] if "*" in l]
        assert marked == ["drive"]

    def test_empty(self, tmp_path):
        with pytest.raises(EmptyResults):
            report([], tmp_path / "r.txt")
