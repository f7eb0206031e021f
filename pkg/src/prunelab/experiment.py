"""Method x sparsity x seed sweeps with equal training budgets.

Every run trains for ``total_epochs`` in all: DRIVE's dense pretraining is
charged against that budget, so its pruned network trains that many fewer
epochs afterwards. IMP's train-prune-rewind cycles are counted entirely as
pruning time, and its rewound ticket then gets the full budget.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import mean, pstdev
from typing import Callable, Optional

import numpy as np

from . import seeding
from .config import ExperimentConfig
from .data import Dataset, load_idx, synth_gaussians
from .errors import BudgetExceeded, EmptyDataset, EmptyResults
from .nn import Model, build_model, predict
from .optim import train_epochs
from .prune import drive_pipeline, imp_pipeline, make_schedule, snip_pipeline, synflow_pipeline

log = logging.getLogger("prunelab")

CSV_COLUMNS = (
    "method", "model", "dataset", "target_sparsity", "achieved_sparsity", "seed",
    "pretrain_epochs", "train_epochs", "test_accuracy", "prune_seconds", "train_seconds",
    "collapsed_layers",
)
EARLY_METHODS = ("snip", "synflow", "drive")


@dataclass
class RunResult:
    method: str
    model: str
    dataset: str
    target_sparsity: float
    achieved_sparsity: float
    seed: int
    pretrain_epochs: int
    train_epochs: int
    test_accuracy: float
    prune_seconds: float
    train_seconds: float
    collapsed_layers: list = field(default_factory=list)
    error: str = ""

    @property
    def collapsed(self) -> bool:
        return bool(self.collapsed_layers)

    def to_row(self) -> dict:
        row = asdict(self)
        row.pop("error")
        row["collapsed_layers"] = ";".join(self.collapsed_layers)
        for key in ("target_sparsity", "achieved_sparsity", "test_accuracy", "prune_seconds", "train_seconds"):
            row[key] = repr(float(row[key]))
        return row

    @classmethod
    def from_row(cls, row: dict) -> "RunResult":
        return cls(
            method=row["method"], model=row["model"], dataset=row["dataset"],
            target_sparsity=float(row["target_sparsity"]), achieved_sparsity=float(row["achieved_sparsity"]),
            seed=int(row["seed"]), pretrain_epochs=int(row["pretrain_epochs"]),
            train_epochs=int(row["train_epochs"]), test_accuracy=float(row["test_accuracy"]),
            prune_seconds=float(row["prune_seconds"]), train_seconds=float(row["train_seconds"]),
            collapsed_layers=[c for c in row["collapsed_layers"].split(";") if c],
        )


def allocate_epochs(total: int, pretrain: int) -> tuple:
    """Split a training budget into ``(pretrain, post_prune)`` epochs."""
    if pretrain < 0 or pretrain >= total:
        raise BudgetExceeded(f"pretraining {pretrain} epochs does not fit a budget of {total}")
    return pretrain, total - pretrain


def evaluate(model: Model, dataset: Dataset) -> float:
    """Fraction of samples whose argmax logit (ties to the lowest class) is correct."""
    if len(dataset) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    return float(np.mean(predict(model, dataset.inputs) == dataset.labels))


def load_datasets(cfg: ExperimentConfig) -> tuple:
    d = cfg.dataset
    if d.kind == "idx":
        train = load_idx(d.train_images, d.train_labels, d.num_classes, "train")
        test = load_idx(d.test_images, d.test_labels, d.num_classes, "test", stats=train.stats)
        if cfg.model.kind == "mlp":
            # images were normalised per channel; MLPs take flat rows
            for ds in (train, test):
                ds.inputs = ds.inputs.reshape(len(ds), -1)
    else:
        train = synth_gaussians(d.classes, d.dim, d.per_class, d.seed, d.separation, "train", d.informative)
        test = synth_gaussians(d.classes, d.dim, d.test_per_class, d.seed, d.separation, "test",
                               d.informative, stats=train.stats)
        shape = cfg.model.build_spec().input_shape
        if len(shape) > 1:  # flat clusters viewed as images for conv models
            for ds in (train, test):
                ds.inputs = ds.inputs.reshape((len(ds),) + shape)
    return train, test


def prune_model(cfg: ExperimentConfig, method: str, kappa: float, seed: int, train: Dataset) -> tuple:
    """Build the seeded model and run one pruning pipeline.

    Returns ``(model, report, pretrain_epochs, post_prune_epochs)``.
    """
    model = build_model(cfg.model.build_spec(), seed)
    tc = cfg.train.to_train_config()
    p = cfg.prune
    pretrain, post = 0, cfg.total_epochs
    if method == "imp":
        model, report = imp_pipeline(model, train, p.imp_cycles, p.imp_epochs_per_cycle, kappa, tc, seed=seed)
    elif method == "snip":
        model, report = snip_pipeline(model, train, kappa, batch_size=tc.batch_size, seed=seed)
    elif method == "synflow":
        model, report = synflow_pipeline(model, kappa, p.iterations)
    elif method == "drive":
        pretrain, post = allocate_epochs(cfg.total_epochs, p.drive_pretrain_epochs)
        model, report = drive_pipeline(model, train, pretrain, make_schedule(kappa, p.iterations), tc, seed=seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    return model, report, pretrain, post


def run_one(cfg: ExperimentConfig, method: str, kappa: float, seed: int,
            train: Dataset, test: Dataset) -> tuple:
    model, report, pretrain, post = prune_model(cfg, method, kappa, seed, train)
    start = time.perf_counter()
    train_epochs(model, train, post, cfg.train.to_train_config(), seeding.derive_seed(seed, "shuffle", 10_000))
    train_seconds = report.pretrain_seconds + time.perf_counter() - start
    result = RunResult(
        method, cfg.model.label, cfg.dataset.label, float(kappa), model.sparsity(), int(seed),
        pretrain, post, evaluate(model, test), report.seconds, train_seconds, list(report.collapsed_layers),
    )
    return result, model


def _failed(cfg, method, kappa, seed, exc) -> RunResult:
    return RunResult(method, cfg.model.label, cfg.dataset.label, float(kappa), math.nan, int(seed),
                     0, 0, math.nan, math.nan, math.nan, [], error=f"{type(exc).__name__}: {exc}")


_worker_data: dict = {}


def _run_task(cfg: ExperimentConfig, method: str, kappa: float, seed: int) -> RunResult:
    if "data" not in _worker_data:
        _worker_data["data"] = load_datasets(cfg)
    train, test = _worker_data["data"]
    try:
        return run_one(cfg, method, kappa, seed, train, test)[0]
    except Exception as exc:  # one bad run must not end the sweep
        return _failed(cfg, method, kappa, seed, exc)


class ResultWriter:
    """Append-only CSV writer that flushes after every row."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._csv = csv.DictWriter(self._fh, fieldnames=CSV_COLUMNS)
        self._csv.writeheader()
        self._fh.flush()

    def write(self, result: RunResult) -> None:
        self._csv.writerow(result.to_row())
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def sweep_tasks(cfg: ExperimentConfig) -> list:
    return [(m, float(k), int(s)) for m in cfg.methods for k in cfg.sparsities for s in cfg.seeds]


def run_sweep(cfg: ExperimentConfig, workers: Optional[int] = None, results_path=None,
              progress: Optional[Callable[[RunResult, int, int], None]] = None) -> list:
    """Run every (method, sparsity, seed) combination and persist rows as they finish.

    Results are returned in task order. Failed runs are logged and recorded
    with NaN metrics; the sweep continues.
    """
    cfg.validate()
    workers = cfg.workers if workers is None else workers
    results_path = Path(results_path or Path(cfg.out_dir) / "results.csv")
    tasks = sweep_tasks(cfg)
    done: dict = {}
    with ResultWriter(results_path) as writer:
        def finish(task, result):
            done[task] = result
            writer.write(result)
            if result.error:
                log.error("run %s failed: %s", task, result.error)
                with open(results_path.with_name("errors.log"), "a") as fh:
                    fh.write(f"{task[0]} sparsity={task[1]} seed={task[2]}: {result.error}\n")
            if progress is not None:
                progress(result, len(done), len(tasks))

        if workers <= 1:
            _worker_data["data"] = load_datasets(cfg)
            try:
                for task in tasks:
                    finish(task, _run_task(cfg, *task))
            finally:
                _worker_data.clear()
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(_run_task, cfg, *task): task for task in tasks}
                for fut in as_completed(futures):
                    finish(futures[fut], fut.result())
    return [done[t] for t in tasks]


def read_results(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        if tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [RunResult.from_row(row) for row in reader]


# ---------------------------------------------------------------------------
# reporting

def _summarize(results: list) -> tuple:
    cells: dict = {}
    for r in results:
        cells.setdefault((r.method, r.target_sparsity), []).append(r)
    methods = list(dict.fromkeys(r.method for r in results))
    sparsities = sorted({r.target_sparsity for r in results})
    summary = {}
    for key, runs in cells.items():
        accs = [r.test_accuracy for r in runs if not math.isnan(r.test_accuracy)]
        summary[key] = {
            "n": len(accs),
            "mean": mean(accs) if accs else math.nan,
            "std": pstdev(accs) if len(accs) > 1 else 0.0,
            "collapsed": sum(r.collapsed for r in runs),
            "prune_seconds": mean(r.prune_seconds for r in runs),
        }
    return methods, sparsities, summary


def report(results: list, out_path) -> str:
    """Write a plain-text pivot (methods x sparsities) and a per-cell CSV.

    Cells show mean +/- std test accuracy (%) over seeds. ``*`` marks the best
    early method (SNIP, SynFlow, DRIVE) per sparsity; cells containing a
    collapsed run are flagged ``collapse`` (untrainable network).
    """
    if not results:
        raise EmptyResults("no results to report")
    methods, sparsities, summary = _summarize(results)
    best = {}
    for k in sparsities:
        cands = [(summary[(m, k)]["mean"], m) for m in methods
                 if m in EARLY_METHODS and (m, k) in summary
                 and not summary[(m, k)]["collapsed"] and not math.isnan(summary[(m, k)]["mean"])]
        if cands:
            best[k] = max(cands)[1]

    header = ["method"] + [f"{100 * k:g}%" for k in sparsities] + ["prune s"]
    rows = [header]
    for m in methods:
        row = [m]
        for k in sparsities:
            s = summary.get((m, k))
            if s is None:
                row.append("-")
                continue
            cell = f"{100 * s['mean']:.2f} ± {100 * s['std']:.2f}"
            if best.get(k) == m:
                cell += " *"
            if s["collapsed"]:
                cell += " collapse"
            row.append(cell)
        secs = [summary[(m, k)]["prune_seconds"] for k in sparsities if (m, k) in summary]
        row.append(f"{mean(secs):.2f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append("")
    lines.append("* best early method at that sparsity; collapse = a run lost an entire layer (untrainable)")
    text = "\n".join(lines) + "\n"

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text)
    with open(out_path.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "target_sparsity", "runs", "mean_accuracy", "std_accuracy",
                    "collapsed_runs", "mean_prune_seconds", "best_early"])
        for m in methods:
            for k in sparsities:
                s = summary.get((m, k))
                if s is not None:
                    w.writerow([m, repr(k), s["n"], repr(s["mean"]), repr(s["std"]), s["collapsed"],
                                repr(s["prune_seconds"]), int(best.get(k) == m)])
    return text
