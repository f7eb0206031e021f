"""Command-line entry point: ``prunelab {train,prune,sweep,report}``.

Exit codes: 0 success, 1 run failure, 2 usage error. Progress goes to
standard error; artifacts go under ``--out-dir``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .checkpoint import save_checkpoint
from .config import METHODS, ExperimentConfig, load_config
from .errors import InvalidValue, MissingConfig, PruneLabError, UnknownFlag, UsageError
from .experiment import ResultWriter, evaluate, load_datasets, read_results, report, run_one, run_sweep
from .nn import build_model
from .optim import train_epochs
from . import seeding

log = logging.getLogger("prunelab")


@dataclass(frozen=True)
class Command:
    name: str  # train | prune | sweep | report
    config: Optional[str] = None
    method: Optional[str] = None
    sparsity: Optional[float] = None
    results_path: Optional[str] = None
    out: Optional[str] = None
    seed: Optional[int] = None
    out_dir: Optional[str] = None
    workers: Optional[int] = None
    quiet: bool = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "unrecognized arguments" in message:
            raise UnknownFlag(message)
        if "--config" in message and "required" in message:
            raise MissingConfig(message)
        raise InvalidValue(message)


def _sparsity(text: str) -> float:
    try:
        k = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= k < 1.0:
        raise argparse.ArgumentTypeError(f"sparsity must be a fraction in [0, 1), got {text}")
    return k


def _positive(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    # global flags may appear before or after the subcommand
    def common(suppress: bool) -> argparse.ArgumentParser:
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        c = _Parser(add_help=False)
        c.add_argument("--seed", type=int, help="run a single seed instead of the config's list", **kw)
        c.add_argument("--out-dir", help="artifact directory (overrides the config)", **kw)
        c.add_argument("--workers", type=_positive, help="parallel runs for sweep", **kw)
        c.add_argument("--quiet", action="store_true", help="suppress progress output", **kw)
        return c

    parser = _Parser(prog="prunelab", description="Early pruning experiments at desk scale.",
                     parents=[common(False)])
    sub = parser.add_subparsers(dest="name", parser_class=_Parser)
    p = sub.add_parser("train", parents=[common(True)], help="train the dense model")
    p.add_argument("--config", required=True)
    p = sub.add_parser("prune", parents=[common(True)], help="prune with one method, then train")
    p.add_argument("--config", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--sparsity", required=True, type=_sparsity)
    p = sub.add_parser("sweep", parents=[common(True)], help="run every method x sparsity x seed")
    p.add_argument("--config", required=True)
    p = sub.add_parser("report", parents=[common(True)], help="pivot a results CSV")
    p.add_argument("results_path")
    p.add_argument("--out", help="pivot text file (default: next to the CSV)")
    return parser


def parse_args(argv: Sequence[str]) -> Command:
    """Parse ``argv`` into a :class:`Command`; raises a ``UsageError`` subclass."""
    ns = build_parser().parse_args(list(argv))
    if ns.name is None:
        raise UsageError("a subcommand is required")
    fields = {f.name for f in dataclasses.fields(Command)}
    return Command(**{k: v for k, v in vars(ns).items() if k in fields})


def _setup_logging(quiet: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s", "%H:%M:%S"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.ERROR if quiet else logging.INFO)


def _config(cmd: Command) -> ExperimentConfig:
    cfg = load_config(cmd.config)
    changes = {}
    if cmd.seed is not None:
        changes["seeds"] = (cmd.seed,)
    if cmd.out_dir is not None:
        changes["out_dir"] = cmd.out_dir
    if cmd.workers is not None:
        changes["workers"] = cmd.workers
    return dataclasses.replace(cfg, **changes).validate()


def _train(cmd: Command) -> None:
    cfg = _config(cmd)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = load_datasets(cfg)
    tc = cfg.train.to_train_config()
    for seed in cfg.seeds:
        model = build_model(cfg.model.build_spec(), seed)
        state = tc.new_state()
        start = time.perf_counter()
        losses = train_epochs(model, train, cfg.total_epochs, tc, seeding.derive_seed(seed, "shuffle", 0),
                              state=state)
        acc = evaluate(model, test)
        log.info("train seed=%d epochs=%d loss=%.4f accuracy=%.4f seconds=%.2f",
                 seed, cfg.total_epochs, losses[-1] if losses else float("nan"), acc,
                 time.perf_counter() - start)
        save_checkpoint(model, state, out / f"dense-seed{seed}.prlb", seeds={"init": seed})


def _prune(cmd: Command) -> None:
    cfg = _config(cmd)
    out = Path(cfg.out_dir)
    train, test = load_datasets(cfg)
    with ResultWriter(out / f"prune-{cmd.method}-{cmd.sparsity:g}.csv") as writer:
        for seed in cfg.seeds:
            result, model = run_one(cfg, cmd.method, cmd.sparsity, seed, train, test)
            writer.write(result)
            log.info("prune method=%s sparsity=%g seed=%d achieved=%.4f accuracy=%.4f prune_s=%.2f%s",
                     result.method, result.target_sparsity, seed, result.achieved_sparsity,
                     result.test_accuracy, result.prune_seconds,
                     " collapsed=" + ";".join(result.collapsed_layers) if result.collapsed else "")
            save_checkpoint(model, None, out / f"{cmd.method}-{cmd.sparsity:g}-seed{seed}.prlb",
                            seeds={"init": seed})


def _sweep(cmd: Command) -> None:
    cfg = _config(cmd)

    def progress(r, done, total):
        log.info("[%d/%d] method=%s sparsity=%g seed=%d accuracy=%.4f prune_s=%.2f train_s=%.2f",
                 done, total, r.method, r.target_sparsity, r.seed, r.test_accuracy,
                 r.prune_seconds, r.train_seconds)

    path = Path(cfg.out_dir) / "results.csv"
    results = run_sweep(cfg, results_path=path, progress=progress)
    report(results, Path(cfg.out_dir) / "report.txt")
    failed = [r for r in results if r.error]
    if failed:
        raise PruneLabError(f"{len(failed)} of {len(results)} runs failed; see {path}")


def _report(cmd: Command) -> None:
    results = read_results(cmd.results_path)
    out = cmd.out
    if out is None:
        base = Path(cmd.out_dir) if cmd.out_dir else Path(cmd.results_path).parent
        out = base / "report.txt"
    text = report(results, out)
    if not cmd.quiet:
        sys.stdout.write(text)


_HANDLERS = {"train": _train, "prune": _prune, "sweep": _sweep, "report": _report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        cmd = parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"prunelab: error: {exc}", file=sys.stderr)
        return 2
    _setup_logging(cmd.quiet)
    try:
        _HANDLERS[cmd.name](cmd)
    except (PruneLabError, OSError) as exc:
        print(f"prunelab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("prunelab: interrupted", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
