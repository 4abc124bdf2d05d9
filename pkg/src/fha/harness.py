"""Seeded experiment harness: paired runs, a results stream, summary
tables, and a 2-d embedding export.

Results serialize as line-delimited JSON with fields exactly
``method, task, n_t, seed, accuracy, wa_accuracy, wall_ms``; accuracies are
written as decimal fractions with 17 significant digits so parsing gives
back the exact 64-bit value. Failed runs keep their identifying fields and
carry an ``error`` message instead of accuracies.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn, trainers
from .data import Dataset, TaskSpec, make_synthetic_task, sample_few_shot
from .errors import ConfigError, FHAError, InsufficientDataError
from .trainers import (
    BaselineConfig,
    SourceTrainConfig,
    TohanConfig,
    METHODS,
)

log = logging.getLogger("fha.harness")


@dataclass(frozen=True)
class ExperimentConfig:
    """Sub-configs for source fitting, the benchmarks, and adaptation."""

    source: SourceTrainConfig = field(default_factory=SourceTrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    tohan: TohanConfig = field(default_factory=TohanConfig)


@dataclass(frozen=True)
class RunResult:
    """One (method, task, n_t, seed) outcome."""

    method: str
    task: str
    n_t: int
    seed: int
    accuracy: float | None
    wa_accuracy: float | None
    wall_ms: float
    error: str | None = None
    trace: tuple = ()


def accuracy(model, test: Dataset) -> float:
    """Fraction of correct argmax predictions; ties pick the lowest index."""
    return trainers._accuracy_core(model.enc, model.cls, test.features, test.labels)


def format_result_line(result: RunResult) -> str:
    """Render one result as a JSON line (17 significant digits)."""
    head = (
        f'{{"method": {json.dumps(result.method)}, "task": {json.dumps(result.task)}, '
        f'"n_t": {result.n_t}, "seed": {result.seed}'
    )
    if result.error is not None:
        return head + f', "error": {json.dumps(result.error)}}}'
    return head + (
        f', "accuracy": {result.accuracy:.17g}'
        f', "wa_accuracy": {result.wa_accuracy:.17g}'
        f', "wall_ms": {result.wall_ms:.3f}}}'
    )


def write_results(sink, results) -> None:
    """Append result lines to a path or file-like sink, flushing per line."""
    own = not hasattr(sink, "write")
    fh = open(sink, "a", encoding="utf-8") if own else sink
    try:
        for r in results:
            fh.write(format_result_line(r))
            fh.write("\n")
            fh.flush()
    finally:
        if own:
            fh.close()


def read_results(path):
    """Parse a results file; returns (rows, per-line error messages)."""
    rows, problems = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if not isinstance(row, dict):
                    raise ValueError("not a JSON object")
                missing = {"method", "task", "n_t", "seed"} - set(row)
                if missing:
                    raise ValueError(f"missing fields {sorted(missing)}")
                if "error" not in row and ("accuracy" not in row or "wa_accuracy" not in row):
                    raise ValueError("missing accuracy fields")
            except ValueError as exc:
                problems.append(f"line {i}: {exc}")
                continue
            rows.append(row)
    return rows, problems


# ---------------------------------------------------------------------------
# experiment driver


def _method_model(method: str, hypothesis, fewshot, cfg: ExperimentConfig,
                  method_seed: int):
    trace: list = []
    if method == "wa":
        return trainers.TargetModel(hypothesis.enc, hypothesis.cls), trace
    if method == "ft":
        return trainers.train_ft(hypothesis, fewshot, cfg.baseline), trace
    if method == "shot":
        return trainers.train_shot(hypothesis, fewshot, cfg.baseline), trace
    tohan_cfg = replace(cfg.tohan, seed=method_seed)
    if method == "tohan":
        return trainers.train_tohan(hypothesis, fewshot, tohan_cfg, trace=trace), trace
    if method in trainers.TWO_STEP_MODES:
        return trainers.run_two_step(method, hypothesis, fewshot, tohan_cfg,
                                     trace=trace), trace
    raise ConfigError(f"unknown method {method!r}")


def _error_results(task_name, methods, shots, seed, message):
    return [
        RunResult(method=m, task=task_name, n_t=n_t, seed=seed, accuracy=None,
                  wa_accuracy=None, wall_ms=0.0, error=message)
        for n_t in shots for m in methods
    ]


def _run_seed(task: TaskSpec, methods, shots, seed: int,
              cfg: ExperimentConfig) -> list[RunResult]:
    """All (method, n_t) runs of one experiment seed, sharing one source
    hypothesis and one few-shot draw per n_t (the paired design)."""
    data_seed, source_seed, fewshot_seed, method_seed = nn.derive_seeds(seed, 4)
    try:
        source, target, target_test = make_synthetic_task(replace(task, seed=data_seed))
        hypothesis = trainers.train_source(source, replace(cfg.source, seed=source_seed))
        wa_acc = trainers.eval_wa(hypothesis, target_test)
    except FHAError as exc:
        log.error("seed %d setup failed: %s", seed, exc)
        return _error_results(task.name, methods, shots, seed, str(exc))
    results = []
    for n_t in shots:
        try:
            fewshot = sample_few_shot(target, n_t, fewshot_seed)
        except FHAError as exc:
            results.extend(_error_results(task.name, methods, [n_t], seed, str(exc)))
            continue
        for method in methods:
            start = time.perf_counter()
            try:
                model, trace = _method_model(method, hypothesis, fewshot, cfg, method_seed)
                acc = accuracy(model, target_test)
            except FHAError as exc:
                log.error("run %s/n_t=%d/seed=%d failed: %s", method, n_t, seed, exc)
                results.append(RunResult(
                    method=method, task=task.name, n_t=n_t, seed=seed,
                    accuracy=None, wa_accuracy=None,
                    wall_ms=(time.perf_counter() - start) * 1e3, error=str(exc),
                ))
                continue
            results.append(RunResult(
                method=method, task=task.name, n_t=n_t, seed=seed,
                accuracy=acc, wa_accuracy=wa_acc,
                wall_ms=(time.perf_counter() - start) * 1e3,
                trace=tuple(trace),
            ))
            log.info("%s n_t=%d seed=%d accuracy=%.4f", method, n_t, seed, acc)
    return results


def run_experiment(task: TaskSpec, methods, shots, seeds, cfg: ExperimentConfig,
                   sink=None, jobs: int = 1) -> list[RunResult]:
    """Run every (method, n_t, seed) combination of one task.

    The source hypothesis and few-shot sets are shared per seed across
    methods, so method comparisons are paired. Run errors become error
    records in the stream instead of aborting the batch. ``sink`` (a path
    or file-like) receives each seed's result lines as they complete; with
    ``jobs`` > 1, seeds run in worker processes (results are still
    deterministic, the sink order follows completion).
    """
    methods = list(methods)
    shots = [int(s) for s in shots]
    seeds = [int(s) for s in seeds]
    if not methods or not shots or not seeds:
        raise ConfigError("methods, shots, and seeds must be non-empty")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ConfigError(f"unknown methods {sorted(unknown)}; known: {list(METHODS)}")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    if jobs < 1:
        raise ConfigError("jobs must be positive")

    per_seed: dict[int, list[RunResult]] = {}
    if jobs == 1:
        for seed in seeds:
            chunk = _run_seed(task, methods, shots, seed, cfg)
            per_seed[seed] = chunk
            if sink is not None:
                write_results(sink, chunk)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            pending = {
                pool.submit(_run_seed, task, methods, shots, seed, cfg): seed
                for seed in seeds
            }
            while pending:
                done, _ = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    seed = pending.pop(fut)
                    chunk = fut.result()
                    per_seed[seed] = chunk
                    if sink is not None:
                        write_results(sink, chunk)
    return [r for seed in seeds for r in per_seed[seed]]


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class SummaryRow:
    method: str
    n_t: int
    mean: float
    std: float | None
    count: int


@dataclass(frozen=True)
class SummaryTable:
    """Per-(method, n_t) accuracy means over seeds, as percentages."""

    rows: tuple[SummaryRow, ...]

    def row(self, method: str, n_t: int) -> SummaryRow:
        for r in self.rows:
            if r.method == method and r.n_t == n_t:
                return r
        raise KeyError((method, n_t))

    def cell(self, method: str, n_t: int) -> str:
        r = self.row(method, n_t)
        if r.std is None:
            return f"{100.0 * r.mean:.1f}±n/a"
        return f"{100.0 * r.mean:.1f}±{100.0 * r.std:.1f}"

    def to_csv(self) -> str:
        lines = ["method,n_t,mean_pct,std_pct,seeds"]
        for r in self.rows:
            std = "" if r.std is None else f"{100.0 * r.std:.1f}"
            lines.append(f"{r.method},{r.n_t},{100.0 * r.mean:.1f},{std},{r.count}")
        return "\n".join(lines) + "\n"

    def render(self) -> str:
        shots = sorted({r.n_t for r in self.rows})
        methods = []
        for r in self.rows:
            if r.method not in methods:
                methods.append(r.method)
        width = max([len("method")] + [len(m) for m in methods]) + 2
        header = "method".ljust(width) + "".join(f"n_t={s}".ljust(12) for s in shots)
        lines = [header]
        for m in methods:
            cells = []
            for s in shots:
                try:
                    cells.append(self.cell(m, s).ljust(12))
                except KeyError:
                    cells.append("-".ljust(12))
            lines.append(m.ljust(width) + "".join(cells))
        return "\n".join(lines) + "\n"


def _method_order(name: str) -> tuple:
    try:
        return (0, METHODS.index(name))
    except ValueError:
        return (1, name)


def summarize(results) -> SummaryTable:
    """Aggregate accuracies into mean/std (sample std, n-1) per method+n_t.

    Accepts RunResult objects or parsed result rows; error records are
    skipped. A single seed leaves std as None (rendered as a marker).
    """
    groups: dict[tuple[str, int], list[float]] = {}
    skipped = 0
    for r in results:
        row = r if isinstance(r, dict) else {
            "method": r.method, "n_t": r.n_t, "accuracy": r.accuracy,
            "error": r.error,
        }
        if row.get("error") is not None or row.get("accuracy") is None:
            skipped += 1
            continue
        groups.setdefault((str(row["method"]), int(row["n_t"])), []).append(
            float(row["accuracy"])
        )
    if not groups:
        raise InsufficientDataError("no successful runs to summarize")
    if skipped:
        log.info("summarize skipped %d error records", skipped)
    rows = []
    for (method, n_t) in sorted(groups, key=lambda k: (_method_order(k[0]), k[1])):
        vals = np.asarray(groups[(method, n_t)], dtype=np.float64)
        std = float(np.std(vals, ddof=1)) if vals.size > 1 else None
        rows.append(SummaryRow(method=method, n_t=n_t, mean=float(np.mean(vals)),
                               std=std, count=int(vals.size)))
    return SummaryTable(rows=tuple(rows))


# ---------------------------------------------------------------------------
# embedding export


@dataclass(frozen=True)
class EmbeddingTable:
    """2-d coordinates per sample with label and domain tags."""

    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    domains: tuple[str, ...]
    degenerate: bool

    def to_csv(self) -> str:
        lines = ["x,y,label,domain"]
        for i in range(self.x.size):
            lines.append(
                f"{self.x[i]:.17g},{self.y[i]:.17g},{int(self.labels[i])},{self.domains[i]}"
            )
        return "\n".join(lines) + "\n"


def dump_embedding(model, datasets) -> EmbeddingTable:
    """Project encoder outputs of tagged datasets onto their top-2 principal
    directions.

    ``datasets`` is a sequence of (domain_tag, Dataset). Component signs are
    fixed (largest-magnitude loading positive) so output is deterministic.
    A zero-variance or rank-deficient embedding cloud falls back to the
    first two embedding dimensions, flagged via ``degenerate``.
    """
    enc = model if isinstance(model, nn.Net) else model.enc
    if enc.arch.out_width < 2:
        raise ConfigError("embedding export needs an encoder output width of at least 2")
    datasets = list(datasets)
    if not datasets or all(ds.n == 0 for _, ds in datasets):
        raise InsufficientDataError("no samples to embed")
    blocks, labels, domains = [], [], []
    for tag, ds in datasets:
        blocks.append(enc(ds.features.astype(np.float64)))
        labels.append(ds.labels)
        domains.extend([str(tag)] * ds.n)
    emb = np.concatenate(blocks)
    labels = np.concatenate(labels)
    centered = emb - emb.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    degenerate = (
        emb.shape[0] < 2 or svals.size < 2 or svals[0] < 1e-12
        or svals[1] < 1e-12 * svals[0]
    )
    if degenerate:
        coords = emb[:, :2]
    else:
        comps = vt[:2].copy()
        for k in range(2):
            j = int(np.argmax(np.abs(comps[k])))
            if comps[k, j] < 0:
                comps[k] = -comps[k]
        coords = centered @ comps.T
    return EmbeddingTable(
        x=coords[:, 0].copy(), y=coords[:, 1].copy(), labels=labels,
        domains=tuple(domains), degenerate=degenerate,
    )
