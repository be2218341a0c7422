"""Aggregates a run directory into plot-ready CSVs.

Outputs (under ``<run_dir>/report``):

* ``curves.csv`` best-so-far per cell at each checkpoint
* ``curve_summary.csv`` mean and population std per agent and checkpoint
* ``proportions.csv`` symbol selection frequencies per agent and step bucket
* ``normalized.csv`` / ``categories.csv`` when an antigen is configured
* ``errors.txt`` missing or corrupt run files (empty when none)

The report is a pure function of the run CSVs and the manifest.
"""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import EOS_CHAR
from ..objectives import CATEGORIES, QuantileTable, categorize, normalize
from .config import build_alphabet
from .runner import MANIFEST, RUN_HEADER, format_float

CHECKPOINTS = (32, 64, 128, 256, 512, 1000)
BUCKETS = 20
REPORT_DIR = "report"


class ReportError(RuntimeError):
    pass


@dataclass
class Run:
    file: str
    agent: str
    seed: int
    structures: list[str]
    values: np.ndarray
    best: np.ndarray


def checkpoints(budget: int, defaults=CHECKPOINTS) -> list[int]:
    return sorted({c for c in defaults if c <= budget} | {budget})


def bucket_edges(budget: int, buckets: int = BUCKETS) -> list[tuple[int, int]]:
    edges = [b * budget // buckets for b in range(buckets + 1)]
    return [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def parse_run(text: str, file: str, minimize: bool) -> Run:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != RUN_HEADER:
        raise ReportError(f"{file}: bad header")
    body = rows[1:]
    if not body:
        raise ReportError(f"{file}: no records")
    try:
        steps = [int(r[0]) for r in body]
        values = np.array([float(r[2]) for r in body])
        best = np.array([float(r[3]) for r in body])
        seeds = {int(r[6]) for r in body}
        agents = {r[5] for r in body}
    except (ValueError, IndexError):
        raise ReportError(f"{file}: malformed row") from None
    if steps != list(range(len(body))):
        raise ReportError(f"{file}: steps not consecutive")
    if len(seeds) != 1 or len(agents) != 1:
        raise ReportError(f"{file}: mixed agents or seeds")
    running = np.minimum.accumulate(values) if minimize else np.maximum.accumulate(values)
    if not np.array_equal(running, best):
        raise ReportError(f"{file}: best_so_far inconsistent with values")
    return Run(file, agents.pop(), seeds.pop(), [r[1] for r in body], values, best)


def _write(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _f(v) -> str:
    return format_float(v)


def load_runs(run_dir: Path) -> tuple[dict, list[Run], list[str]]:
    """Manifest, parsed runs and a list of problems (missing or corrupt files)."""
    try:
        manifest = json.loads((run_dir / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read manifest in {run_dir}: {exc}") from None
    minimize = bool(manifest.get("minimize", False))
    runs, errors = [], []
    for cell in manifest["cells"]:
        name = cell["file"]
        if cell["status"] != "ok":
            errors.append(f"{name}: run failed ({cell.get('error')})")
            continue
        path = run_dir / name
        if not path.exists():
            errors.append(f"{name}: missing")
            continue
        try:
            run = parse_run(path.read_text(), name, minimize)
        except ReportError as exc:
            errors.append(str(exc))
            continue
        if len(run.values) != cell["evaluations"]:
            errors.append(f"{name}: {len(run.values)} rows, manifest says {cell['evaluations']}")
            continue
        runs.append(run)
    runs.sort(key=lambda r: (r.agent, r.seed))
    return manifest, runs, errors


def curve_rows(runs: list[Run], points: list[int]):
    for run in runs:
        for c in points:
            if c <= len(run.best):
                yield run.agent, run.seed, c, run.best[c - 1]


def summary_rows(runs: list[Run], points: list[int]):
    by_agent = defaultdict(list)
    for run in runs:
        by_agent[run.agent].append(run)
    for agent in sorted(by_agent):
        for c in points:
            vals = np.array([r.best[c - 1] for r in by_agent[agent] if c <= len(r.best)])
            if vals.size:
                yield agent, c, vals.mean(), vals.std(), vals.size


def proportion_rows(runs: list[Run], symbols: tuple[str, ...], budget: int):
    """Symbol frequencies per (agent, bucket); each row sums to one."""
    index = {s: i for i, s in enumerate(symbols)}
    by_agent = defaultdict(list)
    for run in runs:
        by_agent[run.agent].append(run)
    for agent in sorted(by_agent):
        for b, (lo, hi) in enumerate(bucket_edges(budget)):
            counts = np.zeros(len(symbols))
            for run in by_agent[agent]:
                for s in run.structures[lo:hi]:
                    for ch in s.split(EOS_CHAR, 1)[0]:
                        counts[index[ch]] += 1
            total = counts.sum()
            if total > 0:
                yield (agent, b, lo, hi, *(counts / total))


def category_rows(runs: list[Run], antigen: str, table: QuantileTable):
    by_agent = defaultdict(lambda: dict.fromkeys(CATEGORIES, 0))
    for run in runs:
        counts = by_agent[run.agent]
        for v in run.values:
            counts[categorize(float(v), antigen, table)] += 1
    for agent in sorted(by_agent):
        counts = by_agent[agent]
        yield (agent, *(counts[c] for c in CATEGORIES), sum(counts.values()))


def build_report(run_dir: str | Path, checkpoint_steps=CHECKPOINTS) -> tuple[Path, list[str]]:
    """Write every report CSV; returns the output directory and any problems found."""
    run_dir = Path(run_dir)
    manifest, runs, errors = load_runs(run_dir)
    cfg = manifest["config"]
    budget = int(cfg["budget"])
    out = run_dir / REPORT_DIR
    out.mkdir(exist_ok=True)
    points = checkpoints(budget, checkpoint_steps)
    _write(out / "curves.csv", ("agent", "seed", "checkpoint", "best"),
           ((a, s, c, _f(v)) for a, s, c, v in curve_rows(runs, points)))
    _write(out / "curve_summary.csv", ("agent", "checkpoint", "mean", "std", "n"),
           ((a, c, _f(m), _f(sd), n) for a, c, m, sd, n in summary_rows(runs, points)))
    alphabet = build_alphabet(cfg["objective"])
    symbols = tuple(s for s in alphabet.symbols if s != EOS_CHAR)
    _write(out / "proportions.csv", ("agent", "bucket", "step_start", "step_end", *symbols),
           ((a, b, lo, hi, *map(_f, p)) for a, b, lo, hi, *p in proportion_rows(runs, symbols, budget)))
    antigen = cfg.get("antigen")
    if antigen:
        table = QuantileTable.shipped()
        _write(out / "normalized.csv", ("agent", "seed", "best", "normalized"),
               ((r.agent, r.seed, _f(r.best[-1]), _f(normalize(float(r.best[-1]), antigen, table)))
                for r in runs))
        _write(out / "categories.csv", ("agent", *CATEGORIES, "total"),
               category_rows(runs, antigen, table))
    (out / "errors.txt").write_text("".join(e + "\n" for e in errors))
    return out, errors
