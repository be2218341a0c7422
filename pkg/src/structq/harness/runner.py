"""Executes every (agent, seed) cell of an experiment and persists run CSVs.

Run CSVs hold values in the objective's own units (physical energies for
minimized objectives), so ``best_so_far`` is a running minimum there. The
direction is recorded in the manifest for the report stage.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import platform
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..agents import AgentConfig, run_agent
from ..neural import backend
from .config import ExperimentConfig, build_objective

log = logging.getLogger(__name__)

RUN_HEADER = ("step", "structure", "value", "best_so_far", "accepted_exploit", "agent", "seed")
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class Cell:
    agent: dict
    seed: int

    def config(self, budget: int) -> AgentConfig:
        return AgentConfig(seed=self.seed, budget=budget, **self.agent)

    def filename(self, budget: int) -> str:
        tag = re.sub(r"[^A-Za-z0-9_.-]+", "_", self.config(budget).tag)
        return f"{tag}__seed{self.seed}.csv"


@dataclass
class CellResult:
    file: str
    agent: str
    seed: int
    status: str
    evaluations: int = 0
    best: float | None = None
    error: str | None = None
    seconds: float = 0.0


def format_float(v: float) -> str:
    return repr(float(v))


def records_to_csv(records, seed: int, minimize: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_HEADER)
    sign = -1.0 if minimize else 1.0
    for r in records:
        w.writerow((
            r.step, r.structure, format_float(sign * r.value), format_float(sign * r.best_so_far),
            int(r.accepted_exploit), r.agent_tag, seed,
        ))
    return buf.getvalue()


def run_cell(objective_spec: dict, cell: Cell, budget: int, out_dir: str) -> CellResult:
    """One independent run; exceptions are reported in the result, not raised."""
    cfg = cell.config(budget)
    name = cell.filename(budget)
    t0 = time.perf_counter()
    objective = None
    try:
        objective = build_objective(objective_spec)
        records = run_agent(cfg, objective)
        text = records_to_csv(records, cell.seed, objective.minimize)
        (Path(out_dir) / name).write_text(text)
        best = records[-1].best_so_far if records else None
        if best is not None and objective.minimize:
            best = -best
        return CellResult(name, cfg.tag, cell.seed, "ok", len(records), best,
                          seconds=time.perf_counter() - t0)
    except Exception as exc:  # cell failures must not stop the batch
        return CellResult(name, cfg.tag, cell.seed, "failed", error=f"{type(exc).__name__}: {exc}",
                          seconds=time.perf_counter() - t0)
    finally:
        close = getattr(objective, "close", None)
        if close is not None:
            close()


def cells(cfg: ExperimentConfig) -> list[Cell]:
    return [Cell(agent, seed) for agent in cfg.agents for seed in cfg.seeds]


def versions() -> dict:
    out = {"structq": __version__, "python": platform.python_version(), "numpy": np.__version__,
           "backend": backend.name()}
    try:
        import numba
        out["numba"] = numba.__version__
    except ImportError:
        pass
    return out


def run_experiment(cfg: ExperimentConfig) -> tuple[Path, list[CellResult]]:
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    todo = cells(cfg)
    t0 = time.time()
    # constructing an objective is cheap; external processes start lazily
    minimize = bool(build_objective(cfg.objective).minimize)
    if cfg.jobs == 1:
        results = [run_cell(cfg.objective, c, cfg.budget, str(out)) for c in todo]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(run_cell, cfg.objective, c, cfg.budget, str(out)) for c in todo]
            results = [f.result() for f in futures]
    for r in results:
        if r.status == "ok":
            log.info("%s seed %d: best %s in %.1fs", r.agent, r.seed, r.best, r.seconds)
        else:
            log.error("%s seed %d failed: %s", r.agent, r.seed, r.error)
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "minimize": minimize,
        "versions": versions(),
        "started": t0,
        "wall_time": time.time() - t0,
        "cells": [r.__dict__ for r in results],
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out, results
