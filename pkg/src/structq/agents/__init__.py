"""Optimizers over the variable allocation MDP.

Every agent takes an :class:`AgentConfig` and an objective in the
maximization convention and returns one :class:`~structq.core.RunRecord`
per objective evaluation.
"""
from __future__ import annotations

from ..objectives import maximization_view
from .baselines import run_rs, run_sa
from .config import KINDS, AgentConfig, Evaluator
from .pg import run_pg, run_spg
from .ql import run_ql
from .sql import run_sql

RUNNERS = {
    "sql": run_sql,
    "ql": run_ql,
    "pg": run_pg,
    "spg": run_spg,
    "sa": run_sa,
    "rs": run_rs,
}


def run_agent(config: AgentConfig, objective) -> list:
    """Dispatch on ``config.kind``; minimization objectives are negated first."""
    return RUNNERS[config.kind](config, maximization_view(objective))


__all__ = [
    "KINDS", "AgentConfig", "Evaluator", "RUNNERS", "run_agent",
    "run_sql", "run_ql", "run_pg", "run_spg", "run_sa", "run_rs",
]
