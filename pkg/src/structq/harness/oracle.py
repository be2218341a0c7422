"""Exhaustive optimum of small objectives."""
from __future__ import annotations

from dataclasses import dataclass

from ..objectives import ENUMERATION_LIMIT, SpaceTooLarge, brute_force_optimum, maximization_view
from .config import build_alphabet, build_objective


@dataclass(frozen=True)
class OracleResult:
    structure: str
    value: float
    space_size: int


def space_size(spec: dict) -> int:
    """``n**L`` computed from the objective settings before building any table."""
    n = build_alphabet(spec).size
    if spec["kind"] == "lattice":
        L = len(spec["target"])
    elif spec["kind"] == "table" and "values" in spec:
        L = len(next(iter(spec["values"])))
    else:
        L = spec["L"]
    return n**L


def oracle(spec: dict, limit: int = ENUMERATION_LIMIT) -> OracleResult:
    """Best structure in the objective's own units (lowest energy when minimizing)."""
    if spec.get("eos"):
        raise ValueError("the oracle enumerates fixed-length spaces only")
    size = space_size(spec)
    if size > limit:
        raise SpaceTooLarge(f"space of {size:.3e} structures exceeds enumeration limit {limit}")
    obj = build_objective(spec)
    try:
        s, v = brute_force_optimum(maximization_view(obj), limit)
    finally:
        close = getattr(obj, "close", None)
        if close is not None:
            close()
    return OracleResult(str(s), -v if obj.minimize else v, size)
