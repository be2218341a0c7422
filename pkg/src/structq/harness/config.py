"""Experiment configuration: YAML schema, validation and objective construction.

Schema (every key except ``objective`` and ``agents`` is optional)::

    objective:
      kind: nk            # table | nk | lattice | external
      n: 8                # first n letters A, B, ...; or
      alphabet: amino     # "amino" or an explicit symbol string
      eos: false          # variable-length structures
      L: 8
      K: 2                # nk only
      seed: 0             # table / nk / lattice
      values: {AB: 1.0}   # table only: explicit mapping instead of a seed
      target: ACDEFG      # lattice only (sets L)
      coupling: 0.5       # lattice only
      command: ./sim      # external only
      timeout: 30         # external only
      minimize: true      # external only
    antigen: 1ADQ_A       # quantile row used by the report
    agents:
      - kind: sql
        decoder: masked   # any AgentConfig field
      - rs
    seeds: [0, 1, 2]
    budget: 500
    output: runs/nk
    jobs: 1
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from ..agents.config import KINDS, AgentConfig
from ..core import Alphabet
from ..objectives import (
    ExternalProcessObjective,
    LatticeContactProxy,
    NkLandscape,
    QuantileTable,
    TableObjective,
)

OBJECTIVE_KINDS = ("table", "nk", "lattice", "external")
OUTPUT_ROOT_ENV = "STRUCTQ_OUTPUT_ROOT"

_AGENT_FIELDS = {f.name for f in dataclasses.fields(AgentConfig)} - {"seed", "budget"}
_OBJECTIVE_KEYS = {
    "kind", "n", "alphabet", "eos", "L", "K", "seed", "values", "target",
    "coupling", "command", "timeout", "minimize",
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ExperimentConfig:
    objective: dict
    agents: tuple[dict, ...]
    seeds: tuple[int, ...] = (0,)
    budget: int = 500
    output: str = "runs"
    jobs: int = 1
    antigen: str | None = None

    def agent_configs(self, seed: int) -> list[AgentConfig]:
        return [AgentConfig(seed=seed, budget=self.budget, **a) for a in self.agents]

    def output_dir(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        out = Path(self.output)
        return Path(root) / out if root and not out.is_absolute() else out

    def to_dict(self) -> dict:
        d = {
            "objective": dict(self.objective),
            "agents": [dict(a) for a in self.agents],
            "seeds": list(self.seeds),
            "budget": self.budget,
            "output": self.output,
            "jobs": self.jobs,
        }
        if self.antigen is not None:
            d["antigen"] = self.antigen
        return d

    def digest(self) -> str:
        """Hash of everything that affects run CSVs (output and jobs excluded)."""
        d = self.to_dict()
        d.pop("output")
        d.pop("jobs")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return value


def _objective(raw, path: str = "objective") -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a mapping")
    unknown = set(raw) - _OBJECTIVE_KEYS
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    kind = raw.get("kind")
    if kind not in OBJECTIVE_KINDS:
        raise ConfigError(f"{path}.kind", f"expected one of {OBJECTIVE_KINDS}, got {kind!r}")
    spec = dict(raw)
    if "n" in spec and "alphabet" in spec:
        raise ConfigError(f"{path}.n", "give either n or alphabet")
    if "n" in spec:
        _int(spec["n"], f"{path}.n", 2)
    if kind == "lattice":
        if not isinstance(spec.get("target"), str) or not spec["target"]:
            raise ConfigError(f"{path}.target", "lattice objective needs a target string")
    elif kind == "table" and "values" in spec:
        if not isinstance(spec["values"], dict) or not spec["values"]:
            raise ConfigError(f"{path}.values", "expected a non-empty mapping")
    else:
        _int(spec.get("L"), f"{path}.L", 1)
    if kind == "nk":
        _int(spec.get("K"), f"{path}.K", 0)
    if kind == "external" and not spec.get("command"):
        raise ConfigError(f"{path}.command", "external objective needs a command")
    try:
        build_alphabet(spec)
    except ValueError as exc:
        raise ConfigError(f"{path}.alphabet", str(exc)) from None
    return spec


def _agent(raw, path: str) -> dict:
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a kind name or a mapping")
    if raw.get("kind") not in KINDS:
        raise ConfigError(f"{path}.kind", f"expected one of {KINDS}, got {raw.get('kind')!r}")
    for key in raw:
        if key not in _AGENT_FIELDS:
            raise ConfigError(f"{path}.{key}", "unknown agent field")
    try:
        AgentConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None
    return dict(raw)


def parse_config(raw: Any) -> ExperimentConfig:
    """Validate a decoded YAML document."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    known = {"objective", "agents", "seeds", "budget", "output", "jobs", "antigen"}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown key")
    if "objective" not in raw:
        raise ConfigError("objective", "missing")
    objective = _objective(raw["objective"])
    agents = raw.get("agents")
    if not isinstance(agents, list) or not agents:
        raise ConfigError("agents", "expected a non-empty list")
    agents = tuple(_agent(a, f"agents[{i}]") for i, a in enumerate(agents))
    seeds = raw.get("seeds", [0])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "expected a non-empty list of integers")
    for i, s in enumerate(seeds):
        _int(s, f"seeds[{i}]", 0)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds", "seeds must be distinct")
    budget = _int(raw.get("budget", 500), "budget", 1)
    jobs = _int(raw.get("jobs", 1), "jobs", 1)
    output = raw.get("output", "runs")
    if not isinstance(output, str) or not output:
        raise ConfigError("output", "expected a path string")
    antigen = raw.get("antigen")
    if antigen is not None and antigen not in QuantileTable.shipped():
        raise ConfigError("antigen", f"unknown antigen id {antigen!r}")
    cfg = ExperimentConfig(objective, agents, tuple(seeds), budget, output, jobs, antigen)
    tags = set()
    for i, a in enumerate(agents):
        try:
            tag = AgentConfig(budget=budget, **a).tag
        except ValueError as exc:
            raise ConfigError(f"agents[{i}]", str(exc)) from None
        if tag in tags:
            # run files are named after the tag
            raise ConfigError(f"agents[{i}]", f"duplicate agent tag {tag!r}; set a distinct name")
        tags.add(tag)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML: {exc}") from None
    return parse_config(raw)


def apply_overrides(cfg: ExperimentConfig, *, seeds=None, budget=None, agents=None,
                    objective=None, antigen=None, jobs=None) -> ExperimentConfig:
    """Re-validate ``cfg`` with command-line overrides applied."""
    raw = cfg.to_dict()
    if seeds is not None:
        raw["seeds"] = list(seeds)
    if budget is not None:
        raw["budget"] = budget
    if agents is not None:
        raw["agents"] = list(agents)
    if objective is not None:
        raw["objective"] = {**raw["objective"], "kind": objective}
    if antigen is not None:
        raw["antigen"] = antigen
    if jobs is not None:
        raw["jobs"] = jobs
    return parse_config(raw)


def build_alphabet(spec: dict) -> Alphabet:
    eos = bool(spec.get("eos", False))
    if "n" in spec:
        return Alphabet(Alphabet.first(spec["n"]).symbols, includes_eos=eos)
    name = spec.get("alphabet", "amino")
    if name == "amino":
        return Alphabet(Alphabet.amino_acids().symbols, includes_eos=eos)
    return Alphabet(name, includes_eos=eos)


def build_objective(spec: dict):
    """Fresh objective instance for one cell (never shared between cells)."""
    alphabet = build_alphabet(spec)
    kind = spec["kind"]
    if kind == "table":
        if "values" in spec:
            return TableObjective.from_mapping(alphabet, {str(k): float(v) for k, v in spec["values"].items()})
        return TableObjective.random(alphabet, spec["L"], seed=spec.get("seed", 0))
    if kind == "nk":
        return NkLandscape(alphabet, spec["L"], spec["K"], seed=spec.get("seed", 0))
    if kind == "lattice":
        return LatticeContactProxy(alphabet, spec["target"], seed=spec.get("seed", 0),
                                   coupling=spec.get("coupling", 0.5))
    return ExternalProcessObjective(alphabet, spec["L"], spec["command"],
                                    timeout=spec.get("timeout", 30.0),
                                    minimize=spec.get("minimize", True))
