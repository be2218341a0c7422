"""Black-box objective functions, evaluation budgets and quantile normalisation.

Every objective is maximised. Energy-like objectives (lower is better) set
``minimize = True`` and are wrapped in :class:`Negated` before an agent sees
them, so logged values can always be converted back with ``-value``.
"""
from __future__ import annotations

import csv
import io
import selectors
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .core import Alphabet, InvalidStructureError, Structure, StructqError

ENUMERATION_LIMIT = 10**6


class BudgetExhausted(StructqError):
    """Raised when an objective is called past its evaluation budget."""


class ObjectiveError(StructqError):
    pass


class ObjectiveTimeout(ObjectiveError, TimeoutError):
    pass


class SpaceTooLarge(StructqError, ValueError):
    pass


class ObjectiveFunction:
    """Base class: subclasses implement ``_value(codes)`` on effective codes."""

    minimize = False

    def __init__(self, alphabet: Alphabet, L: int, budget: int | None = None):
        self.alphabet = alphabet
        self.L = L
        self.budget = budget
        self.eval_count = 0
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int | None:
        return None if self.budget is None else self.budget - self.eval_count

    def evaluate(self, s: Structure) -> float:
        if len(s) != self.L:
            raise InvalidStructureError(f"expected length {self.L}, got {len(s)}")
        if not s.is_complete:
            raise InvalidStructureError(f"cannot evaluate incomplete structure {s}")
        with self._lock:
            if self.budget is not None and self.eval_count >= self.budget:
                raise BudgetExhausted(f"budget of {self.budget} evaluations used up")
            self.eval_count += 1
        return float(self._value(s.effective()))

    __call__ = evaluate

    def _value(self, codes: tuple[int, ...]) -> float:
        raise NotImplementedError

    def values(self, codes: np.ndarray) -> np.ndarray:
        """Uncounted batch evaluation of complete fixed-length code rows."""
        return np.array([self._value(tuple(int(c) for c in row)) for row in codes])

    def space_size(self) -> int:
        return self.alphabet.size**self.L


class Negated(ObjectiveFunction):
    """Maximisation view of an energy objective; shares the inner counter."""

    def __init__(self, inner: ObjectiveFunction):
        self.inner = inner
        self.alphabet = inner.alphabet
        self.L = inner.L

    @property
    def budget(self):
        return self.inner.budget

    @property
    def eval_count(self):
        return self.inner.eval_count

    def evaluate(self, s: Structure) -> float:
        return -self.inner.evaluate(s)

    __call__ = evaluate

    def _value(self, codes):
        return -self.inner._value(codes)

    def values(self, codes):
        return -self.inner.values(codes)


def maximization_view(obj: ObjectiveFunction) -> ObjectiveFunction:
    return Negated(obj) if obj.minimize else obj


def all_structures(n: int, L: int) -> np.ndarray:
    """Every code row of ``n**L`` in lexicographic symbol order."""
    grids = np.indices((n,) * L).reshape(L, -1).T
    return np.ascontiguousarray(grids, dtype=np.int64)


class TableObjective(ObjectiveFunction):
    """Explicit lookup table over every structure in lexicographic order."""

    def __init__(self, alphabet: Alphabet, L: int, table, budget=None, seed=None):
        super().__init__(alphabet, L, budget)
        table = np.asarray(table, dtype=np.float64).ravel()
        if table.size != alphabet.size**L:
            raise ValueError(f"table needs {alphabet.size**L} entries, got {table.size}")
        self.table = table
        self.seed = seed
        self._radix = alphabet.size ** np.arange(L - 1, -1, -1, dtype=np.int64)

    @classmethod
    def random(cls, alphabet: Alphabet, L: int, seed: int, budget=None) -> "TableObjective":
        size = alphabet.size**L
        if size > ENUMERATION_LIMIT:
            raise SpaceTooLarge(f"table of {size} entries exceeds {ENUMERATION_LIMIT}")
        rng = np.random.default_rng(seed)
        return cls(alphabet, L, rng.standard_normal(size), budget=budget, seed=seed)

    @classmethod
    def from_mapping(cls, alphabet: Alphabet, mapping: Mapping[str, float], budget=None):
        L = len(next(iter(mapping)))
        table = np.full(alphabet.size**L, np.nan)
        obj = cls(alphabet, L, np.zeros(alphabet.size**L), budget=budget)
        for key, v in mapping.items():
            table[obj.index(alphabet.encode(key).codes)] = v
        if np.isnan(table).any():
            raise ValueError("mapping does not cover every structure")
        obj.table = table
        return obj

    def index(self, codes) -> int:
        return int(np.dot(np.asarray(codes, dtype=np.int64), self._radix))

    def _value(self, codes):
        return self.table[self.index(codes)]

    def values(self, codes):
        return self.table[np.asarray(codes, dtype=np.int64) @ self._radix]


class NkLandscape(ObjectiveFunction):
    """NK landscape over an ``n``-ary alphabet.

    Position ``i`` interacts with the ``K`` positions that follow it
    (cyclically); its contribution is read from a seeded uniform table of
    size ``n**(K+1)``. The value is the mean contribution.
    """

    def __init__(self, alphabet: Alphabet, L: int, K: int, seed: int, budget=None):
        super().__init__(alphabet, L, budget)
        if not 0 <= K < L:
            raise ValueError("need 0 <= K < L")
        n = alphabet.size
        self.K = K
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.tables = rng.random((L, n ** (K + 1)))
        self.neighbors = (np.arange(L)[:, None] + np.arange(K + 1)[None, :]) % L
        self._radix = n ** np.arange(K, -1, -1, dtype=np.int64)

    def contributions(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        idx = codes[..., self.neighbors] @ self._radix
        return self.tables[np.arange(self.L), idx]

    def _value(self, codes):
        return self.contributions(codes).mean()

    def values(self, codes):
        return self.contributions(codes).mean(axis=-1)


class LatticeContactProxy(ObjectiveFunction):
    """Cheap binding-energy stand-in (lower is better).

    energy(s) = sum_i M[s_i, target_i] + coupling * sum_i M[s_i, s_{i+1}]
    with ``M`` a seeded symmetric interaction matrix. Shorter sequences
    (EOS mode) only pay for the positions they occupy.
    """

    minimize = True

    def __init__(self, alphabet: Alphabet, target: str, seed: int,
                 coupling: float = 0.5, budget=None):
        super().__init__(alphabet, len(target), budget)
        n = alphabet.size
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n, n))
        self.matrix = (a + a.T) / 2.0
        self.target = np.array([alphabet.code(c) for c in target], dtype=np.int64)
        self.coupling = coupling
        self.seed = seed

    def _value(self, codes):
        c = np.asarray(codes, dtype=np.int64)
        if c.size == 0:
            return 0.0
        e = self.matrix[c, self.target[: c.size]].sum()
        e += self.coupling * self.matrix[c[:-1], c[1:]].sum()
        return float(e)

    def values(self, codes):
        c = np.asarray(codes, dtype=np.int64)
        e = self.matrix[c, self.target].sum(axis=-1)
        return e + self.coupling * self.matrix[c[:, :-1], c[:, 1:]].sum(axis=-1)


class ExternalProcessObjective(ObjectiveFunction):
    """Evaluates structures by talking to a child process over stdin/stdout.

    Protocol (one line each, UTF-8): ``EVAL <seq>`` answered by
    ``OK <seq> <float>`` or ``ERR <seq> <message>``. Returns the raw
    simulator value; energies are negated by :class:`Negated`.
    """

    def __init__(self, alphabet: Alphabet, L: int, command: str | Sequence[str],
                 timeout: float = 30.0, minimize: bool = True, budget=None):
        super().__init__(alphabet, L, budget)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.minimize = minimize
        self._proc: subprocess.Popen | None = None
        self._sel: selectors.DefaultSelector | None = None
        self._pending = b""

    def _start(self) -> None:
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
        )
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._proc.stdout, selectors.EVENT_READ)
        self._pending = b""

    def _readline(self) -> str:
        deadline = time.monotonic() + self.timeout
        while b"\n" not in self._pending:
            left = deadline - time.monotonic()
            if left <= 0 or not self._sel.select(left):
                self.close()
                raise ObjectiveTimeout(f"no response within {self.timeout}s")
            chunk = self._proc.stdout.read1(4096) if hasattr(self._proc.stdout, "read1") \
                else self._proc.stdout.read(4096)
            if not chunk:
                self.close()
                raise ObjectiveError("objective process exited")
            self._pending += chunk
        line, self._pending = self._pending.split(b"\n", 1)
        return line.decode("utf-8").strip()

    def query(self, seq: str) -> float:
        if self._proc is None or self._proc.poll() is not None:
            self._start()
        try:
            self._proc.stdin.write(f"EVAL {seq}\n".encode("utf-8"))
            self._proc.stdin.flush()
        except BrokenPipeError:
            self.close()
            raise ObjectiveError("objective process closed its input") from None
        parts = self._readline().split(" ", 2)
        if len(parts) < 3 or parts[1] != seq:
            raise ObjectiveError(f"malformed or mismatched response {parts!r} for {seq}")
        if parts[0] == "ERR":
            raise ObjectiveError(f"{seq}: {parts[2]}")
        if parts[0] != "OK":
            raise ObjectiveError(f"unknown response status {parts[0]!r}")
        return float(parts[2])

    def _value(self, codes):
        return self.query(self.alphabet.decode(codes))

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.poll() is None:
                self._proc.kill()
            self._proc.wait()
            self._proc.stdin.close()
            self._proc.stdout.close()
            self._sel.close()
        self._proc = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def brute_force_optimum(obj: ObjectiveFunction, limit: int = ENUMERATION_LIMIT):
    """Exact argmax by enumeration; ties go to the lexicographically first."""
    size = obj.space_size()
    if size > limit:
        raise SpaceTooLarge(f"space of {size:.3e} structures exceeds enumeration limit {limit}")
    codes = all_structures(obj.alphabet.size, obj.L)
    vals = obj.values(codes)
    i = int(np.argmax(vals))
    return Structure(tuple(int(c) for c in codes[i]), obj.alphabet), float(vals[i])


# ---------------------------------------------------------------------------
# database quantiles

QUANTILE_COLUMNS = ("all", "p001", "p01", "p1", "p5", "p95")
CATEGORIES = ("super", "very-high", "high", "low", "weak")


class UnknownAntigen(StructqError, KeyError):
    pass


@dataclass(frozen=True)
class QuantileTable:
    """Energy thresholds per antigen; columns as in ``QUANTILE_COLUMNS``."""

    rows: Mapping[str, tuple[float, ...]]
    version: str = "v1"

    @classmethod
    def from_csv(cls, text: str, version: str = "v1") -> "QuantileTable":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != ("antigen",) + QUANTILE_COLUMNS:
            raise ValueError(f"unexpected quantile header {reader.fieldnames}")
        rows = {}
        for r in reader:
            vals = tuple(float(r[c]) for c in QUANTILE_COLUMNS)
            if any(b >= a for a, b in zip(vals[1:], vals)):
                raise ValueError(f"thresholds for {r['antigen']} not increasing")
            rows[r["antigen"]] = vals
        return cls(rows, version)

    @classmethod
    def shipped(cls) -> "QuantileTable":
        text = resources.files("structq.data").joinpath("absolut_quantiles_v1.csv").read_text()
        return cls.from_csv(text, "v1")

    def __contains__(self, antigen: str) -> bool:
        return antigen in self.rows

    def row(self, antigen: str) -> tuple[float, ...]:
        try:
            return self.rows[antigen]
        except KeyError:
            raise UnknownAntigen(antigen) from None


def normalize(value: float, antigen: str, table: QuantileTable | None = None) -> float:
    """Map an energy onto [0, 1] between the 95% row (0) and the best row (1)."""
    row = (table or QuantileTable.shipped()).row(antigen)
    best, worst = row[0], row[-1]
    return (worst - value) / (worst - best)


def categorize(value: float, antigen: str, table: QuantileTable | None = None) -> str:
    """Binder category by database quantile; ties go to the stronger class."""
    row = (table or QuantileTable.shipped()).row(antigen)
    # row[1:5] are the 0.01%, 0.1%, 1% and 5% thresholds
    for threshold, name in zip(row[1:5], CATEGORIES[:4]):
        if value <= threshold:
            return name
    return "weak"
