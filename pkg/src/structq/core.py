"""Structures, the variable allocation MDP, and the structure buffer.

Structures are stored as tuples of integer codes into an :class:`Alphabet`;
``MASK`` is the reserved code ``-1`` and never part of the alphabet.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

MASK = -1
MASK_CHAR = "_"
EOS_CHAR = "."

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"


class StructqError(Exception):
    """Base class for errors raised by this package."""


class InvalidStructureError(StructqError, ValueError):
    pass


class EmptyBufferError(StructqError, LookupError):
    pass


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of single-character symbols.

    With ``includes_eos`` the end-of-sequence symbol is appended as the last
    code, so ``eos_code == size - 1``.
    """

    symbols: tuple[str, ...]
    includes_eos: bool = False

    def __init__(self, symbols: Iterable[str], includes_eos: bool = False):
        syms = tuple(symbols)
        if includes_eos and EOS_CHAR not in syms:
            syms = syms + (EOS_CHAR,)
        if not includes_eos and EOS_CHAR in syms:
            raise ValueError(f"{EOS_CHAR!r} is reserved for EOS")
        if len(set(syms)) != len(syms):
            raise ValueError("alphabet symbols must be distinct")
        if len(syms) < 2:
            raise ValueError("alphabet needs at least two symbols")
        for s in syms:
            if len(s) != 1 or s.isspace() or s in (MASK_CHAR, ",", '"'):
                raise ValueError(f"invalid symbol {s!r}")
        if includes_eos and syms[-1] != EOS_CHAR:
            syms = tuple(s for s in syms if s != EOS_CHAR) + (EOS_CHAR,)
        object.__setattr__(self, "symbols", syms)
        object.__setattr__(self, "includes_eos", includes_eos)

    @classmethod
    def amino_acids(cls) -> "Alphabet":
        return cls(AMINO_ACIDS)

    @classmethod
    def first(cls, n: int) -> "Alphabet":
        """The first ``n`` letters of ``ABCD...``."""
        return cls("ABCDEFGHIJKLMNOPQRSTUVWXYZ"[:n])

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def eos_code(self) -> int | None:
        return self.size - 1 if self.includes_eos else None

    def code(self, symbol: str | int) -> int:
        if isinstance(symbol, (int, np.integer)):
            if not 0 <= symbol < self.size:
                raise InvalidStructureError(f"symbol code {symbol} outside alphabet")
            return int(symbol)
        try:
            return self.symbols.index(symbol)
        except ValueError:
            if symbol == MASK_CHAR:
                raise InvalidStructureError("MASK is not an action") from None
            raise InvalidStructureError(f"unknown symbol {symbol!r}") from None

    def encode(self, text: str, length: int | None = None) -> "Structure":
        """Parse ``text`` (``_`` for MASK), right-padding with MASK to ``length``."""
        codes = [MASK if ch == MASK_CHAR else self.code(ch) for ch in text]
        if length is not None:
            if len(codes) > length:
                raise InvalidStructureError(f"{text!r} longer than {length}")
            codes += [MASK] * (length - len(codes))
        return Structure(tuple(codes), self)

    def decode(self, codes: Sequence[int]) -> str:
        return "".join(MASK_CHAR if c == MASK else self.symbols[c] for c in codes)


@dataclass(frozen=True)
class Structure:
    codes: tuple[int, ...]
    alphabet: Alphabet = field(compare=False, repr=False)

    @classmethod
    def empty(cls, alphabet: Alphabet, length: int) -> "Structure":
        if length < 1:
            raise ValueError("structure length must be positive")
        return cls((MASK,) * length, alphabet)

    @property
    def L(self) -> int:
        return len(self.codes)

    def __len__(self) -> int:
        return len(self.codes)

    def __str__(self) -> str:
        return self.alphabet.decode(self.codes)

    @property
    def allocated(self) -> int:
        """Number of leading non-MASK slots."""
        for i, c in enumerate(self.codes):
            if c == MASK:
                return i
        return len(self.codes)

    @property
    def is_complete(self) -> bool:
        eos = self.alphabet.eos_code
        for c in self.codes:
            if c == MASK:
                return False
            if c == eos:
                return True
        return True

    def effective(self) -> tuple[int, ...]:
        """Codes that an objective sees: everything before EOS."""
        eos = self.alphabet.eos_code
        if eos is not None and eos in self.codes:
            return self.codes[: self.codes.index(eos)]
        return self.codes

    def effective_str(self) -> str:
        return self.alphabet.decode(self.effective())

    def as_array(self) -> np.ndarray:
        return np.asarray(self.codes, dtype=np.int64)


def complete(s: Structure) -> bool:
    return s.is_complete


def transition(obs: Structure, action: str | int) -> Structure:
    """Allocate ``action`` into the leftmost MASK slot of ``obs``."""
    code = obs.alphabet.code(action)
    if obs.is_complete:
        raise InvalidStructureError(f"structure {obs} is complete")
    i = obs.codes.index(MASK)
    return Structure(obs.codes[:i] + (code,) + obs.codes[i + 1 :], obs.alphabet)


def reward(obs: Structure, action: str | int, next_obs: Structure, objective) -> float:
    # the transition is deterministic, so r(o, a, o') only depends on o'
    if not next_obs.is_complete:
        return 0.0
    return objective.evaluate(next_obs)


@dataclass
class VampEnv:
    """Episode state for allocating one symbol per step into ``[MASK]*L``."""

    alphabet: Alphabet
    L: int
    objective: object
    gamma: float = 1.0
    obs: Structure = field(init=False)
    t: int = field(init=False, default=0)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        self.reset()

    def reset(self) -> Structure:
        self.obs = Structure.empty(self.alphabet, self.L)
        self.t = 0
        return self.obs

    def step(self, action: str | int) -> tuple[Structure, float, bool]:
        nxt = transition(self.obs, action)
        r = reward(self.obs, action, nxt, self.objective)
        self.obs = nxt
        self.t += 1
        return nxt, r, nxt.is_complete


@dataclass(frozen=True)
class RolloutResult:
    structure: Structure
    ret: float
    value: float
    rewards: tuple[float, ...]


def rollout(env: VampEnv, policy: Callable[[Structure], str | int]) -> RolloutResult:
    """Run one episode; ``ret`` is the discounted return, ``value`` the raw f."""
    obs = env.reset()
    ret = 0.0
    discount = 1.0
    rewards = []
    done = False
    while not done:
        action = policy(obs)
        obs, r, done = env.step(action)
        rewards.append(r)
        ret += discount * r
        discount *= env.gamma
    return RolloutResult(obs, ret, rewards[-1], tuple(rewards))


class StructBuffer:
    """Append-only store of evaluated complete structures.

    Codes are mirrored into a growing ``int64`` matrix so training code can
    sample batches without touching Python objects.
    """

    def __init__(self, alphabet: Alphabet, L: int, capacity: int | None = None):
        self.alphabet = alphabet
        self.L = L
        self.capacity = capacity
        self._codes = np.empty((64, L), dtype=np.int64)
        self._values = np.empty(64, dtype=np.float64)
        self._n = 0
        self._start = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._n - self._start

    def insert(self, s: Structure, value: float) -> None:
        if len(s) != self.L:
            raise InvalidStructureError(f"expected length {self.L}, got {len(s)}")
        if not s.is_complete:
            raise InvalidStructureError(f"cannot buffer incomplete structure {s}")
        with self._lock:
            if self._n == len(self._values):
                self._grow()
            self._codes[self._n] = s.codes
            self._values[self._n] = value
            self._n += 1
            if self.capacity is not None and len(self) > self.capacity:
                self._start += 1

    def _grow(self) -> None:
        live = slice(self._start, self._n)
        size = max(64, 2 * len(self))
        codes = np.empty((size, self.L), dtype=np.int64)
        values = np.empty(size, dtype=np.float64)
        codes[: len(self)] = self._codes[live]
        values[: len(self)] = self._values[live]
        self._n -= self._start
        self._start = 0
        self._codes, self._values = codes, values

    @property
    def codes(self) -> np.ndarray:
        return self._codes[self._start : self._n]

    @property
    def values(self) -> np.ndarray:
        return self._values[self._start : self._n]

    def __getitem__(self, i: int) -> tuple[Structure, float]:
        n = len(self)
        if not -n <= i < n:
            raise IndexError(i)
        i %= n
        return (
            Structure(tuple(int(c) for c in self.codes[i]), self.alphabet),
            float(self.values[i]),
        )

    def sample_index(self, rng: np.random.Generator, size: int | None = None):
        if len(self) == 0:
            raise EmptyBufferError("buffer is empty")
        return rng.integers(len(self), size=size)

    def sample_uniform(self, rng: np.random.Generator) -> tuple[Structure, float]:
        return self[int(self.sample_index(rng))]

    def best(self) -> tuple[Structure, float]:
        if len(self) == 0:
            raise EmptyBufferError("buffer is empty")
        # np.argmax returns the first maximum, i.e. the earliest insertion
        return self[int(np.argmax(self.values))]


def buffer_insert(buf: StructBuffer, s: Structure, v: float) -> None:
    buf.insert(s, v)


def buffer_sample_uniform(buf: StructBuffer, rng: np.random.Generator):
    return buf.sample_uniform(rng)


def buffer_best(buf: StructBuffer):
    return buf.best()


@dataclass(frozen=True)
class RunRecord:
    step: int
    structure: str
    value: float
    best_so_far: float
    accepted_exploit: bool
    agent_tag: str


class RecordLog:
    """Accumulates :class:`RunRecord` rows and tracks the running best."""

    def __init__(self, agent_tag: str):
        self.agent_tag = agent_tag
        self.records: list[RunRecord] = []
        self.best = -np.inf

    def log(self, s: Structure, value: float, accepted_exploit: bool = False) -> RunRecord:
        self.best = max(self.best, value)
        rec = RunRecord(
            step=len(self.records),
            structure=str(s),
            value=value,
            best_so_far=self.best,
            accepted_exploit=accepted_exploit,
            agent_tag=self.agent_tag,
        )
        self.records.append(rec)
        return rec
