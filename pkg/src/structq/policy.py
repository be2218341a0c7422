"""Exploration operators, acceptance criteria and stochastic decoding."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MASK, Alphabet, InvalidStructureError, StructBuffer, Structure
from .critic import StructureCritic, _allowed, greedy_decode, masked_decode


def random_structure(alphabet: Alphabet, L: int, rng: np.random.Generator) -> Structure:
    """Uniform structure; in EOS mode the length is uniform on 1..L first."""
    eos = alphabet.eos_code
    if eos is None:
        return Structure(tuple(int(c) for c in rng.integers(alphabet.size, size=L)), alphabet)
    length = int(rng.integers(1, L + 1))
    body = [int(c) for c in rng.integers(alphabet.size - 1, size=length)]
    if length < L:
        body.append(eos)
    return Structure(tuple(body + [MASK] * (L - len(body))), alphabet)


def _body(s: Structure) -> list[int]:
    return list(s.effective())


def _rebuild(body: list[int], s: Structure) -> Structure:
    L = len(s)
    eos = s.alphabet.eos_code
    codes = list(body)
    if eos is not None and len(codes) < L:
        codes.append(eos)
    return Structure(tuple(codes + [MASK] * (L - len(codes))), s.alphabet)


def replace_at(s: Structure, position: int, symbol: str | int) -> Structure:
    code = s.alphabet.code(symbol)
    body = _body(s)
    if not 0 <= position < len(body):
        raise InvalidStructureError(f"position {position} outside structure")
    if code == s.alphabet.eos_code:
        raise InvalidStructureError("replace cannot introduce EOS")
    body[position] = code
    return _rebuild(body, s)


def phi_replace(buffer: StructBuffer, rng: np.random.Generator) -> Structure:
    """Mutate one uniformly chosen slot of a uniformly chosen buffer entry.

    The new symbol is uniform over the alphabet minus the current symbol
    (and minus EOS), so the result always differs in exactly one slot.
    """
    source, _ = buffer.sample_uniform(rng)
    return replace_random(source, rng)


def replace_random(source: Structure, rng: np.random.Generator) -> Structure:
    symbols = source.alphabet.size - (source.alphabet.includes_eos and 1)
    if symbols < 2:
        raise InvalidStructureError("replace needs at least two symbols")
    body = _body(source)
    j = int(rng.integers(len(body)))
    k = int(rng.integers(symbols - 1))
    new = k if k < body[j] else k + 1
    return replace_at(source, j, new)


def _require_eos(s: Structure) -> None:
    if not s.alphabet.includes_eos:
        raise InvalidStructureError("shrink/expand need an EOS alphabet")


def phi_shrink(s: Structure, rng: np.random.Generator, position: int | None = None) -> Structure:
    _require_eos(s)
    body = _body(s)
    if len(body) < 2:
        raise InvalidStructureError("cannot shrink below length 1")
    j = int(rng.integers(len(body))) if position is None else position
    del body[j]
    return _rebuild(body, s)


def phi_expand(s: Structure, rng: np.random.Generator, position: int | None = None,
               symbol: str | int | None = None) -> Structure:
    _require_eos(s)
    body = _body(s)
    if len(body) >= len(s):
        raise InvalidStructureError("structure already at capacity")
    j = int(rng.integers(len(body) + 1)) if position is None else position
    code = int(rng.integers(s.alphabet.size - 1)) if symbol is None else s.alphabet.code(symbol)
    if code == s.alphabet.eos_code:
        raise InvalidStructureError("expand cannot insert EOS")
    body.insert(j, code)
    return _rebuild(body, s)


@dataclass
class ExplorationOperator:
    """``replace`` (default), ``shrink``, ``expand``, ``uniform-random`` or
    ``mixed`` (uniform choice among the legal replace/shrink/expand)."""

    kind: str = "replace"

    def __call__(self, buffer: StructBuffer, rng: np.random.Generator) -> Structure:
        if self.kind == "uniform-random":
            return random_structure(buffer.alphabet, buffer.L, rng)
        source, _ = buffer.sample_uniform(rng)
        kind = self.kind
        if kind == "mixed":
            size = len(source.effective())
            legal = ["replace"]
            if source.alphabet.includes_eos:
                legal += ["shrink"] * (size >= 2) + ["expand"] * (size < len(source))
            kind = legal[int(rng.integers(len(legal)))]
        if kind == "replace":
            return replace_random(source, rng)
        if kind == "shrink":
            return phi_shrink(source, rng)
        if kind == "expand":
            return phi_expand(source, rng)
        raise ValueError(f"unknown exploration operator {self.kind!r}")


# ---------------------------------------------------------------------------
# acceptance criteria


@dataclass
class EGreedy:
    horizon: int
    eps_min: float = 0.05
    kind = "e-greedy"

    def epsilon(self, n: int) -> float:
        if n < 0:
            raise ValueError("step index must be non-negative")
        if n >= self.horizon:
            return self.eps_min
        return 1.0 - (1.0 - self.eps_min) * n / self.horizon


@dataclass
class SGreedy:
    """Compare a secondary critic's scores of the exploit/explore candidates."""

    secondary: StructureCritic | None = None
    temperature: float = 1.0
    kind = "s-greedy"


@dataclass
class Sampling:
    kind = "sampling"


def sgreedy_probability(s2_star: float, s2_hat: float, temperature: float = 1.0) -> float:
    diff = s2_star - s2_hat
    if diff > 0:
        return 1.0
    return min(1.0, math.exp(diff / temperature))


def accept_probability(criterion, n: int, s_star: Structure | None = None,
                       s_hat: Structure | None = None) -> float:
    """Probability of evaluating the exploit candidate ``s_star``."""
    if n < 0:
        raise ValueError("step index must be non-negative")
    if isinstance(criterion, EGreedy):
        return 1.0 - criterion.epsilon(n)
    if isinstance(criterion, SGreedy):
        if criterion.secondary is None:
            raise ValueError("s-greedy needs a secondary critic")
        s2 = criterion.secondary.score(np.array([s_star.codes, s_hat.codes]))
        return sgreedy_probability(float(s2[0]), float(s2[1]), criterion.temperature)
    if isinstance(criterion, Sampling):
        return 1.0
    raise TypeError(f"unknown criterion {criterion!r}")


# ---------------------------------------------------------------------------
# sampling from a critic


def softmax_sample(scores: np.ndarray, rng: np.random.Generator, temperature: float = 1.0) -> int:
    """Draw an index with probability proportional to ``exp(score / T)``."""
    # -inf marks disallowed symbols; anything else must be finite
    if np.isnan(scores).any() or np.isposinf(scores).any() or not np.isfinite(scores).any():
        raise ValueError("non-finite scores")
    if temperature == 0.0:
        return int(np.argmax(scores))
    z = scores / temperature
    z = z - z[np.isfinite(z)].max()
    p = np.exp(z)
    p /= p.sum()
    # inverse CDF keeps one uniform draw per choice
    return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), len(p) - 1))


def sample_decode(critic: StructureCritic, rng: np.random.Generator,
                  temperature: float = 1.0) -> Structure:
    """Draw a structure from the softmax of the critic's candidate scores.

    Causal critics sample slot by slot conditioned on the drawn prefix;
    masked critics sample every slot independently from one pass on
    ``[MASK]*L``. ``temperature=0`` is the argmax decoder.
    """
    if temperature == 0.0:
        return greedy_decode(critic) if critic.causal else masked_decode(critic)
    L = critic.L
    eos = critic.alphabet.eos_code
    codes = np.full(L, MASK, dtype=np.int64)
    if not critic.causal:
        sc = critic.position_scores(codes[None, :])[0]
    for t in range(L):
        row = critic.position_scores(codes[None, :])[0, t] if critic.causal else sc[t]
        row = np.where(_allowed(critic, t), row, -np.inf)
        codes[t] = softmax_sample(row, rng, temperature)
        if codes[t] == eos:
            break
    return Structure(tuple(int(c) for c in codes), critic.alphabet)
