"""Structure critics and the decoders that read a best structure out of them.

A causal critic sees a structure shifted one slot to the right behind a
MASK start token, so row ``t`` of its output scores every candidate for
slot ``t`` given the prefix ``s[:t]``. The score of a prefix is the entry
of its last symbol; the score of a complete structure is row ``L-1``.

A masked (full attention) critic sees the structure with some slots
replaced by MASK and scores the candidates of every masked slot.

Scores are reported in objective units. Internally the network regresses
standardised targets, using the buffer mean and spread at training time.
"""
from __future__ import annotations

import heapq
import json

import numpy as np

from .core import MASK, Alphabet, EmptyBufferError, InvalidStructureError, StructBuffer, Structure
from .neural import checkpoint
from .neural.config import AttentionMode, EncoderConfig
from .neural.network import AdamState, adam_step, backward, forward, init_params, param_count


class StructureCritic:
    def __init__(self, alphabet: Alphabet, L: int, mode: AttentionMode | str,
                 rng: np.random.Generator, config: EncoderConfig | None = None,
                 batch_size: int = 32, train_steps: int = 4, lr: float = 1e-3,
                 mask_prob: float = 0.5):
        self.alphabet = alphabet
        self.L = L
        self.mode = AttentionMode(mode)
        self.config = config or EncoderConfig(n_actions=alphabet.size, max_len=L)
        if self.config.n_actions != alphabet.size or self.config.max_len < L:
            raise ValueError("encoder config does not match alphabet/length")
        self.rng = rng
        self.params = init_params(self.config, rng)
        self.adam = AdamState.for_params(self.params, lr=lr)
        self.batch_size = batch_size
        self.train_steps = train_steps
        self.mask_prob = mask_prob
        self.shift = 0.0
        self.scale = 1.0

    @property
    def causal(self) -> bool:
        return self.mode is AttentionMode.CAUSAL

    def param_count(self) -> int:
        return param_count(self.params)

    # -- encoding -----------------------------------------------------------

    def tokens(self, codes) -> np.ndarray:
        """MASK-padded codes as network input ids (shifted for causal critics)."""
        codes = np.atleast_2d(np.asarray(codes, dtype=np.int64))
        tok = np.where(codes == MASK, self.config.mask_token, codes)
        if self.causal:
            tok = np.concatenate(
                [np.full((tok.shape[0], 1), self.config.mask_token), tok[:, :-1]], axis=1
            )
        return tok

    def raw_scores(self, tokens) -> np.ndarray:
        return forward(self.params, tokens, self.mode, self.config).scores

    def position_scores(self, codes) -> np.ndarray:
        """``(N, L, n)`` candidate scores in objective units (eval mode)."""
        return self.shift + self.scale * self.raw_scores(self.tokens(codes))

    # -- training -----------------------------------------------------------

    def _targets(self, codes, values):
        """Dense target/selection arrays for a batch of complete structures."""
        B, L = codes.shape
        n = self.config.n_actions
        z = (values - self.shift) / self.scale
        targets = np.broadcast_to(z[:, None, None], (B, L, n))
        select = np.zeros((B, L, n), dtype=bool)
        live = _live_positions(codes, self.alphabet.eos_code)
        if self.causal:
            inputs = codes
            chosen = live
        else:
            chosen = (self.rng.random((B, L)) < self.mask_prob) & live
            # every row regresses at least one slot
            for b in np.flatnonzero(~chosen.any(axis=1)):
                chosen[b, self.rng.choice(np.flatnonzero(live[b]))] = True
            inputs = np.where(chosen, MASK, codes)
        bi, pi = np.nonzero(chosen)
        select[bi, pi, codes[bi, pi]] = True
        return self.tokens(inputs), targets, select

    def fit_scale(self, buffer: StructBuffer) -> None:
        vals = buffer.values
        self.shift = float(vals.mean())
        spread = float(vals.std())
        self.scale = spread if spread > 1e-12 else 1.0

    def train_step(self, buffer: StructBuffer, batch_size: int | None = None) -> float:
        """One Adam step of squared-error regression on a uniform buffer batch.

        Returns the batch loss in standardised units.
        """
        if len(buffer) == 0:
            raise EmptyBufferError("cannot train on an empty buffer")
        idx = buffer.sample_index(self.rng, batch_size or self.batch_size)
        return self.train_on(buffer.codes[idx], buffer.values[idx])

    def train_on(self, codes, values) -> float:
        tokens, targets, select = self._targets(np.asarray(codes), np.asarray(values, float))
        fwd = forward(self.params, tokens, self.mode, self.config, train=True, rng=self.rng)
        count = select.sum()
        err = np.where(select, fwd.scores - targets, 0.0)
        loss = float((err * err).sum() / count)
        grads = backward(self.params, fwd, self.config, dscores=2.0 * err / count)
        adam_step(self.params, grads, self.adam)
        return loss

    def train(self, buffer: StructBuffer, steps: int | None = None) -> list[float]:
        self.fit_scale(buffer)
        return [self.train_step(buffer) for _ in range(steps or self.train_steps)]

    # -- scoring ------------------------------------------------------------

    def score(self, codes) -> np.ndarray:
        """S(s) for complete structures.

        Causal: the score of the final symbol (of EOS when present).
        Masked: the mean over live slots of the score of the true symbol
        with only that slot masked.
        """
        codes = np.atleast_2d(np.asarray(codes, dtype=np.int64))
        N, L = codes.shape
        live = _live_positions(codes, self.alphabet.eos_code)
        last = live.sum(axis=1) - 1
        if self.causal:
            sc = self.position_scores(codes)
            return sc[np.arange(N), last, codes[np.arange(N), last]]
        # one input per (structure, slot) with that slot masked
        rep = np.repeat(codes, L, axis=0)
        slot = np.tile(np.arange(L), N)
        rep[np.arange(N * L), slot] = MASK
        sc = self.position_scores(rep)
        picked = sc[np.arange(N * L), slot, codes.ravel()].reshape(N, L)
        return np.where(live, picked, 0.0).sum(axis=1) / live.sum(axis=1)

    def score_structure(self, s: Structure) -> float:
        return float(self.score(np.array(s.codes))[0])

    # -- persistence --------------------------------------------------------

    def metadata(self) -> str:
        return json.dumps({
            "mode": self.mode.value, "config": self.config.digest(),
            "shift": self.shift, "scale": self.scale,
            "alphabet": "".join(self.alphabet.symbols), "L": self.L,
        }, sort_keys=True)

    def save(self, path) -> None:
        checkpoint.save(path, self.params, self.metadata())

    def load(self, path) -> None:
        arrays, meta = checkpoint.load(path)
        info = json.loads(meta)
        if info["mode"] != self.mode.value or info["config"] != self.config.digest():
            raise ValueError("checkpoint does not match this critic")
        if set(arrays) != set(self.params):
            raise ValueError("checkpoint parameter names differ")
        self.params = arrays
        self.adam = AdamState.for_params(self.params, lr=self.adam.lr)
        self.shift, self.scale = info["shift"], info["scale"]


def _live_positions(codes: np.ndarray, eos: int | None) -> np.ndarray:
    """Slots up to and including the first EOS (all slots without EOS)."""
    live = codes != MASK
    if eos is not None:
        after = np.cumsum(codes == eos, axis=1) - (codes == eos)
        live &= after == 0
    return live


def _allowed(critic: StructureCritic, position: int) -> np.ndarray:
    allowed = np.ones(critic.alphabet.size, dtype=bool)
    eos = critic.alphabet.eos_code
    if eos is not None and position == 0:
        allowed[eos] = False
    return allowed


def _require(critic: StructureCritic, causal: bool) -> None:
    if critic.causal != causal:
        want = "causal" if causal else "full-attention"
        raise ValueError(f"decoder needs a {want} critic")


def greedy_decode(critic: StructureCritic) -> Structure:
    """Left to right, keep the highest-scoring symbol for each slot."""
    _require(critic, causal=True)
    codes = np.full(critic.L, MASK, dtype=np.int64)
    eos = critic.alphabet.eos_code
    for t in range(critic.L):
        row = critic.position_scores(codes[None, :])[0, t]
        row = np.where(_allowed(critic, t), row, -np.inf)
        codes[t] = int(np.argmax(row))
        if codes[t] == eos:
            break
    return Structure(tuple(int(c) for c in codes), critic.alphabet)


def beam_decode(critic: StructureCritic, k: int) -> Structure:
    """Beam search ranked by prefix score; returns the best complete beam.

    Candidates are ordered by score, then lexicographically by codes, so
    ``k=1`` reproduces :func:`greedy_decode` exactly. For ``k > 1`` the
    greedy structure also competes in the final ranking.
    """
    _require(critic, causal=True)
    if k < 1:
        raise ValueError("beam width must be at least 1")
    L = critic.L
    n = critic.alphabet.size
    eos = critic.alphabet.eos_code
    # (codes, score, finished)
    beams = [(np.full(L, MASK, dtype=np.int64), 0.0, False)]
    for t in range(L):
        active = [b for b in beams if not b[2]]
        if not active:
            break
        cand = [b for b in beams if b[2]]
        rows = critic.position_scores(np.stack([b[0] for b in active]))[:, t]
        allowed = _allowed(critic, t)
        for (codes, _, _), row in zip(active, rows):
            for a in range(n):
                if not allowed[a]:
                    continue
                c = codes.copy()
                c[t] = a
                cand.append((c, float(row[a]), a == eos))
        cand.sort(key=lambda b: (-b[1], tuple(b[0])))
        beams = cand[:k]
    best = Structure(tuple(int(c) for c in beams[0][0]), critic.alphabet)
    if k > 1:
        # the greedy path can fall out of a prefix-ranked beam; keep it as a
        # final candidate so a wider beam never scores below greedy
        greedy = greedy_decode(critic)
        if all(tuple(b[0]) != greedy.codes for b in beams):
            if critic.score(np.array([greedy.codes]))[0] > beams[0][1]:
                best = greedy
    return best


def masked_decode(critic: StructureCritic) -> Structure:
    """Single pass on ``[MASK]*L``; per-slot argmax of the candidate scores.

    This factorises the joint argmax over all slots into independent
    per-slot choices.
    """
    _require(critic, causal=False)
    L = critic.L
    sc = critic.position_scores(np.full((1, L), MASK))[0]
    eos = critic.alphabet.eos_code
    codes = []
    for t in range(L):
        row = np.where(_allowed(critic, t), sc[t], -np.inf)
        a = int(np.argmax(row))
        codes.append(a)
        if a == eos:
            break
    codes += [MASK] * (L - len(codes))
    return Structure(tuple(codes), critic.alphabet)


def decode(critic: StructureCritic, strategy: str, beam_width: int = 20) -> Structure:
    if strategy == "greedy":
        return greedy_decode(critic)
    if strategy == "beam":
        return beam_decode(critic, beam_width)
    if strategy == "masked":
        return masked_decode(critic)
    raise ValueError(f"unknown decoding strategy {strategy!r}")


def _finish(codes: list[int], L: int, alphabet) -> Structure:
    return Structure(tuple(codes) + (MASK,) * (L - len(codes)), alphabet)


def _causal_novel(critic: StructureCritic, exclude) -> Structure | None:
    """Depth-first search in greedy order; first complete structure not in ``exclude``.

    Visits children by descending score (ties by code), so with an empty
    ``exclude`` this is exactly :func:`greedy_decode`.
    """
    L, eos = critic.L, critic.alphabet.eos_code

    def visit(prefix: list[int]) -> Structure | None:
        t = len(prefix)
        codes = np.array(prefix + [MASK] * (L - t), dtype=np.int64)
        row = critic.position_scores(codes[None, :])[0, t]
        allowed = _allowed(critic, t)
        for a in sorted(np.flatnonzero(allowed), key=lambda a: (-row[a], a)):
            nxt = prefix + [int(a)]
            if a == eos or t == L - 1:
                s = _finish(nxt, L, critic.alphabet)
                if s.codes not in exclude:
                    return s
                continue
            found = visit(nxt)
            if found is not None:
                return found
        return None

    return visit([])


def _masked_ranked(critic: StructureCritic):
    """Complete structures in descending order of summed per-slot masked scores."""
    L, n, eos = critic.L, critic.alphabet.size, critic.alphabet.eos_code
    sc = critic.position_scores(np.full((1, L), MASK))[0]
    for t in range(L):
        sc[t] = np.where(_allowed(critic, t), sc[t], -np.inf)
    order = np.stack([sorted(range(n), key=lambda a: (-sc[t, a], a)) for t in range(L)])
    ranked = np.take_along_axis(sc, order, axis=1)
    start = (0,) * L
    heap = [(-ranked[np.arange(L), start].sum(), start)]
    visited = {start}
    emitted = set()
    while heap:
        neg, ranks = heapq.heappop(heap)
        codes = []
        for t, r in enumerate(ranks):
            codes.append(int(order[t, r]))
            if codes[-1] == eos:
                break
        s = _finish(codes, L, critic.alphabet)
        if s.codes not in emitted:
            emitted.add(s.codes)
            yield s
        for t in range(L):
            if ranks[t] + 1 < n and np.isfinite(ranked[t, ranks[t] + 1]):
                nxt = ranks[:t] + (ranks[t] + 1,) + ranks[t + 1:]
                if nxt not in visited:
                    visited.add(nxt)
                    heapq.heappush(heap, (-ranked[np.arange(L), nxt].sum(), nxt))


def decode_novel(critic: StructureCritic, strategy: str, exclude,
                 beam_width: int = 20) -> Structure | None:
    """Best structure under ``strategy`` that is not in ``exclude`` (code tuples).

    Agrees with :func:`decode` whenever the plain decode is not excluded.
    Returns ``None`` if every structure is excluded.
    """
    s = decode(critic, strategy, beam_width)
    if s.codes not in exclude:
        return s
    if strategy == "masked":
        return next((c for c in _masked_ranked(critic) if c.codes not in exclude), None)
    return _causal_novel(critic, exclude)


__all__ = [
    "StructureCritic", "beam_decode", "decode", "decode_novel", "greedy_decode",
    "masked_decode", "InvalidStructureError",
]
