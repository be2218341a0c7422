"""REINFORCE baselines over a factorised sequence policy.

The causal network's per-slot scores are the policy logits, so
``log p(s) = sum_t log softmax(scores[t])[s_t]``. SPG weights every step
by ``f(s) - b`` with either a learned per-prefix value head (``critic``)
or the best value seen before the batch (``maxb``); PG uses the raw
terminal reward with no baseline.
"""
from __future__ import annotations

import numpy as np

from ..core import MASK, Structure
from ..critic import StructureCritic, _allowed, _live_positions
from ..neural.config import AttentionMode
from ..neural.network import adam_step, backward, forward
from ..objectives import BudgetExhausted
from ..policy import softmax_sample
from .config import AgentConfig, Evaluator


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy_gradient_scores(logits: np.ndarray, actions: np.ndarray, advantages: np.ndarray,
                           live: np.ndarray) -> np.ndarray:
    """d/dlogits of ``-mean_b sum_t A[b,t] log p(a[b,t])`` over live slots."""
    B = logits.shape[0]
    p = np.exp(log_softmax(logits))
    onehot = np.zeros_like(p)
    bi, ti = np.nonzero(live)
    onehot[bi, ti, actions[bi, ti]] = 1.0
    weight = np.where(live, advantages, 0.0)[..., None]
    return -weight * (onehot - p) / B


class PolicyNet:
    def __init__(self, config: AgentConfig, alphabet, L, rng):
        self.net = StructureCritic(
            alphabet, L, AttentionMode.CAUSAL, rng, config=config.encoder(alphabet.size, L),
            lr=config.lr,
        )
        self.rng = rng

    def logits(self, codes) -> np.ndarray:
        net = self.net
        sc = net.raw_scores(net.tokens(codes))
        for t in range(net.L):
            sc[:, t] = np.where(_allowed(net, t), sc[:, t], -np.inf)
        return sc

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        net = self.net
        codes = np.full((count, net.L), MASK, dtype=np.int64)
        done = np.zeros(count, dtype=bool)
        eos = net.alphabet.eos_code
        for t in range(net.L):
            rows = self.logits(codes)[:, t]
            for b in np.flatnonzero(~done):
                codes[b, t] = softmax_sample(rows[b], rng)
                if codes[b, t] == eos:
                    done[b] = True
        return codes

    def probabilities(self, codes) -> np.ndarray:
        """Probability of each complete structure under the current policy."""
        codes = np.atleast_2d(codes)
        lp = log_softmax(self.logits(codes))
        live = _live_positions(codes, self.net.alphabet.eos_code)
        bi, ti = np.nonzero(live)
        out = np.zeros(len(codes))
        np.add.at(out, bi, lp[bi, ti, codes[bi, ti]])
        return np.exp(out)

    def update(self, codes, advantages, value_targets=None) -> None:
        """One Adam step on the REINFORCE loss (+ value regression when given)."""
        net = self.net
        live = _live_positions(codes, net.alphabet.eos_code)
        fwd = forward(net.params, net.tokens(codes), net.mode, net.config, train=True, rng=self.rng)
        logits = fwd.scores.copy()
        for t in range(net.L):
            logits[:, t] = np.where(_allowed(net, t), logits[:, t], -np.inf)
        dscores = policy_gradient_scores(logits, codes, advantages, live)
        dvalues = None
        if value_targets is not None:
            count = live.sum()
            dvalues = np.where(live, 2.0 * (fwd.values - value_targets) / count, 0.0)
        grads = backward(net.params, fwd, net.config, dscores=dscores, dvalues=dvalues)
        adam_step(net.params, grads, net.adam)

    def values(self, codes) -> np.ndarray:
        net = self.net
        return forward(net.params, net.tokens(codes), net.mode, net.config).values


def _run(config: AgentConfig, objective, baseline: str | None) -> list:
    alphabet, L = objective.alphabet, objective.L
    rng = config.streams()
    evaluate = Evaluator(objective, config)
    policy = PolicyNet(config, alphabet, L, rng["net"])
    observed: list[float] = []
    best_seen = -np.inf
    try:
        while not evaluate.done:
            m = min(config.pg_batch, evaluate.budget - evaluate.used)
            codes = policy.sample(m, rng["sample"])
            f = np.array([evaluate(Structure(tuple(int(c) for c in row), alphabet)) for row in codes])
            observed.extend(f)
            live = _live_positions(codes, alphabet.eos_code)
            if baseline is None:
                adv = np.broadcast_to(f[:, None], live.shape)
                policy.update(codes, adv)
                continue
            mean = float(np.mean(observed))
            spread = float(np.std(observed)) or 1.0
            z = (f - mean) / spread
            if baseline == "maxb":
                b = best_seen if np.isfinite(best_seen) else f.max()
                adv = np.broadcast_to(((f - b) / spread)[:, None], live.shape)
                policy.update(codes, adv)
            else:
                v = policy.values(codes)
                adv = z[:, None] - v
                policy.update(codes, adv, value_targets=np.broadcast_to(z[:, None], live.shape))
            best_seen = max(best_seen, float(f.max()))
    except BudgetExhausted:
        pass
    return evaluate.records


def run_pg(config: AgentConfig, objective) -> list:
    return _run(config, objective, None)


def run_spg(config: AgentConfig, objective) -> list:
    return _run(config, objective, config.baseline)
