"""Deep Q-learning over the variable allocation MDP (unstructured baseline).

The causal network reads the observation ``o_t`` (shifted behind a start
MASK) and row ``t`` holds ``Q(o_t, .)``. Every finished episode pushes its
transitions into a replay buffer; targets are ``r`` on the terminal step
and ``gamma * max_a Q(o_{t+1}, a)`` otherwise (no target network).
"""
from __future__ import annotations

import numpy as np

from ..core import MASK, Structure
from ..critic import StructureCritic, _allowed
from ..neural.config import AttentionMode
from ..neural.network import adam_step, backward, forward
from ..objectives import BudgetExhausted
from ..policy import EGreedy
from .config import AgentConfig, Evaluator


class TransitionReplay:
    """Ring buffer of ``(episode codes, step, reward, terminal)`` rows."""

    def __init__(self, L: int, capacity: int):
        self.codes = np.zeros((capacity, L), dtype=np.int64)
        self.step = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.capacity = capacity
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def push(self, codes, step: int, reward: float, terminal: bool) -> None:
        i = self._next
        self.codes[i] = codes
        self.step[i] = step
        self.reward[i] = reward
        self.terminal[i] = terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_episode(self, codes, value: float, eos: int | None = None) -> None:
        codes = np.asarray(codes)
        last = len(codes) - 1
        if eos is not None and eos in codes:
            last = int(np.flatnonzero(codes == eos)[0])
        for t in range(last + 1):
            done = t == last
            self.push(codes, t, value if done else 0.0, done)

    def sample(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        return rng.integers(self.size, size=batch)


def td_targets(q_next_max: np.ndarray, reward: np.ndarray, terminal: np.ndarray,
               gamma: float = 1.0) -> np.ndarray:
    """``r`` on terminal steps, ``r + gamma * max_a Q(o', a)`` otherwise."""
    return np.where(terminal, reward, reward + gamma * q_next_max)


class QLearner:
    def __init__(self, config: AgentConfig, alphabet, L, rng):
        # reuse the critic for tokenisation, scaling and parameters
        self.net = StructureCritic(
            alphabet, L, AttentionMode.CAUSAL, rng, config=config.encoder(alphabet.size, L),
            batch_size=config.batch_size, train_steps=config.train_steps, lr=config.lr,
        )
        self.replay = TransitionReplay(L, config.replay_size)
        self.gamma = config.gamma
        self.rng = rng

    def q_values(self, codes) -> np.ndarray:
        """``(N, L, n)`` Q-values in objective units."""
        return self.net.position_scores(codes)

    def train_batch(self, batch_size: int) -> float:
        net = self.net
        idx = self.replay.sample(self.rng, batch_size)
        codes = self.replay.codes[idx]
        t = self.replay.step[idx]
        rows = np.arange(len(idx))
        tokens = net.tokens(codes)
        # bootstrap from the current network in eval mode (standardised units)
        q_eval = net.raw_scores(tokens)
        nxt = np.minimum(t + 1, net.L - 1)
        allowed = np.stack([_allowed(net, int(p)) for p in nxt])
        q_next = np.where(allowed, q_eval[rows, nxt], -np.inf).max(axis=1)
        reward = np.where(self.replay.terminal[idx], (self.replay.reward[idx] - net.shift) / net.scale, 0.0)
        target = td_targets(q_next, reward, self.replay.terminal[idx], self.gamma)
        fwd = forward(net.params, tokens, net.mode, net.config, train=True, rng=self.rng)
        err = np.zeros_like(fwd.scores)
        actions = codes[rows, t]
        err[rows, t, actions] = fwd.scores[rows, t, actions] - target
        n = len(idx)
        grads = backward(net.params, fwd, net.config, dscores=2.0 * err / n)
        adam_step(net.params, grads, net.adam)
        return float((err**2).sum() / n)


def run_ql(config: AgentConfig, objective) -> list:
    alphabet, L = objective.alphabet, objective.L
    rng = config.streams()
    evaluate = Evaluator(objective, config)
    learner = QLearner(config, alphabet, L, rng["net"])
    schedule = EGreedy(horizon=config.horizon, eps_min=config.eps_min)
    eos = alphabet.eos_code
    observed = []
    try:
        while not evaluate.done:
            episode = evaluate.used
            warm = episode < config.init_random
            eps = 1.0 if warm else schedule.epsilon(episode)
            codes = np.full(L, MASK, dtype=np.int64)
            greedy_steps = 0
            for t in range(L):
                allowed = _allowed(learner.net, t)
                if rng["act"].random() < eps:
                    choices = np.flatnonzero(allowed)
                    codes[t] = choices[rng["act"].integers(len(choices))]
                else:
                    row = learner.q_values(codes[None, :])[0, t]
                    codes[t] = int(np.argmax(np.where(allowed, row, -np.inf)))
                    greedy_steps += 1
                if codes[t] == eos:
                    break
            s = Structure(tuple(int(c) for c in codes), alphabet)
            value = evaluate(s, exploit=greedy_steps == s.allocated)
            observed.append(value)
            learner.replay.push_episode(codes, value, eos)
            if not warm:
                learner.net.shift = float(np.mean(observed))
                spread = float(np.std(observed))
                learner.net.scale = spread if spread > 1e-12 else 1.0
                for _ in range(config.train_steps):
                    learner.train_batch(config.batch_size)
    except BudgetExhausted:
        pass
    return evaluate.records
