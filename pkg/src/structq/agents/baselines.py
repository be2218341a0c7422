"""Random search and simulated annealing."""
from __future__ import annotations

import math

import numpy as np

from ..objectives import BudgetExhausted
from ..policy import random_structure, replace_random
from .config import AgentConfig, Evaluator


def run_rs(config: AgentConfig, objective) -> list:
    rng = config.streams()["init"]
    evaluate = Evaluator(objective, config)
    try:
        while not evaluate.done:
            evaluate(random_structure(objective.alphabet, objective.L, rng))
    except BudgetExhausted:
        pass
    return evaluate.records


def metropolis_probability(delta: float, temperature: float) -> float:
    """Acceptance probability of a move changing f by ``delta`` (maximising)."""
    if delta >= 0:
        return 1.0
    if temperature <= 0:
        return 0.0
    return math.exp(delta / temperature)


def geometric_rate(final_ratio: float, steps: int) -> float:
    return final_ratio ** (1.0 / max(steps, 1))


def run_sa(config: AgentConfig, objective) -> list:
    """Single-site replace moves with a geometric cooling schedule.

    The warm-up evaluates ``init_random`` random structures, starts from the
    best of them and, unless ``sa_t0`` is given, uses their standard
    deviation as the initial temperature.
    """
    rng = config.streams()
    evaluate = Evaluator(objective, config)
    alphabet, L = objective.alphabet, objective.L
    try:
        warm = []
        for _ in range(min(config.init_random, config.budget)):
            s = random_structure(alphabet, L, rng["init"])
            warm.append((evaluate(s), s))
        current_v, current = max(warm, key=lambda p: p[0])
        t0 = config.sa_t0 if config.sa_t0 is not None else float(np.std([v for v, _ in warm]))
        rate = geometric_rate(config.sa_final_ratio, config.budget - len(warm))
        k = 0
        while not evaluate.done:
            temperature = t0 * rate**k
            cand = replace_random(current, rng["explore"])
            # log acceptance as the "exploit" flag: did SA move to the candidate
            v = objective.evaluate(cand)
            accepted = rng["accept"].random() < metropolis_probability(v - current_v, temperature)
            evaluate.used += 1
            evaluate.log.log(cand, v, bool(accepted))
            if accepted:
                current, current_v = cand, v
            k += 1
    except BudgetExhausted:
        pass
    return evaluate.records
