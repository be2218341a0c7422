"""Structured Q-learning: random warm-up, then critic-guided exploit/explore."""
from __future__ import annotations

from ..core import StructBuffer
from ..critic import StructureCritic, decode, decode_novel
from ..neural.config import AttentionMode
from ..objectives import BudgetExhausted
from ..policy import (
    EGreedy,
    ExplorationOperator,
    Sampling,
    SGreedy,
    accept_probability,
    random_structure,
    sample_decode,
)
from .config import AgentConfig, Evaluator


def build_criterion(config: AgentConfig, alphabet, L, rng, encoder):
    if config.criterion == "e-greedy":
        return EGreedy(horizon=config.horizon, eps_min=config.eps_min)
    if config.criterion == "sampling":
        return Sampling()
    secondary = StructureCritic(
        alphabet, L, AttentionMode.FULL, rng, config=encoder,
        batch_size=config.batch_size, train_steps=config.train_steps, lr=config.lr,
        mask_prob=config.mask_prob,
    )
    return SGreedy(secondary, temperature=config.sgreedy_temperature)


def run_sql(config: AgentConfig, objective) -> list:
    alphabet, L = objective.alphabet, objective.L
    rng = config.streams()
    evaluate = Evaluator(objective, config)
    buffer = StructBuffer(alphabet, L)
    encoder = config.encoder(alphabet.size, L)
    mode = AttentionMode.FULL if config.decoder == "masked" else AttentionMode.CAUSAL
    critic = StructureCritic(
        alphabet, L, mode, rng["critic"], config=encoder, batch_size=config.batch_size,
        train_steps=config.train_steps, lr=config.lr, mask_prob=config.mask_prob,
    )
    criterion = build_criterion(config, alphabet, L, rng["secondary"], encoder)
    explore = ExplorationOperator(config.explore)
    seen: set[tuple[int, ...]] = set()

    def propose_explore():
        s = explore(buffer, rng["explore"])
        for _ in range(config.novel_tries if config.skip_known else 0):
            if s.codes not in seen:
                break
            s = explore(buffer, rng["explore"])
        return s

    def propose_exploit():
        if isinstance(criterion, Sampling):
            s = sample_decode(critic, rng["sample"], config.sample_temperature)
            for _ in range(config.novel_tries if config.skip_known else 0):
                if s.codes not in seen:
                    break
                s = sample_decode(critic, rng["sample"], config.sample_temperature)
        elif config.skip_known:
            return decode_novel(critic, config.decoder, seen, config.beam_width)
        else:
            return decode(critic, config.decoder, config.beam_width)
        return None if config.skip_known and s.codes in seen else s

    try:
        for _ in range(min(config.init_random, config.budget)):
            s = random_structure(alphabet, L, rng["init"])
            buffer.insert(s, evaluate(s))
            seen.add(s.codes)
        while not evaluate.done:
            critic.train(buffer)
            if isinstance(criterion, SGreedy):
                criterion.secondary.train(buffer)
            s_star = propose_exploit()
            s_hat = propose_explore()
            if s_star is None:
                # every candidate the critic would pick has been evaluated already
                s_star, exploit = s_hat, False
            else:
                p = accept_probability(criterion, evaluate.used, s_star, s_hat)
                exploit = bool(rng["accept"].random() < p)
            s = s_star if exploit else s_hat
            buffer.insert(s, evaluate(s, exploit))
            seen.add(s.codes)
    except BudgetExhausted:
        pass
    return evaluate.records
