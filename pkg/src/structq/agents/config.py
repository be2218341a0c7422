from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from ..core import RecordLog, Structure
from ..neural.config import EncoderConfig
from ..objectives import BudgetExhausted

KINDS = ("sql", "ql", "pg", "spg", "sa", "rs")

# fixed stream slots so adding a consumer never shifts existing draws
STREAMS = ("init", "critic", "secondary", "explore", "accept", "sample", "net", "act", "replay")


@dataclass(frozen=True)
class AgentConfig:
    kind: str
    seed: int = 0
    budget: int = 500
    name: str | None = None
    init_random: int = 32
    # SQL
    decoder: str = "greedy"
    beam_width: int = 20
    criterion: str = "s-greedy"
    eps_min: float = 0.05
    eps_horizon: int | None = None
    sgreedy_temperature: float = 1.0
    sample_temperature: float = 1.0
    mask_prob: float = 0.5
    explore: str = "replace"
    skip_known: bool = True
    novel_tries: int = 16
    # networks
    train_steps: int = 4
    batch_size: int = 32
    lr: float = 1e-3
    embed_dim: int = 32
    num_heads: int = 8
    ff_dim: int = 64
    dropout_p: float = 0.1
    num_layers: int = 1
    # QL
    replay_size: int = 4096
    # PG / SPG
    baseline: str = "critic"
    pg_batch: int = 8
    # SA
    sa_t0: float | None = None
    sa_final_ratio: float = 0.01
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if self.kind in ("sql", "ql", "sa") and self.init_random > self.budget:
            raise ValueError("init_random must not exceed budget")
        if self.decoder not in ("greedy", "beam", "masked"):
            raise ValueError(f"unknown decoder {self.decoder!r}")
        if self.criterion not in ("s-greedy", "e-greedy", "sampling"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.baseline not in ("critic", "maxb"):
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.gamma != 1.0:
            raise ValueError("agents assume gamma = 1")

    @property
    def tag(self) -> str:
        if self.name:
            return self.name
        if self.kind == "sql":
            tag = f"SQL-{self.decoder.capitalize()}"
            return tag if self.criterion == "s-greedy" else f"{tag}/{self.criterion}"
        if self.kind == "spg":
            return "SPG-" + ("Critic" if self.baseline == "critic" else "MaxB")
        return self.kind.upper()

    @property
    def horizon(self) -> int:
        return self.eps_horizon if self.eps_horizon is not None else max(1, self.budget // 2)

    def encoder(self, n_actions: int, L: int) -> EncoderConfig:
        return EncoderConfig(
            n_actions=n_actions, max_len=L, embed_dim=self.embed_dim,
            num_heads=self.num_heads, ff_dim=self.ff_dim, dropout_p=self.dropout_p,
            num_layers=self.num_layers,
        )

    def streams(self) -> dict[str, np.random.Generator]:
        seqs = np.random.SeedSequence(self.seed).spawn(len(STREAMS))
        return {name: np.random.default_rng(s) for name, s in zip(STREAMS, seqs)}

    def with_(self, **changes) -> "AgentConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


class Evaluator:
    """Counts evaluations against the agent budget and logs every record."""

    def __init__(self, objective, config: AgentConfig):
        self.objective = objective
        self.budget = config.budget
        self.log = RecordLog(config.tag)
        self.used = 0

    @property
    def done(self) -> bool:
        return self.used >= self.budget

    def __call__(self, s: Structure, exploit: bool = False) -> float:
        if self.done:
            raise BudgetExhausted("agent budget used up")
        value = self.objective.evaluate(s)
        self.used += 1
        self.log.log(s, value, exploit)
        return value

    @property
    def records(self):
        return self.log.records
