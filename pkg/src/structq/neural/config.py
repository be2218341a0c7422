from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from enum import Enum


class AttentionMode(str, Enum):
    CAUSAL = "causal"
    FULL = "full"


BLOCK_PARAMS = (
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
    "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b",
)


@dataclass(frozen=True)
class EncoderConfig:
    """Shape of the shared network.

    ``n_actions`` is the number of output symbols (alphabet size, EOS
    included). Input tokens add one reserved MASK id, ``n_actions``.
    """

    n_actions: int
    max_len: int
    embed_dim: int = 32
    num_heads: int = 8
    ff_dim: int = 64
    head_dim: int = 32
    dropout_p: float = 0.1
    num_layers: int = 1

    def __post_init__(self):
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.n_actions < 2 or self.max_len < 1 or self.num_layers < 1:
            raise ValueError("invalid encoder size")

    @property
    def mask_token(self) -> int:
        return self.n_actions

    @property
    def vocab(self) -> int:
        return self.n_actions + 1

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        d, f = self.embed_dim, self.ff_dim
        shapes: dict[str, tuple[int, ...]] = {"emb": (self.vocab, d)}
        block = {
            "wq": (d, d), "bq": (d,), "wk": (d, d), "bk": (d,),
            "wv": (d, d), "bv": (d,), "wo": (d, d), "bo": (d,),
            "ln1_g": (d,), "ln1_b": (d,),
            "w1": (d, f), "b1": (f,), "w2": (f, d), "b2": (d,),
            "ln2_g": (d,), "ln2_b": (d,),
        }
        for layer in range(self.num_layers):
            for name in BLOCK_PARAMS:
                shapes[f"l{layer}.{name}"] = block[name]
        shapes.update({
            "wh1": (d, self.head_dim), "bh1": (self.head_dim,),
            "wh2": (self.head_dim, self.n_actions), "bh2": (self.n_actions,),
            "wval": (d,), "bval": (1,),
        })
        return shapes

    def param_count(self) -> int:
        total = 0
        for shape in self.param_shapes().values():
            n = 1
            for s in shape:
                n *= s
            total += n
        return total

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
