"""Token embedding, encoder blocks and output heads with manual backprop.

Every agent uses the same network: ``scores`` is a per-position
``(B, L, n_actions)`` matrix from a shared MLP head, ``values`` a
per-position scalar from a linear value head (only the policy-gradient
critic baseline reads it, but every agent carries it so parameter counts
match).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..core import StructqError
from . import backend
from .config import BLOCK_PARAMS, AttentionMode, EncoderConfig

Params = dict[str, np.ndarray]


class NonFiniteError(StructqError, FloatingPointError):
    pass


@lru_cache(maxsize=32)
def positional_encoding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(0, dim, 2)[None, :]
    angle = pos / np.power(10000.0, i / dim)
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : dim // 2])
    pe.flags.writeable = False
    return pe


def init_params(config: EncoderConfig, rng: np.random.Generator) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit LN gains."""
    params: Params = {}
    for name, shape in config.param_shapes().items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            params[name] = np.ones(shape)
        elif leaf.endswith("_b") or leaf.startswith("b"):
            params[name] = np.zeros(shape)
        elif leaf == "emb":
            params[name] = rng.uniform(-1.0, 1.0, shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, shape)
    return params


def param_count(params: Params) -> int:
    return int(sum(p.size for p in params.values()))


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


@dataclass
class Forward:
    scores: np.ndarray
    values: np.ndarray
    tokens: np.ndarray
    causal: bool
    masks: tuple
    cache: list = field(repr=False)


def dropout_masks(config: EncoderConfig, shape, rng: np.random.Generator):
    """(embedding, then per-layer attention/FF) masks scaled by 1/keep."""
    keep = 1.0 - config.dropout_p
    count = 1 + 2 * config.num_layers
    return tuple((rng.random(shape) < keep) / keep for _ in range(count))


def forward(params: Params, tokens, mode: AttentionMode | str, config: EncoderConfig,
            train: bool = False, rng: np.random.Generator | None = None,
            masks=None) -> Forward:
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    B, L = tokens.shape
    if L > config.max_len:
        raise ValueError(f"sequence length {L} exceeds max_len {config.max_len}")
    if tokens.min() < 0 or tokens.max() >= config.vocab:
        raise ValueError("token id outside vocabulary")
    causal = AttentionMode(mode) is AttentionMode.CAUSAL
    d = config.embed_dim
    if masks is None:
        if train and config.dropout_p > 0.0:
            if rng is None:
                raise ValueError("training forward needs an rng for dropout")
            masks = dropout_masks(config, (B, L, d), rng)
        else:
            ones = np.ones((B, L, d))
            masks = (ones,) * (1 + 2 * config.num_layers)

    kern = backend.get()
    x = (params["emb"][tokens] + positional_encoding(L, d)) * masks[0]
    cache = [x]
    for layer in range(config.num_layers):
        block = [params[f"l{layer}.{n}"] for n in BLOCK_PARAMS]
        x, c = kern.block_forward(
            x, causal, config.num_heads, masks[1 + 2 * layer], masks[2 + 2 * layer], *block
        )
        cache.append(c)
        cache.append(x)
    hpre = x @ params["wh1"] + params["bh1"]
    hid = np.maximum(hpre, 0.0)
    scores = hid @ params["wh2"] + params["bh2"]
    values = x @ params["wval"] + params["bval"][0]
    cache.extend([hpre, hid])
    if not (np.isfinite(scores).all() and np.isfinite(values).all()):
        bad = [k for k, v in params.items() if not np.isfinite(v).all()]
        raise NonFiniteError(f"non-finite network output (bad parameters: {bad or 'none'})")
    return Forward(scores, values, tokens, causal, masks, cache)


def backward(params: Params, fwd: Forward, config: EncoderConfig,
             dscores: np.ndarray | None = None, dvalues: np.ndarray | None = None) -> Params:
    """Gradients of ``sum(dscores*scores) + sum(dvalues*values)`` w.r.t. params."""
    kern = backend.get()
    grads: Params = {}
    hpre, hid = fwd.cache[-2], fwd.cache[-1]
    x = fwd.cache[-3]
    if dscores is None:
        dscores = np.zeros_like(fwd.scores)
    grads["wh2"] = np.einsum("blh,bla->ha", hid, dscores)
    grads["bh2"] = dscores.sum(axis=(0, 1))
    dh = (dscores @ params["wh2"].T) * (hpre > 0)
    grads["wh1"] = np.einsum("bld,blh->dh", x, dh)
    grads["bh1"] = dh.sum(axis=(0, 1))
    dx = dh @ params["wh1"].T
    if dvalues is not None:
        grads["wval"] = np.einsum("bld,bl->d", x, dvalues)
        grads["bval"] = np.array([dvalues.sum()])
        dx = dx + dvalues[..., None] * params["wval"]
    else:
        grads["wval"] = np.zeros_like(params["wval"])
        grads["bval"] = np.zeros(1)

    for layer in reversed(range(config.num_layers)):
        block = [params[f"l{layer}.{n}"] for n in BLOCK_PARAMS]
        x_in = fwd.cache[2 * layer]
        out = kern.block_backward(
            np.ascontiguousarray(dx), x_in, fwd.causal, config.num_heads,
            fwd.masks[1 + 2 * layer], fwd.masks[2 + 2 * layer],
            fwd.cache[2 * layer + 1], *block,
        )
        dx = out[0]
        for n, g in zip(BLOCK_PARAMS, out[1:]):
            grads[f"l{layer}.{n}"] = g
    dx = dx * fwd.masks[0]
    onehot = fwd.tokens.reshape(-1, 1) == np.arange(config.vocab)
    grads["emb"] = onehot.T.astype(np.float64) @ dx.reshape(-1, dx.shape[-1])
    return {k: grads[k] for k in params}


def loss_and_grad(params: Params, config: EncoderConfig, tokens, mode, targets, target_mask,
                  train: bool = False, rng=None, masks=None):
    """Mean squared error over the selected ``(b, position, symbol)`` scores."""
    target_mask = np.asarray(target_mask, dtype=bool)
    count = int(target_mask.sum())
    if count == 0:
        raise ValueError("target mask selects nothing")
    fwd = forward(params, tokens, mode, config, train=train, rng=rng, masks=masks)
    err = np.where(target_mask, fwd.scores - targets, 0.0)
    loss = float((err * err).sum() / count)
    grads = backward(params, fwd, config, dscores=2.0 * err / count)
    return loss, grads


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: Params
    v: Params
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Params, **hyper) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **hyper,
        )


def adam_step(params: Params, grads: Params, state: AdamState) -> Params:
    """In-place bias-corrected Adam update; returns ``params``."""
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape mismatch for {k}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for {k}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[k] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
