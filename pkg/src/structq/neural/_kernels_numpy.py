"""Vectorised NumPy reference for one post-norm transformer encoder block.

Both backends share this calling convention:

    block_forward(x, causal, num_heads, m1, m2, *params) -> (y, cache)
    block_backward(dy, x, causal, num_heads, m1, m2, cache, *params) -> (dx, *grads)

``params`` follow ``config.BLOCK_PARAMS``; ``m1``/``m2`` are pre-scaled
dropout masks on the attention and feed-forward branches.
"""
import numpy as np

LN_EPS = 1e-5


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, xhat, inv


def _layernorm_backward(dy, xhat, inv, g):
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    return dx, dg, db


def _split(t, h):
    B, L, d = t.shape
    return t.reshape(B, L, h, d // h).transpose(0, 2, 1, 3)


def _merge(t):
    B, h, L, dh = t.shape
    return t.transpose(0, 2, 1, 3).reshape(B, L, h * dh)


def block_forward(x, causal, num_heads, m1, m2,
                  wq, bq, wk, bk, wv, bv, wo, bo,
                  ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b):
    B, L, d = x.shape
    dh = d // num_heads
    q = _split(x @ wq + bq, num_heads)
    k = _split(x @ wk + bk, num_heads)
    v = _split(x @ wv + bv, num_heads)
    s = (q @ k.transpose(0, 1, 3, 2)) / np.sqrt(dh)
    if causal:
        s = np.where(np.tri(L, dtype=bool), s, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=-1, keepdims=True)
    ctx = _merge(p @ v)
    a = ctx @ wo + bo
    y1, xhat1, inv1 = _layernorm(x + a * m1, ln1_g, ln1_b)
    u = y1 @ w1 + b1
    z = np.maximum(u, 0.0)
    f = z @ w2 + b2
    y2, xhat2, inv2 = _layernorm(y1 + f * m2, ln2_g, ln2_b)
    cache = (q, k, v, p, ctx, xhat1, inv1, y1, u, z, xhat2, inv2)
    return y2, cache


def block_backward(dy, x, causal, num_heads, m1, m2, cache,
                   wq, bq, wk, bk, wv, bv, wo, bo,
                   ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b):
    q, k, v, p, ctx, xhat1, inv1, y1, u, z, xhat2, inv2 = cache
    B, L, d = x.shape
    dh = d // num_heads

    dr2, dln2_g, dln2_b = _layernorm_backward(dy, xhat2, inv2, ln2_g)
    df = dr2 * m2
    dw2 = np.einsum("blf,bld->fd", z, df)
    db2 = df.sum(axis=(0, 1))
    du = (df @ w2.T) * (u > 0)
    dw1 = np.einsum("bld,blf->df", y1, du)
    db1 = du.sum(axis=(0, 1))
    dy1 = dr2 + du @ w1.T

    dr1, dln1_g, dln1_b = _layernorm_backward(dy1, xhat1, inv1, ln1_g)
    da = dr1 * m1
    dwo = np.einsum("bli,blj->ij", ctx, da)
    dbo = da.sum(axis=(0, 1))
    dctx = _split(da @ wo.T, num_heads)
    dp = dctx @ v.transpose(0, 1, 3, 2)
    dv = p.transpose(0, 1, 3, 2) @ dctx
    ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True)) / np.sqrt(dh)
    dq = _merge(ds @ k)
    dk = _merge(ds.transpose(0, 1, 3, 2) @ q)
    dv = _merge(dv)

    dwq = np.einsum("bli,blj->ij", x, dq)
    dwk = np.einsum("bli,blj->ij", x, dk)
    dwv = np.einsum("bli,blj->ij", x, dv)
    dx = dr1 + dq @ wq.T + dk @ wk.T + dv @ wv.T
    return (dx, dwq, dq.sum(axis=(0, 1)), dwk, dk.sum(axis=(0, 1)),
            dwv, dv.sum(axis=(0, 1)), dwo, dbo, dln1_g, dln1_b,
            dw1, db1, dw2, db2, dln2_g, dln2_b)
