"""Numba versions of the encoder block kernels (same contract as the NumPy ones).

Dense projections go through ``np.dot`` on ``(B*L, d)`` views; attention
and layer norm are explicit loops, which is where the NumPy path spends
most of its time on tiny batches.
"""
import math

import numpy as np
from numba import njit

LN_EPS = 1e-5


@njit(cache=True)
def _layernorm(r, g, b):
    n, d = r.shape
    y = np.empty_like(r)
    xhat = np.empty_like(r)
    inv = np.empty(n)
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += r[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            c = r[i, j] - mu
            var += c * c
        var /= d
        iv = 1.0 / math.sqrt(var + LN_EPS)
        inv[i] = iv
        for j in range(d):
            xh = (r[i, j] - mu) * iv
            xhat[i, j] = xh
            y[i, j] = xh * g[j] + b[j]
    return y, xhat, inv


@njit(cache=True)
def _layernorm_backward(dy, xhat, inv, g):
    n, d = dy.shape
    dx = np.empty_like(dy)
    dg = np.zeros(d)
    db = np.zeros(d)
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            dxh = dy[i, j] * g[j]
            m1 += dxh
            m2 += dxh * xhat[i, j]
            dg[j] += dy[i, j] * xhat[i, j]
            db[j] += dy[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            dx[i, j] = inv[i] * (dy[i, j] * g[j] - m1 - xhat[i, j] * m2)
    return dx, dg, db


@njit(cache=True)
def block_forward(x, causal, num_heads, m1, m2,
                  wq, bq, wk, bk, wv, bv, wo, bo,
                  ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b):
    B, L, d = x.shape
    dh = d // num_heads
    scale = 1.0 / math.sqrt(dh)
    x2 = x.reshape(B * L, d)
    q = np.dot(x2, wq) + bq
    k = np.dot(x2, wk) + bk
    v = np.dot(x2, wv) + bv
    p = np.zeros((B, num_heads, L, L))
    ctx = np.zeros((B * L, d))
    for b in range(B):
        for h in range(num_heads):
            o = h * dh
            for i in range(L):
                qi = b * L + i
                jmax = i + 1 if causal else L
                mx = -np.inf
                for j in range(jmax):
                    kj = b * L + j
                    s = 0.0
                    for c in range(dh):
                        s += q[qi, o + c] * k[kj, o + c]
                    s *= scale
                    p[b, h, i, j] = s
                    if s > mx:
                        mx = s
                tot = 0.0
                for j in range(jmax):
                    e = math.exp(p[b, h, i, j] - mx)
                    p[b, h, i, j] = e
                    tot += e
                for j in range(jmax):
                    pij = p[b, h, i, j] / tot
                    p[b, h, i, j] = pij
                    vj = b * L + j
                    for c in range(dh):
                        ctx[qi, o + c] += pij * v[vj, o + c]
    a = np.dot(ctx, wo) + bo
    r1 = x2 + a * m1.reshape(B * L, d)
    y1, xhat1, inv1 = _layernorm(r1, ln1_g, ln1_b)
    u = np.dot(y1, w1) + b1
    z = np.maximum(u, 0.0)
    f = np.dot(z, w2) + b2
    r2 = y1 + f * m2.reshape(B * L, d)
    y2, xhat2, inv2 = _layernorm(r2, ln2_g, ln2_b)
    cache = (q, k, v, p, ctx, xhat1, inv1, y1, u, z, xhat2, inv2)
    return y2.reshape(B, L, d), cache


@njit(cache=True)
def block_backward(dy, x, causal, num_heads, m1, m2, cache,
                   wq, bq, wk, bk, wv, bv, wo, bo,
                   ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b):
    q, k, v, p, ctx, xhat1, inv1, y1, u, z, xhat2, inv2 = cache
    B, L, d = x.shape
    n = B * L
    dh = d // num_heads
    scale = 1.0 / math.sqrt(dh)
    x2 = x.reshape(n, d)
    mm1 = m1.reshape(n, d)
    mm2 = m2.reshape(n, d)

    dr2, dln2_g, dln2_b = _layernorm_backward(dy.reshape(n, d), xhat2, inv2, ln2_g)
    df = dr2 * mm2
    dw2 = np.dot(z.T, df)
    db2 = df.sum(axis=0)
    du = np.dot(df, w2.T)
    for i in range(n):
        for j in range(du.shape[1]):
            if u[i, j] <= 0.0:
                du[i, j] = 0.0
    dw1 = np.dot(y1.T, du)
    db1 = du.sum(axis=0)
    dy1 = dr2 + np.dot(du, w1.T)

    dr1, dln1_g, dln1_b = _layernorm_backward(dy1, xhat1, inv1, ln1_g)
    da = dr1 * mm1
    dwo = np.dot(ctx.T, da)
    dbo = da.sum(axis=0)
    dctx = np.dot(da, wo.T)

    dq = np.zeros((n, d))
    dk = np.zeros((n, d))
    dv = np.zeros((n, d))
    dp = np.empty(L)
    for b in range(B):
        for h in range(num_heads):
            o = h * dh
            for i in range(L):
                qi = b * L + i
                jmax = i + 1 if causal else L
                acc = 0.0
                for j in range(jmax):
                    vj = b * L + j
                    s = 0.0
                    pij = p[b, h, i, j]
                    for c in range(dh):
                        s += dctx[qi, o + c] * v[vj, o + c]
                        dv[vj, o + c] += pij * dctx[qi, o + c]
                    dp[j] = s
                    acc += s * pij
                for j in range(jmax):
                    kj = b * L + j
                    ds = p[b, h, i, j] * (dp[j] - acc) * scale
                    for c in range(dh):
                        dq[qi, o + c] += ds * k[kj, o + c]
                        dk[kj, o + c] += ds * q[qi, o + c]

    dwq = np.dot(x2.T, dq)
    dwk = np.dot(x2.T, dk)
    dwv = np.dot(x2.T, dv)
    dx = dr1 + np.dot(dq, wq.T) + np.dot(dk, wk.T) + np.dot(dv, wv.T)
    return (dx.reshape(B, L, d), dwq, dq.sum(axis=0), dwk, dk.sum(axis=0),
            dwv, dv.sum(axis=0), dwo, dbo, dln1_g, dln1_b,
            dw1, db1, dw2, db2, dln2_g, dln2_b)
