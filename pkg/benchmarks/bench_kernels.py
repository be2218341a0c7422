"""Compare the Numba and pure NumPy encoder kernels.

Times the raw block kernels and a full forward/backward pass for a few
batch sizes, after checking that both backends agree numerically.

    python benchmarks/bench_kernels.py --batch 1 32 128 --repeat 200
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from structq.neural import AttentionMode, EncoderConfig, backend, forward, init_params, loss_and_grad
from structq.neural.config import BLOCK_PARAMS


def timed(fn, repeat: int) -> float:
    fn()  # warm-up (JIT compile on first numba call)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat * 1e3


def bench(batch: int, length: int, n: int, repeat: int, mode: AttentionMode) -> dict:
    cfg = EncoderConfig(n_actions=n, max_len=length)
    rng = np.random.default_rng(0)
    params = init_params(cfg, rng)
    tokens = rng.integers(0, cfg.vocab, (batch, length))
    targets = rng.standard_normal((batch, length, n))
    select = rng.random((batch, length, n)) < 0.2
    select[0, 0, 0] = True
    block = [params[f"l0.{name}"] for name in BLOCK_PARAMS]
    x = rng.standard_normal((batch, length, cfg.embed_dim))
    m = np.ones((batch, length, cfg.embed_dim))
    causal = mode is AttentionMode.CAUSAL

    rows = {}
    outputs = {}
    for name in backend.BACKENDS:
        backend.use(name)
        k = backend.get()
        y, cache = k.block_forward(x, causal, cfg.num_heads, m, m, *block)
        dy = np.ones_like(y)
        outputs[name] = forward(params, tokens, mode, cfg).scores
        rows[name] = {
            "block fwd": timed(lambda: k.block_forward(x, causal, cfg.num_heads, m, m, *block), repeat),
            "block bwd": timed(lambda: k.block_backward(dy, x, causal, cfg.num_heads, m, m, cache, *block), repeat),
            "net fwd": timed(lambda: forward(params, tokens, mode, cfg), repeat),
            "net fwd+bwd": timed(lambda: loss_and_grad(params, cfg, tokens, mode, targets, select,
                                                       train=True, rng=rng), repeat),
        }
    diff = float(np.abs(outputs["numba"] - outputs["numpy"]).max())
    return {"rows": rows, "max_abs_diff": diff}


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--batch", type=int, nargs="+", default=[1, 32, 128])
    p.add_argument("--length", type=int, default=8)
    p.add_argument("-n", type=int, default=8, help="alphabet size")
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--mode", choices=[m.value for m in AttentionMode], default="causal")
    args = p.parse_args(argv)
    mode = AttentionMode(args.mode)
    print(f"L={args.length} n={args.n} mode={mode.value} (milliseconds per call)")
    print(f"{'batch':>5} {'kernel':<12} {'numba':>9} {'numpy':>9} {'speedup':>8}")
    for b in args.batch:
        res = bench(b, args.length, args.n, args.repeat, mode)
        for kernel in res["rows"]["numba"]:
            nb, npy = res["rows"]["numba"][kernel], res["rows"]["numpy"][kernel]
            print(f"{b:>5} {kernel:<12} {nb:>9.3f} {npy:>9.3f} {npy / nb:>7.2f}x")
        print(f"{b:>5} max |numba - numpy| = {res['max_abs_diff']:.2e}")


if __name__ == "__main__":
    main()
