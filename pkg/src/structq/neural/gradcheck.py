"""Central finite-difference check of analytic gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .network import Params


def relative_error(analytic: float, numeric: float, floor: float = 1e-10) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(loss_fn: Callable[[Params], float], params: Params, grads: Params,
                    rng: np.random.Generator, n_coords: int = 50, h: float = 1e-4,
                    min_abs: float = 0.0):
    """Compare ``grads`` with central differences of ``loss_fn`` on random coordinates.

    Coordinates whose analytic gradient is below ``min_abs`` are skipped so
    the sample is not dominated by structurally-zero entries. Returns a list
    of ``(name, index, analytic, numeric, rel_err)``.
    """
    names = list(params)
    sizes = np.array([params[n].size for n in names], dtype=float)
    out = []
    attempts = 0
    while len(out) < n_coords:
        attempts += 1
        if attempts > 200 * n_coords:
            raise RuntimeError("could not find enough coordinates with non-trivial gradient")
        name = names[rng.choice(len(names), p=sizes / sizes.sum())]
        idx = tuple(int(rng.integers(s)) for s in params[name].shape)
        a = float(grads[name][idx])
        if abs(a) < min_abs:
            continue
        p = params[name]
        old = p[idx]
        p[idx] = old + h
        up = loss_fn(params)
        p[idx] = old - h
        down = loss_fn(params)
        p[idx] = old
        num = (up - down) / (2 * h)
        out.append((name, idx, a, num, relative_error(a, num)))
    return out
