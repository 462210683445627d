"""Central finite-difference verification of analytic gradients.

The checked loss must be a pure function of the parameters' `.data`
buffers (it is re-evaluated many times with perturbed values). Parameters
are temporarily promoted to float64 so the difference quotient is not
drowned in float32 rounding noise; the same dtype-generic op code runs
either way.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor

__all__ = ["grad_check"]


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-3,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Return the worst relative error between analytic and numeric gradients.

    Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
    When `max_coords` is given, that many coordinates are checked, sampled
    uniformly (seeded) across all parameters; otherwise every coordinate is
    checked. A non-finite loss raises ValueError naming the offending
    parameter/coordinate.
    """
    if not (1e-4 <= eps <= 1e-2):
        raise ValueError("grad_check: eps must lie in [1e-4, 1e-2]")
    params = list(params)
    originals = [p.data for p in params]
    for p in params:
        p.data = p.data.astype(np.float64)
        p.grad = None
    try:
        loss = loss_fn()
        if not np.isfinite(loss.data).all():
            raise ValueError("grad_check: loss is non-finite at the unperturbed point")
        loss.backward()
        analytic = [
            p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
        ]
        for p in params:
            p.grad = None

        coords = [(k, idx) for k, p in enumerate(params) for idx in range(p.data.size)]
        if max_coords is not None and max_coords < len(coords):
            rng = np.random.default_rng(seed)
            chosen = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[c] for c in sorted(chosen)]

        worst = 0.0
        for k, idx in coords:
            flat = params[k].data.reshape(-1)
            saved = flat[idx]
            flat[idx] = saved + eps
            f_plus = float(loss_fn().data)
            flat[idx] = saved - eps
            f_minus = float(loss_fn().data)
            flat[idx] = saved
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError(
                    f"grad_check: non-finite loss at parameter {k}, coordinate {idx}"
                )
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic[k].reshape(-1)[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if err > worst:
                worst = err
        return worst
    finally:
        for p, orig in zip(params, originals):
            p.data = orig
            p.grad = None
