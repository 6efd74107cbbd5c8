"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, zero_grads


STENCILS = {
    2: ((1, -1), (1.0, -1.0), 2.0, 1e-5),
    4: ((2, 1, -1, -2), (-1.0, 8.0, -8.0, 1.0), 12.0, 1e-3),
}


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, h: float | None = None, order: int = 2) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``param``.

    ``order=4`` uses the five-point stencil; with its larger default step the
    round-off in ``fn`` is divided by a bigger ``h``, which matters when true
    gradients are near zero.
    """
    if order not in STENCILS:
        raise ValueError(f"stencil order must be one of {sorted(STENCILS)}")
    offsets, coefs, denom, default_h = STENCILS[order]
    h = default_h if h is None else h
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        total = 0.0
        for k, c in zip(offsets, coefs):
            flat[i] = orig + k * h
            total += c * fn().item()
        flat[i] = orig
        gflat[i] = total / (denom * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is (near) zero from dividing
    round-off noise by round-off noise.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float | None = None,
                    floor: float = 1e-6, order: int = 2) -> float:
    """Return the worst elementwise relative error over ``params``."""
    zero_grads(params)
    backward(fn())
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        numeric = numerical_grad(fn, p, h, order)
        worst = max(worst, float(relative_error(analytic, numeric, floor).max()))
    return worst
