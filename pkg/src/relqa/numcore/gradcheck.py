"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from relqa.numcore.params import Param
from relqa.numcore.tensor import Tape, Tensor

# entries whose analytic and numeric gradients are both below this are
# compared on an absolute scale
REL_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(loss_fn: Callable[[], Tensor], param: Param, eps: float = 1e-5) -> np.ndarray:
    data = param.value.data
    grad = np.zeros_like(data)
    flat, gflat = data.reshape(-1), grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        up = loss_fn().item()
        flat[k] = orig - eps
        down = loss_fn().item()
        flat[k] = orig
        gflat[k] = (up - down) / (2 * eps)
    return grad


def analytic_grads(loss_fn: Callable[[], Tensor], params: Sequence[Param]) -> list[np.ndarray]:
    with Tape() as tape:
        loss = loss_fn()
    return tape.backward(loss, wrt=[p.value for p in params])


def check_gradients(
    loss_fn: Callable[[], Tensor], params: Sequence[Param], eps: float = 1e-5
) -> dict[str, float]:
    """Max relative error per parameter between tape and finite differences."""
    analytic = analytic_grads(loss_fn, params)
    return {
        p.name: float(relative_error(a, numeric_grad(loss_fn, p, eps)).max(initial=0.0))
        for p, a in zip(params, analytic)
    }
