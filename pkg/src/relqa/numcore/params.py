"""Trainable parameters, initialisation, and the adaptive-moment optimizer."""
from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from relqa.errors import NonFiniteError, ShapeError
from relqa.numcore.tensor import Tensor


class Param:
    """A trainable tensor plus its optimizer state."""

    def __init__(self, value, name: str = ""):
        value = np.array(value, dtype=np.float64)
        self.name = name
        self.value = Tensor(value, requires_grad=True, name=name)
        self.value._tape = None
        self.first_moment = np.zeros_like(value)
        self.second_moment = np.zeros_like(value)
        self.step_count = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.data.size

    def assign(self, array) -> None:
        array = np.asarray(array, dtype=np.float64)
        if array.shape != self.shape:
            raise ShapeError(f"{self.name}: expected shape {self.shape}, got {array.shape}")
        if not np.isfinite(array).all():
            raise NonFiniteError(f"{self.name}: non-finite values")
        self.value.data = array.copy()

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.shape}, step={self.step_count})"


def glorot(rng: np.random.Generator, shape: Sequence[int]) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=tuple(shape))


class ParamStore:
    """Ordered, named collection of parameters drawn from one seeded RNG.

    Creation order fixes the random stream, so the same seed and the same
    sequence of ``matrix``/``bias`` calls always yield identical values.
    """

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self.params: dict[str, Param] = {}

    def _add(self, name: str, value: np.ndarray) -> Param:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = self.params[name] = Param(value, name)
        return p

    def matrix(self, name: str, rows: int, cols: int, gain: float = 1.0) -> Param:
        return self._add(name, gain * glorot(self.rng, (rows, cols)))

    def bias(self, name: str, size: int) -> Param:
        return self._add(name, np.zeros((1, size)))

    def __getitem__(self, name: str) -> Param:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def count(self) -> int:
        return sum(p.size for p in self.params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.value.data.copy() for name, p in self.params.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ShapeError(
                f"parameter names differ: missing={sorted(missing)} unexpected={sorted(extra)}"
            )
        for name, p in self.params.items():
            p.assign(state[name])


def adam_step(
    params: Iterable[Param],
    grads: Iterable[np.ndarray],
    lr: float = 1e-4,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """Bias-corrected adaptive-moment update, in place."""
    b1, b2 = betas
    pairs = list(zip(params, grads))
    for p, g in pairs:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"{p.name}: gradient shape {g.shape} != {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"{p.name}: non-finite gradient")
    for p, g in pairs:
        p.step_count += 1
        p.first_moment = b1 * p.first_moment + (1.0 - b1) * g
        p.second_moment = b2 * p.second_moment + (1.0 - b2) * (g * g)
        m_hat = p.first_moment / (1.0 - b1 ** p.step_count)
        v_hat = p.second_moment / (1.0 - b2 ** p.step_count)
        p.value.data = p.value.data - lr * m_hat / (np.sqrt(v_hat) + eps)
