"""Feed-forward and recurrent building blocks on top of the tensor ops."""
from __future__ import annotations

import numpy as np

from relqa.errors import ShapeError
from relqa.numcore.params import ParamStore
from relqa.numcore.tensor import Tensor, add, concat, matmul, mul, sigmoid, split, take_rows, tanh


class Linear:
    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int, bias: bool = True,
                 gain: float = 1.0):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.W = store.matrix(f"{name}/W", in_dim, out_dim, gain)
        self.b = store.bias(f"{name}/b", out_dim) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.W.value)
        return add(y, self.b.value) if self.b is not None else y


class FeedForward:
    """Linear -> tanh -> Linear."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, hidden: int, out_dim: int,
                 out_gain: float = 1.0):
        self.hidden = Linear(store, f"{name}.hidden", in_dim, hidden)
        self.out = Linear(store, f"{name}.out", hidden, out_dim, gain=out_gain)

    def __call__(self, x: Tensor) -> Tensor:
        return self.out(tanh(self.hidden(x)))


class BiLSTM:
    """Bidirectional LSTM over a token sequence.

    Each direction has ``d // 2`` hidden units; per-token outputs are
    ``[forward; backward]`` (width ``d``). Gate order inside the stacked
    pre-activation is input, forget, cell, output. The pooled query vector is
    ``[h_fwd[m-1]; h_bwd[0]] @ W_pool + b_pool``.
    """

    def __init__(self, store: ParamStore, name: str, in_dim: int, d: int):
        if d % 2:
            raise ShapeError(f"BiLSTM width must be even, got {d}")
        h = self.hidden = d // 2
        self.d = d
        self.dirs = {}
        for tag in ("fwd", "bwd"):
            self.dirs[tag] = (
                store.matrix(f"{name}/{tag}.W_x", in_dim, 4 * h),
                store.matrix(f"{name}/{tag}.W_h", h, 4 * h),
                store.bias(f"{name}/{tag}.b", 4 * h),
            )
        self.pool = Linear(store, f"{name}.pool", d, d)

    def _run(self, seq: Tensor, tag: str, order) -> list[Tensor]:
        W_x, W_h, b = self.dirs[tag]
        h_dim = self.hidden
        xz = add(matmul(seq, W_x.value), b.value)
        h = Tensor(np.zeros((1, h_dim)))
        c = Tensor(np.zeros((1, h_dim)))
        states = {}
        for t in order:
            z = add(take_rows(xz, [t]), matmul(h, W_h.value))
            i, f, g, o = split(z, [h_dim] * 4, axis=1)
            c = add(mul(sigmoid(f), c), mul(sigmoid(i), tanh(g)))
            h = mul(sigmoid(o), tanh(c))
            states[t] = h
        return [states[t] for t in range(len(order))]

    def __call__(self, seq: Tensor) -> tuple[Tensor, Tensor]:
        m = seq.shape[0]
        if m < 1:
            raise ShapeError("BiLSTM over an empty sequence")
        fwd = self._run(seq, "fwd", range(m))
        bwd = self._run(seq, "bwd", range(m - 1, -1, -1))
        states = concat([concat([f, b_], axis=1) for f, b_ in zip(fwd, bwd)], axis=0)
        pooled = self.pool(concat([fwd[-1], bwd[0]], axis=1))
        return states, pooled


def bilstm(seq: Tensor, params: BiLSTM) -> Tensor:
    """Per-token hidden states of ``params`` over ``seq`` (m x d)."""
    return params(seq)[0]
