"""Relational graph convolution with gated and query-aware node updates.

Node states are rows of an ``n x d`` matrix and weights act on the right
(``h @ W``), so the ``2d x d`` gate matrices take ``[u; h]`` rows directly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from relqa.errors import ShapeError
from relqa.graphbuild.graph import Relation, RelGraph
from relqa.numcore import (
    ParamStore, Tensor, add, concat, matmul, mul, sigmoid, softmax_rows, split, spmm, sub, tanh,
    transpose,
)


@dataclass
class NeighborIndex:
    """Incoming neighbour lists N_i^r, stored per relation as edge arrays.

    ``coef[r][e] = 1 / |N_dst^r|`` where the size counts parallel edges.
    """

    n: int
    relations: tuple[Relation, ...]
    src: dict[Relation, np.ndarray]
    dst: dict[Relation, np.ndarray]
    coef: dict[Relation, np.ndarray]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, Relation]],
                   relations: Sequence[Relation]) -> NeighborIndex:
        relations = tuple(relations)
        per = {r: ([], []) for r in relations}
        for s, d, r in edges:
            if r not in per:
                raise ShapeError(f"edge relation {Relation(r).name} is not in the layer's relation set")
            if not (0 <= s < n and 0 <= d < n):
                raise IndexError(f"edge ({s}, {d}) out of range for {n} nodes")
            per[r][0].append(s)
            per[r][1].append(d)
        src, dst, coef = {}, {}, {}
        for r, (ss, dd) in per.items():
            s_arr = np.asarray(ss, dtype=np.intp)
            d_arr = np.asarray(dd, dtype=np.intp)
            deg = np.bincount(d_arr, minlength=n).astype(np.float64)
            src[r], dst[r] = s_arr, d_arr
            coef[r] = 1.0 / deg[d_arr] if d_arr.size else np.zeros(0)
        return cls(n, relations, src, dst, coef)

    @classmethod
    def from_graph(cls, graph: RelGraph) -> NeighborIndex:
        return cls.from_edges(graph.n_nodes, graph.edges, graph.relations)

    def neighbors(self, i: int, r: Relation) -> list[int]:
        return [int(s) for s, d in zip(self.src[r], self.dst[r]) if d == i]


class RGCNLayer:
    """Weights of one layer: a d x d transform per relation plus gates."""

    def __init__(self, store: ParamStore, name: str, d: int, relations: Sequence[Relation],
                 query_aware: bool = False, layer_index: int = 0):
        self.d = d
        self.layer_index = layer_index
        self.relations = tuple(relations)
        self.query_aware = query_aware
        self.W_r = {r: store.matrix(f"{name}/W_r.{r.name}", d, d) for r in self.relations}
        self.W_u = store.matrix(f"{name}/W_u", d, d)
        self.W_a = store.matrix(f"{name}/W_a", 2 * d, d)
        self.b_a = store.bias(f"{name}/b_a", d)
        if query_aware:
            # one attention logit per (node, query token)
            self.W_q = store.matrix(f"{name}/W_q", 2 * d, 1)
            self.b_q = store.bias(f"{name}/b_q", 1)
            self.W_beta = store.matrix(f"{name}/W_beta", 2 * d, d)
            self.b_beta = store.bias(f"{name}/b_beta", d)


def _check(H: Tensor, d: int, what: str) -> None:
    if H.data.ndim != 2 or H.shape[1] != d:
        raise ShapeError(f"{what}: expected n x {d}, got {H.shape}")


def message(H: Tensor, index: NeighborIndex, layer: RGCNLayer) -> Tensor:
    """m_i = sum_r sum_{j in N_i^r} W_r h_j / |N_i^r|."""
    _check(H, layer.d, "message")
    if H.shape[0] != index.n:
        raise IndexError(f"index built for {index.n} nodes, got {H.shape[0]}")
    if set(index.relations) - set(layer.relations):
        raise ShapeError("neighbour index has relations the layer has no weights for")
    M = None
    for r in layer.relations:
        if r not in index.src or index.src[r].size == 0:
            continue
        term = matmul(spmm(H, index.src[r], index.dst[r], index.coef[r], index.n), layer.W_r[r].value)
        M = term if M is None else add(M, term)
    return M if M is not None else Tensor(np.zeros(H.shape))


def update(H: Tensor, M: Tensor, layer: RGCNLayer) -> Tensor:
    """u_i = W_u h_i + m_i."""
    _check(H, layer.d, "update")
    if M.shape != H.shape:
        raise ShapeError(f"update: message shape {M.shape} != node shape {H.shape}")
    return add(matmul(H, layer.W_u.value), M)


def query_attention(U: Tensor, P: Tensor, layer: RGCNLayer) -> Tensor:
    """alpha_ij = softmax_j sigmoid(W_q [u_i; p_j] + b_q), an n x m matrix."""
    # [u; p] W_q == u W_q[:d] + p W_q[d:], evaluated for all pairs by broadcasting
    w_u, w_p = split(layer.W_q.value, [layer.d, layer.d], axis=0)
    logits = add(add(matmul(U, w_u), transpose(matmul(P, w_p))), layer.b_q.value)
    return softmax_rows(sigmoid(logits))


def query_gate(U: Tensor, P: Tensor, layer: RGCNLayer) -> Tensor:
    """Blend a per-node query summary into the update u_i."""
    if not layer.query_aware:
        raise ValueError("layer was built without query-gate parameters")
    _check(U, layer.d, "query_gate")
    if P.data.ndim != 2 or P.shape[0] == 0:
        raise ShapeError("query_gate: empty query")
    _check(P, layer.d, "query_gate query")
    alpha = query_attention(U, P, layer)
    q = matmul(alpha, P)
    beta = sigmoid(add(matmul(concat([q, U], axis=1), layer.W_beta.value), layer.b_beta.value))
    return add(mul(beta, tanh(q)), mul(sub(1.0, beta), U))


def gate(U: Tensor, H: Tensor, layer: RGCNLayer) -> Tensor:
    """h' = a * tanh(u) + (1 - a) * h with a = sigmoid(W_a [u; h] + b_a)."""
    _check(U, layer.d, "gate")
    if U.shape != H.shape:
        raise ShapeError(f"gate: update shape {U.shape} != node shape {H.shape}")
    a = sigmoid(add(matmul(concat([U, H], axis=1), layer.W_a.value), layer.b_a.value))
    return add(mul(a, tanh(U)), mul(sub(1.0, a), H))


def rgcn_layer(H: Tensor, P: Tensor | None, index: NeighborIndex, layer: RGCNLayer) -> Tensor:
    U = update(H, message(H, index, layer), layer)
    if layer.query_aware:
        if P is None:
            raise ValueError("query-aware layer needs the query token matrix")
        U = query_gate(U, P, layer)
    return gate(U, H, layer)


def rgcn_forward(H0: Tensor, P: Tensor | None, index: NeighborIndex,
                 layers: Sequence[RGCNLayer], query_aware: bool | None = None) -> Tensor:
    """Apply message -> update -> (query gate) -> gate for every layer in turn."""
    if not layers:
        raise ValueError("rgcn_forward needs at least one layer")
    if query_aware is not None and any(l.query_aware != query_aware for l in layers):
        raise ValueError("layer query-awareness does not match the requested mode")
    H = H0
    for layer in layers:
        H = rgcn_layer(H, P, index, layer)
    return H
