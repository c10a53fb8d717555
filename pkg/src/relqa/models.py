"""End-to-end candidate scorers: EntityGCN, PathGCN and MashupGCN.

All three share the query encoder (BiLSTM over the same embeddings used for
nodes) and the output layer (2-layer feed-forward per node, max over each
candidate's nodes, softmax over candidates). They differ in how node states
are prepared and whether the RGCN stack is query-aware:

========  ========================  ==============  ============
arch      node input                RGCN gating     before output
========  ========================  ==============  ============
entity    FF([pooled; proj(x)])     plain           [pooled; h_L]
path      proj(x)                   query-aware     biattention
mashup    FF([pooled; proj(x)])     query-aware     biattention
========  ========================  ==============  ============
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from relqa.embed import EmbedSpec, node_features, query_features
from relqa.errors import CheckpointError, ShapeError, ValidationError
from relqa.graphbuild import GraphConfig, Instance, RelGraph
from relqa.graphbuild.graph import active_relations
from relqa.numcore import (
    BiLSTM, FeedForward, Linear, ParamStore, Tensor, add, broadcast_rows, concat, cross_entropy,
    dropout, group_max, matmul, max_along, mul, softmax_rows, split, take_rows, tanh, transpose,
)
from relqa.rgcn import NeighborIndex, RGCNLayer, rgcn_forward

ARCHS = ("entity", "path", "mashup")
OUTPUT_GAIN = 0.1


@dataclass
class ModelConfig:
    arch: str = "mashup"
    d: int = 256
    L: int = 3
    use_rgcn: bool = True
    scale: int = 1
    graph: GraphConfig = field(default_factory=lambda: GraphConfig(use_reasoning=True))
    embed_spec: list[str] = field(default_factory=lambda: ["hash"])
    seed: int = 0
    dropout: float = 0.0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValidationError(f"unknown arch {self.arch!r}; expected one of {ARCHS}")
        if self.scale not in (1, 2):
            raise ValidationError(f"scale must be 1 or 2, got {self.scale}")
        if self.d < 2 or self.d % 2:
            raise ValidationError(f"d must be an even integer >= 2, got {self.d}")
        if self.L < 1:
            raise ValidationError(f"L must be >= 1, got {self.L}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        if not self.embed_spec:
            raise ValidationError("embed_spec must name at least one source")

    @property
    def label(self) -> str:
        """Table row name, e.g. ``MashupGCN`` or ``EntNoGCN``."""
        base = {"entity": "Ent", "path": "Path", "mashup": "Mashup"}[self.arch]
        if self.use_rgcn:
            base = {"Ent": "Entity"}.get(base, base) + "GCN"
        else:
            base += "NoGCN"
        return base + (" x2" if self.scale == 2 else "")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["graph"] = dataclasses.asdict(self.graph)
        return out

    @classmethod
    def from_dict(cls, rec: dict) -> ModelConfig:
        rec = dict(rec)
        if isinstance(rec.get("graph"), dict):
            rec["graph"] = GraphConfig(**rec["graph"])
        elif isinstance(rec.get("graph"), str):
            rec["graph"] = GraphConfig.from_setting(rec["graph"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(rec) - known
        if unknown:
            raise ValidationError(f"unknown model config keys {sorted(unknown)}")
        return cls(**rec)


# ------------------------------------------------------------------- inputs


@dataclass
class GraphInput:
    """Everything a forward pass needs for one instance."""

    X: np.ndarray                 # n x F node features
    Q: np.ndarray                 # m x F query-token features
    index: NeighborIndex
    groups: list[list[int]]       # node indices per candidate
    answer: int | None = None
    instance_id: str = ""

    def __post_init__(self):
        n = self.X.shape[0]
        if self.index.n != n:
            raise ShapeError(f"neighbour index covers {self.index.n} nodes, features have {n}")
        if not self.groups:
            raise ValidationError(f"instance {self.instance_id!r}: no candidate nodes")
        for k, grp in enumerate(self.groups):
            if not grp:
                raise ValidationError(f"instance {self.instance_id!r}: candidate {k} has no node")

    @property
    def candidate_rows(self) -> list[int]:
        return sorted({i for g in self.groups for i in g})


def prepare(instance: Instance, graph: RelGraph, spec: EmbedSpec) -> GraphInput:
    return GraphInput(
        X=node_features(graph, spec, instance.id),
        Q=query_features(instance, spec),
        index=NeighborIndex.from_graph(graph),
        groups=graph.candidate_groups(),
        answer=instance.answer_index,
        instance_id=instance.id,
    )


# --------------------------------------------------------------- parameters


def param_count(arch: str, d: int, F: int, n_rel: int, L: int, use_rgcn: bool = True) -> int:
    """Closed-form parameter count of a model; matches ``QAModel.store.count()``."""
    h = d // 2
    total = F * d + d                                        # input projection
    total += 2 * (F * 4 * h + h * 4 * h + 4 * h) + d * d + d  # query BiLSTM + pool
    if arch in ("entity", "mashup"):
        total += 2 * d * d + d + d * d + d                   # joint FF
    if use_rgcn:
        per = n_rel * d * d + d * d + 2 * d * d + d
        if arch != "entity":
            per += 2 * d + 1 + 2 * d * d + d
        total += L * per
    if arch != "entity":
        total += 3 * d + 4 * d * d + d                       # biattention
    out_in = 2 * d if arch == "entity" else d
    total += out_in * d + d + d + 1
    return total


def scaled_width(config: ModelConfig, F: int) -> int:
    """Width actually used: ``d`` at scale 1, else the even width whose
    parameter count is closest to twice the scale-1 count."""
    n_rel = len(active_relations(config.graph))
    if config.scale == 1:
        return config.d
    target = 2 * param_count(config.arch, config.d, F, n_rel, config.L, config.use_rgcn)

    def gap(w):
        return abs(param_count(config.arch, w, F, n_rel, config.L, config.use_rgcn) - target)

    return min(range(config.d, 2 * config.d + 1, 2), key=gap)


# -------------------------------------------------------------------- model


@dataclass
class NodeScores:
    node_logits: Tensor          # n x 1, every node (only candidate rows are used)
    candidate_logits: Tensor     # 1 x K
    probabilities: np.ndarray    # K

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.probabilities))


def aggregate(node_logits: Tensor, groups: Sequence[Sequence[int]]) -> NodeScores:
    if not groups or any(len(g) == 0 for g in groups):
        raise ValidationError("output layer needs at least one node per candidate")
    cand = group_max(node_logits, groups)
    z = cand.data.reshape(-1)
    p = np.exp(z - z.max())
    return NodeScores(node_logits, cand, p / p.sum())


class QAModel:
    def __init__(self, config: ModelConfig, feature_dim: int):
        self.config = config
        self.feature_dim = feature_dim
        self.relations = active_relations(config.graph)
        self.width = d = scaled_width(config, feature_dim)
        self.store = store = ParamStore(config.seed)
        a = config.arch
        self.embed = Linear(store, f"{a}/embed", feature_dim, d)
        self.query_lstm = BiLSTM(store, f"{a}/query_lstm", feature_dim, d)
        self.joint = FeedForward(store, f"{a}/joint", 2 * d, d, d) if a in ("entity", "mashup") else None
        self.layers = [
            RGCNLayer(store, f"{a}/rgcn.{l}", d, self.relations, query_aware=(a != "entity"), layer_index=l)
            for l in range(config.L)
        ] if config.use_rgcn else []
        if a != "entity":
            self.biattn_w = store.matrix(f"{a}/biattn/w", 3 * d, 1)
            self.biattn_out = Linear(store, f"{a}/biattn.out", 4 * d, d)
        # small final weights keep initial candidate scores near uniform
        self.output = FeedForward(store, f"{a}/output", 2 * d if a == "entity" else d, d, 1,
                                  out_gain=OUTPUT_GAIN)

    @property
    def params(self):
        return list(self.store)

    # -------------------------------------------------------------- pieces

    def encode_query(self, Q) -> tuple[Tensor, Tensor]:
        Q = np.asarray(Q.data if isinstance(Q, Tensor) else Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] == 0:
            raise ShapeError("encode_query: empty query")
        if Q.shape[1] != self.feature_dim:
            raise ShapeError(f"query features have width {Q.shape[1]}, expected {self.feature_dim}")
        return self.query_lstm(Tensor(Q))

    def _nodes(self, inp: GraphInput, rng) -> Tensor:
        if inp.X.shape[1] != self.feature_dim:
            raise ShapeError(f"node features have width {inp.X.shape[1]}, expected {self.feature_dim}")
        H = self.embed(Tensor(inp.X))
        if rng is not None and self.config.dropout > 0:
            H = dropout(H, self.config.dropout, rng)
        return H

    def _joint(self, H: Tensor, pooled: Tensor) -> Tensor:
        return self.joint(concat([broadcast_rows(pooled, H.shape[0]), H], axis=1))

    def _rgcn(self, H: Tensor, P: Tensor, inp: GraphInput) -> Tensor:
        if not self.layers:
            return H
        return rgcn_forward(H, P if self.config.arch != "entity" else None, inp.index, self.layers)

    def attention_summaries(self, N: Tensor, P: Tensor,
                            candidate_rows: Sequence[int] | None = None) -> tuple[Tensor, Tensor]:
        """Node-to-query contexts (n x d) and the query-to-node summary (1 x d).

        Similarity is ``S[i, j] = w . [n_i; p_j; n_i * p_j]``. The summary pools
        over ``candidate_rows`` (all rows when None) so candidate scores never
        see nodes outside their neighbourhood.
        """
        n, m = N.shape[0], P.shape[0]
        if n == 0 or m == 0:
            raise ShapeError("biattention: empty input")
        d = self.width
        w_n, w_p, w_np = split(self.biattn_w.value, [d, d, d], axis=0)
        S = add(add(matmul(N, w_n), transpose(matmul(P, w_p))),
                matmul(mul(N, transpose(w_np)), transpose(P)))
        ctx = matmul(softmax_rows(S), P)
        rows = list(range(n)) if candidate_rows is None else list(candidate_rows)
        best = transpose(take_rows(max_along(S, axis=1), rows))
        h_hat = matmul(softmax_rows(best), take_rows(N, rows))
        return ctx, h_hat

    def biattention(self, N: Tensor, P: Tensor, candidate_rows: Sequence[int] | None = None) -> Tensor:
        """Fuse query information into node states: tanh(W [n; c; n*c; n*h])."""
        ctx, h_hat = self.attention_summaries(N, P, candidate_rows)
        n = N.shape[0]
        fused = concat([N, ctx, mul(N, ctx), mul(N, broadcast_rows(h_hat, n))], axis=1)
        return tanh(self.biattn_out(fused))

    def output_layer(self, R: Tensor, groups: Sequence[Sequence[int]]) -> NodeScores:
        """Score every node, keep each candidate's best node, softmax over candidates."""
        return aggregate(self.output(R), groups)

    # ------------------------------------------------------------- forward

    def forward(self, inp: GraphInput, rng: np.random.Generator | None = None) -> NodeScores:
        P, pooled = self.encode_query(inp.Q)
        H = self._nodes(inp, rng)
        arch = self.config.arch
        if arch in ("entity", "mashup"):
            H = self._joint(H, pooled)
        H = self._rgcn(H, P, inp)
        if arch == "entity":
            R = concat([broadcast_rows(pooled, H.shape[0]), H], axis=1)
        else:
            R = self.biattention(H, P, inp.candidate_rows)
        return self.output_layer(R, inp.groups)

    def loss(self, inp: GraphInput, rng: np.random.Generator | None = None) -> tuple[Tensor, NodeScores]:
        if inp.answer is None:
            raise ValidationError(f"instance {inp.instance_id!r} has no gold answer")
        scores = self.forward(inp, rng)
        return cross_entropy(scores.candidate_logits, inp.answer), scores

    # ---------------------------------------------------------- persistence

    def checkpoint_meta(self) -> dict:
        return {"config": self.config.to_dict(), "feature_dim": self.feature_dim, "width": self.width}

    def state(self) -> dict[str, np.ndarray]:
        return self.store.state()

    def load_state(self, meta: dict, state: dict[str, np.ndarray]) -> None:
        if meta.get("config") != self.config.to_dict() or meta.get("feature_dim") != self.feature_dim:
            raise CheckpointError("checkpoint was written for a different model configuration")
        self.store.load_state(state)

    @classmethod
    def from_checkpoint(cls, meta: dict, state: dict[str, np.ndarray]) -> QAModel:
        try:
            model = cls(ModelConfig.from_dict(meta["config"]), int(meta["feature_dim"]))
        except (KeyError, TypeError, ValidationError) as exc:
            raise CheckpointError(f"checkpoint metadata is unusable: {exc}") from None
        model.load_state(meta, state)
        return model


def forward_entitygcn(model: QAModel, inp: GraphInput) -> NodeScores:
    if model.config.arch != "entity":
        raise ValidationError(f"model arch is {model.config.arch!r}, not 'entity'")
    return model.forward(inp)


def forward_pathgcn(model: QAModel, inp: GraphInput) -> NodeScores:
    if model.config.arch != "path":
        raise ValidationError(f"model arch is {model.config.arch!r}, not 'path'")
    return model.forward(inp)


def forward_mashupgcn(model: QAModel, inp: GraphInput) -> NodeScores:
    if model.config.arch != "mashup":
        raise ValidationError(f"model arch is {model.config.arch!r}, not 'mashup'")
    return model.forward(inp)


__all__ = [
    "ARCHS", "GraphInput", "aggregate", "ModelConfig", "NodeScores", "QAModel", "forward_entitygcn",
    "forward_mashupgcn", "forward_pathgcn", "param_count", "prepare", "scaled_width",
]
