"""Initial node and query-token vectors from precomputed embedding sources.

Three source kinds are supported:

``static_table``
    token -> vector text table (GloVe style). Optional header line
    ``#relqa-static v1``; then ``token v1 ... vD`` per line.
``contextual_file``
    JSON-lines sidecar. First line ``{"format": "relqa-contextual",
    "version": 1, "dim": D}``; then span records ``{"instance", "doc",
    "sent", "span": [s, e], "vec"}`` or query-token records ``{"instance",
    "query": token, "vec"}``.
``hash_fallback``
    deterministic pseudo-random unit vectors keyed by the referent string.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from relqa.errors import EmbeddingError
from relqa.graphbuild.graph import NodeKind, RelGraph
from relqa.graphbuild.instance import Instance

KINDS = ("static_table", "contextual_file", "hash_fallback")
STATIC_HEADER = "#relqa-static v1"
CONTEXTUAL_FORMAT = "relqa-contextual"


@dataclass
class EmbeddingSource:
    name: str
    kind: str
    dim: int
    table: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    strict: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EmbeddingError(f"unknown embedding kind {self.kind!r}")
        if self.dim <= 0:
            raise EmbeddingError(f"embedding dim must be positive, got {self.dim}")


def hash_vector(key: str, dim: int) -> np.ndarray:
    """Unit vector drawn from a PCG64 stream seeded by sha256(key, dim)."""
    digest = hashlib.sha256(f"{key}\x1f{dim}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def hash_source(name: str = "hash", dim: int = 32) -> EmbeddingSource:
    return EmbeddingSource(name, "hash_fallback", dim)


def load_static_table(path, name: str | None = None) -> EmbeddingSource:
    path = Path(path)
    table: dict[str, np.ndarray] = {}
    dim = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if lineno == 1 and line.startswith("#"):
                if line.strip() != STATIC_HEADER:
                    raise EmbeddingError(f"{path}:1: unsupported header {line.strip()!r}")
                continue
            if not line.strip():
                continue
            token, *vals = line.split(" ")
            try:
                vec = np.array([float(v) for v in vals])
            except ValueError:
                raise EmbeddingError(f"{path}:{lineno}: non-numeric value") from None
            if dim is None:
                dim = vec.size
            if vec.size != dim or dim == 0:
                raise EmbeddingError(
                    f"{path}:{lineno}: token {token!r} has {vec.size} values, expected {dim}"
                )
            table.setdefault(token, vec)
    if dim is None:
        raise EmbeddingError(f"{path}: empty embedding table")
    return EmbeddingSource(name or path.stem, "static_table", dim, table)


def load_contextual_file(path, name: str | None = None, strict: bool = False) -> EmbeddingSource:
    path = Path(path)
    table: dict = {}
    with path.open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise EmbeddingError(f"{path}: empty contextual file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise EmbeddingError(f"{path}:1: bad header ({exc})") from None
    if header.get("format") != CONTEXTUAL_FORMAT or header.get("version") != 1:
        raise EmbeddingError(f"{path}:1: not a {CONTEXTUAL_FORMAT} v1 file")
    dim = int(header["dim"])
    for lineno, line in enumerate(lines[1:], 2):
        try:
            rec = json.loads(line)
            vec = np.array(rec["vec"], dtype=np.float64)
            if "query" in rec:
                key = ("query", str(rec["instance"]), str(rec["query"]).lower())
            else:
                s, e = rec["span"]
                key = (str(rec["instance"]), int(rec["doc"]), int(rec["sent"]), int(s), int(e))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise EmbeddingError(f"{path}:{lineno}: malformed record ({exc})") from None
        if vec.shape != (dim,):
            raise EmbeddingError(f"{path}:{lineno}: vector has {vec.size} values, expected {dim}")
        table[key] = vec
    return EmbeddingSource(name or path.stem, "contextual_file", dim, table, strict=strict)


def load_source(spec: Mapping) -> EmbeddingSource:
    """Build a source from a config entry ``{"name", "kind", "path"|"dim"}``."""
    kind = spec["kind"]
    if kind == "hash_fallback":
        return hash_source(spec["name"], int(spec["dim"]))
    if kind == "static_table":
        return load_static_table(spec["path"], spec["name"])
    if kind == "contextual_file":
        return load_contextual_file(spec["path"], spec["name"], bool(spec.get("strict", False)))
    raise EmbeddingError(f"unknown embedding kind {kind!r}")


def _static_mean(tokens: Sequence[str], source: EmbeddingSource) -> np.ndarray:
    vecs = []
    for t in tokens:
        v = source.table.get(t)
        if v is None:
            v = source.table.get(t.lower())
        vecs.append(v if v is not None else np.zeros(source.dim))
    return np.mean(vecs, axis=0) if vecs else np.zeros(source.dim)


def embed_mention(mention, source: EmbeddingSource, instance_id: str | None = None) -> np.ndarray:
    """Vector for a mention or graph node under one source.

    Accepts anything with ``referent``, ``surface``, ``doc``, ``sentence`` and a
    span (``token_span`` or ``start``/``end``).
    """
    span = getattr(mention, "token_span", None)
    if span is None and getattr(mention, "start", None) is not None:
        span = (mention.start, mention.end)
    is_sentence = getattr(mention, "kind", None) is NodeKind.SENT
    if source.kind == "hash_fallback":
        key = f"<sent> {mention.referent}" if is_sentence else mention.referent
        return hash_vector(key, source.dim)
    if source.kind == "static_table":
        return _static_mean(mention.surface.split(" "), source)
    if span is None or mention.doc is None:
        # placeholder candidates have no text position
        return np.zeros(source.dim)
    key = (str(instance_id), mention.doc, mention.sentence, span[0], span[1])
    vec = source.table.get(key)
    if vec is None:
        if source.strict:
            raise EmbeddingError(
                f"source {source.name!r}: no vector for instance {instance_id!r}, doc {key[1]}, "
                f"sentence {key[2]}, span [{key[3]}, {key[4]})"
            )
        return np.zeros(source.dim)
    return vec


def embed_query_token(token: str, source: EmbeddingSource, instance_id: str | None = None) -> np.ndarray:
    if source.kind == "hash_fallback":
        return hash_vector(token.lower(), source.dim)
    if source.kind == "static_table":
        return _static_mean([token], source)
    vec = source.table.get(("query", str(instance_id), token.lower()))
    if vec is None:
        if source.strict:
            raise EmbeddingError(
                f"source {source.name!r}: no query vector for {token!r} in instance {instance_id!r}"
            )
        return np.zeros(source.dim)
    return vec


@dataclass
class EmbedSpec:
    """Ordered list of sources whose vectors are concatenated per node."""

    sources: list[EmbeddingSource]

    def __post_init__(self):
        if not self.sources:
            raise EmbeddingError("embedding spec needs at least one source")

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.sources]

    @property
    def dims(self) -> list[int]:
        return [s.dim for s in self.sources]

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> list[int]:
        return [int(o) for o in np.cumsum([0] + self.dims[:-1])]

    def slices(self, feature: np.ndarray) -> list[np.ndarray]:
        return [feature[..., o:o + d] for o, d in zip(self.offsets, self.dims)]

    @classmethod
    def resolve(cls, names: Sequence[str], registry: Mapping[str, EmbeddingSource]) -> EmbedSpec:
        missing = [n for n in names if n not in registry]
        if missing:
            raise EmbeddingError(f"unknown embedding sources {missing}")
        return cls([registry[n] for n in names])


def combine(vectors: Sequence[np.ndarray], spec: EmbedSpec) -> np.ndarray:
    """Concatenate one vector per source, in spec order."""
    if len(vectors) != len(spec.sources):
        raise EmbeddingError(f"expected {len(spec.sources)} vectors, got {len(vectors)}")
    for v, src in zip(vectors, spec.sources):
        if np.shape(v)[-1] != src.dim:
            raise EmbeddingError(
                f"source {src.name!r} expects dim {src.dim}, got {np.shape(v)[-1]}"
            )
    return np.concatenate([np.asarray(v, dtype=np.float64) for v in vectors], axis=-1)


def node_features(graph: RelGraph, spec: EmbedSpec, instance_id: str | None = None) -> np.ndarray:
    iid = instance_id if instance_id is not None else graph.instance_id
    return np.array([
        combine([embed_mention(node, src, iid) for src in spec.sources], spec)
        for node in graph.nodes
    ]).reshape(len(graph.nodes), spec.total_dim)


def query_features(instance: Instance, spec: EmbedSpec) -> np.ndarray:
    toks = instance.query_tokens
    if not toks:
        raise EmbeddingError(f"instance {instance.id!r} has an empty query")
    return np.array([
        combine([embed_query_token(t, src, instance.id) for src in spec.sources], spec)
        for t in toks
    ])
