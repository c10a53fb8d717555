"""Versioned JSON encoding of :class:`RelGraph` with canonical ordering."""
from __future__ import annotations

import json

from relqa.errors import GraphFormatError
from relqa.graphbuild.graph import Node, NodeKind, Relation, RelGraph

FORMAT = "relqa-graph"
VERSION = 1
_NODE_FIELDS = ("kind", "doc", "sentence", "start", "end", "referent", "surface",
                "candidate_index", "placeholder")


def serialize_graph(graph: RelGraph) -> bytes:
    order = sorted(range(len(graph.nodes)), key=lambda i: graph.nodes[i].sort_key())
    remap = {old: new for new, old in enumerate(order)}
    nodes = []
    for i in order:
        n = graph.nodes[i]
        nodes.append([n.kind.value, n.doc, n.sentence, n.start, n.end, n.referent, n.surface,
                      n.candidate_index, n.placeholder])
    edges = sorted((remap[s], remap[d], int(r)) for s, d, r in graph.edges)
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "instance_id": graph.instance_id,
        "n_candidates": graph.n_candidates,
        "relations": [r.name for r in graph.relations],
        "meta": graph.meta,
        "node_fields": list(_NODE_FIELDS),
        "nodes": nodes,
        "edges": [[s, d, Relation(r).name] for s, d, r in edges],
    }
    return (json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode()


def deserialize_graph(blob: bytes) -> RelGraph:
    try:
        doc = json.loads(blob)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise GraphFormatError(f"malformed graph payload: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise GraphFormatError("payload is not a relqa graph record")
    if doc.get("version") != VERSION:
        raise GraphFormatError(f"unsupported graph version {doc.get('version')!r}")
    try:
        if doc["node_fields"] != list(_NODE_FIELDS):
            raise GraphFormatError(f"unexpected node fields {doc['node_fields']!r}")
        nodes = []
        for row in doc["nodes"]:
            kind, d, s, a, b, ref, surf, ci, ph = row
            nodes.append(Node(NodeKind(kind), d, s, a, b, ref, surf, ci, bool(ph)))
        edges = [(int(s), int(d), Relation[r]) for s, d, r in doc["edges"]]
        graph = RelGraph(
            instance_id=doc["instance_id"],
            nodes=nodes,
            edges=edges,
            relations=tuple(Relation[r] for r in doc["relations"]),
            n_candidates=int(doc["n_candidates"]),
            meta=dict(doc.get("meta", {})),
        )
    except GraphFormatError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise GraphFormatError(f"invalid graph record: {exc.__class__.__name__}: {exc}") from None
    try:
        graph.validate()
    except Exception as exc:
        raise GraphFormatError(f"inconsistent graph: {exc}") from None
    return graph
