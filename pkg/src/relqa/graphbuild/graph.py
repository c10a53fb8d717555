"""Typed relational graphs over mentions and sentences."""
from __future__ import annotations

import enum
import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from relqa.errors import ValidationError
from relqa.graphbuild.instance import Instance, normalize
from relqa.graphbuild.mentions import GraphConfig, Mention, candidate_referents, find_mentions
from relqa.graphbuild.paths import find_reasoning_paths


class Relation(enum.IntEnum):
    CO_DOC = 0          # (i)
    MATCH_ACROSS = 1    # (ii)
    MATCH_WITHIN = 2    # (iii)
    QUERY_REASON = 3    # (iv)
    REASON_REASON = 4   # (v)
    REASON_CAND = 5     # (vi)
    COMPLEMENT = 6      # (vii)
    SENT_SAME_DOC = 7   # (viii)
    SENT_ADJ = 8        # (ix)
    SENT_PREV = 9       # (x)  sentence -> its predecessor
    SENT_NEXT = 10      # (xi) sentence -> its successor
    SENT_CONTAINS = 11  # (xii)


DIRECTED = frozenset({Relation.SENT_PREV, Relation.SENT_NEXT})
BASE_RELATIONS = (Relation.CO_DOC, Relation.MATCH_ACROSS, Relation.MATCH_WITHIN, Relation.COMPLEMENT)
REASON_RELATIONS = (Relation.QUERY_REASON, Relation.REASON_REASON, Relation.REASON_CAND)
SENT_RELATIONS = (Relation.SENT_SAME_DOC, Relation.SENT_ADJ, Relation.SENT_PREV,
                  Relation.SENT_NEXT, Relation.SENT_CONTAINS)


def active_relations(config: GraphConfig) -> tuple[Relation, ...]:
    rels = set(BASE_RELATIONS)
    if config.use_reasoning:
        rels.update(REASON_RELATIONS)
    if config.use_sentences:
        rels.update(SENT_RELATIONS)
    return tuple(sorted(rels))


class NodeKind(str, enum.Enum):
    QUERY = "QUERY"
    CAND = "CAND"
    REASON = "REASON"
    SENT = "SENT"


_KIND_RANK = {NodeKind.QUERY: 0, NodeKind.CAND: 1, NodeKind.REASON: 2, NodeKind.SENT: 3}


@dataclass(frozen=True)
class Node:
    kind: NodeKind
    doc: int | None
    sentence: int | None
    start: int | None
    end: int | None
    referent: str
    surface: str
    candidate_index: int | None = None
    placeholder: bool = False

    @property
    def is_entity(self) -> bool:
        return self.kind is not NodeKind.SENT

    def sort_key(self):
        if self.placeholder:
            return (1, 0, 0, 0, 0, 0, self.candidate_index)
        return (0, self.doc, self.sentence, self.start, self.end, _KIND_RANK[self.kind],
                -1 if self.candidate_index is None else self.candidate_index)

    @classmethod
    def from_mention(cls, m: Mention) -> Node:
        kind = {"query": NodeKind.QUERY, "cand": NodeKind.CAND, "reason": NodeKind.REASON}[m.kind]
        return cls(kind, m.doc, m.sentence, m.token_span[0], m.token_span[1], m.referent,
                   m.surface, m.candidate_index)


@dataclass
class RelGraph:
    instance_id: str
    nodes: list[Node]
    edges: list[tuple[int, int, Relation]]
    relations: tuple[Relation, ...]
    n_candidates: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def edge_set(self) -> set[tuple[int, int, Relation]]:
        return set(self.edges)

    def candidate_groups(self) -> list[list[int]]:
        """Node indices of each candidate's mention (or placeholder) nodes."""
        groups: list[list[int]] = [[] for _ in range(self.n_candidates)]
        for i, node in enumerate(self.nodes):
            if node.kind is NodeKind.CAND:
                groups[node.candidate_index].append(i)
        return groups

    def candidate_mask(self) -> list[bool]:
        return [n.kind is NodeKind.CAND for n in self.nodes]

    def validate(self) -> None:
        n = len(self.nodes)
        seen = set()
        for src, dst, rel in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise ValidationError(f"edge ({src}, {dst}, {rel.name}) out of range")
            if src == dst:
                raise ValidationError(f"self-loop on node {src}")
            if rel not in self.relations:
                raise ValidationError(f"edge relation {rel.name} is not active")
            if (src, dst, rel) in seen:
                raise ValidationError(f"duplicate edge ({src}, {dst}, {rel.name})")
            seen.add((src, dst, rel))
        for node in self.nodes:
            if node.kind is NodeKind.CAND and not 0 <= (node.candidate_index or 0) < self.n_candidates:
                raise ValidationError(f"candidate index {node.candidate_index} out of range")


def _sentence_nodes(instance: Instance) -> list[Node]:
    return [
        Node(NodeKind.SENT, d, s, 0, len(sent), normalize(sent), " ".join(sent))
        for d, doc in enumerate(instance.supports)
        for s, sent in enumerate(doc)
    ]


def build_graph(instance: Instance, config: GraphConfig) -> RelGraph:
    if not any(doc for doc in instance.supports):
        raise ValidationError(f"instance {instance.id!r} has no sentences")

    mentions = find_mentions(instance, config)
    reason_nodes: list[Mention] = []
    paths = []
    if config.use_reasoning:
        paths = find_reasoning_paths(instance, mentions, config)
        on_path = {m for p in paths for m in p.reason_mentions}
        reason_nodes = [m for m in mentions.reason if m in on_path]

    entity = [Node.from_mention(m) for m in mentions.query + mentions.cand + reason_nodes]
    nodes = sorted(set(entity) | (set(_sentence_nodes(instance)) if config.use_sentences else set()),
                   key=Node.sort_key)
    mentioned = {n.candidate_index for n in nodes if n.kind is NodeKind.CAND}
    c_refs = candidate_referents(instance)
    for k, cand in enumerate(instance.candidates):
        if k not in mentioned:
            nodes.append(Node(NodeKind.CAND, None, None, None, None, c_refs[k], cand, k, True))

    index = {node: i for i, node in enumerate(nodes)}
    edges: set[tuple[int, int, Relation]] = set()

    def link(a: int, b: int, rel: Relation) -> None:
        if a != b:
            edges.add((a, b, rel))
            edges.add((b, a, rel))

    ents = [i for i, n in enumerate(nodes) if n.is_entity and not n.placeholder]
    by_doc: dict[int, list[int]] = defaultdict(list)
    by_ref: dict[str, list[int]] = defaultdict(list)
    by_sent: dict[tuple[int, int], list[int]] = defaultdict(list)
    for i in ents:
        n = nodes[i]
        by_doc[n.doc].append(i)
        by_ref[n.referent].append(i)
        by_sent[(n.doc, n.sentence)].append(i)

    for group in by_doc.values():
        for a, b in itertools.combinations(group, 2):
            link(a, b, Relation.CO_DOC)
    for group in by_ref.values():
        for a, b in itertools.combinations(group, 2):
            rel = Relation.MATCH_WITHIN if nodes[a].doc == nodes[b].doc else Relation.MATCH_ACROSS
            link(a, b, rel)

    if config.use_reasoning:
        for group in by_sent.values():
            kinds = defaultdict(list)
            for i in group:
                kinds[nodes[i].kind].append(i)
            for a, b in itertools.product(kinds[NodeKind.QUERY], kinds[NodeKind.REASON]):
                link(a, b, Relation.QUERY_REASON)
            for a, b in itertools.product(kinds[NodeKind.REASON], kinds[NodeKind.CAND]):
                link(a, b, Relation.REASON_CAND)
        for path in paths:
            chain = [index[Node.from_mention(m)] for m in path.reason_mentions]
            for a, b in zip(chain, chain[1:]):
                link(a, b, Relation.REASON_REASON)

    if config.use_sentences:
        sent_idx = {(n.doc, n.sentence): i for i, n in enumerate(nodes) if n.kind is NodeKind.SENT}
        for (d, s), i in sent_idx.items():
            for (d2, s2), j in sent_idx.items():
                if d2 == d and s2 > s:
                    link(i, j, Relation.SENT_SAME_DOC)
            nxt = sent_idx.get((d, s + 1))
            if nxt is not None:
                link(i, nxt, Relation.SENT_ADJ)
                edges.add((nxt, i, Relation.SENT_PREV))
                edges.add((i, nxt, Relation.SENT_NEXT))
            for e in by_sent.get((d, s), ()):
                link(i, e, Relation.SENT_CONTAINS)

    related = {(a, b) for a, b, _ in edges}
    live = [i for i, n in enumerate(nodes) if not n.placeholder]
    for a, b in itertools.combinations(live, 2):
        if (a, b) not in related and (b, a) not in related:
            link(a, b, Relation.COMPLEMENT)

    graph = RelGraph(
        instance_id=instance.id,
        nodes=nodes,
        edges=sorted(edges),
        relations=active_relations(config),
        n_candidates=len(instance.candidates),
        meta={"setting": config.setting},
    )
    return graph


def graph_stats(graphs: Sequence[RelGraph]) -> dict:
    graphs = list(graphs)
    if not graphs:
        raise ValueError("graph_stats needs at least one graph")
    per_rel: Counter = Counter()
    kinds: Counter = Counter()
    for g in graphs:
        per_rel.update(rel.name for _, _, rel in g.edges)
        kinds.update(n.kind.value for n in g.nodes)
    return {
        "graphs": len(graphs),
        "mean_nodes": sum(g.n_nodes for g in graphs) / len(graphs),
        "mean_edges": sum(len(g.edges) for g in graphs) / len(graphs),
        "per_relation": {rel.name: per_rel.get(rel.name, 0) for rel in Relation},
        "per_kind": dict(sorted(kinds.items())),
    }
