"""Instance -> relational graph construction."""
from relqa.graphbuild.graph import (
    BASE_RELATIONS, DIRECTED, REASON_RELATIONS, SENT_RELATIONS, Node, NodeKind, RelGraph,
    Relation, active_relations, build_graph, graph_stats,
)
from relqa.graphbuild.instance import Instance, normalize, tokenize
from relqa.graphbuild.mentions import GraphConfig, Mention, MentionSet, find_mentions, query_referents
from relqa.graphbuild.paths import ReasoningPath, find_reasoning_paths
from relqa.graphbuild.serialize import deserialize_graph, serialize_graph

__all__ = [
    "BASE_RELATIONS", "DIRECTED", "GraphConfig", "Instance", "Mention", "MentionSet", "Node",
    "NodeKind", "REASON_RELATIONS", "ReasoningPath", "RelGraph", "Relation", "SENT_RELATIONS",
    "active_relations", "build_graph", "deserialize_graph", "find_mentions",
    "find_reasoning_paths", "graph_stats", "normalize", "query_referents", "serialize_graph",
    "tokenize",
]
