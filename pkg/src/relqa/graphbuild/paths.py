"""Document-chain reasoning paths from query entities to candidates."""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

from relqa.graphbuild.instance import Instance
from relqa.graphbuild.mentions import GraphConfig, Mention, MentionSet


@dataclass(frozen=True)
class ReasoningPath:
    docs: tuple[int, ...]
    bridges: tuple[str, ...]  # referent shared by docs[k] and docs[k + 1]
    mentions: tuple[Mention, ...]

    @property
    def reason_mentions(self) -> tuple[Mention, ...]:
        return tuple(m for m in self.mentions if m.kind == "reason")


def _path_mentions(docs, bridges, by_doc_ref) -> tuple[Mention, ...]:
    out = []
    for k, d in enumerate(docs):
        refs = set()
        if k > 0:
            refs.add(bridges[k - 1])
        if k < len(bridges):
            refs.add(bridges[k])
        step = [m for r in refs for m in by_doc_ref.get((d, r), ())]
        out.extend(sorted(set(step), key=lambda m: m.sort_key))
    return tuple(out)


def find_reasoning_paths(
    instance: Instance, mentions: MentionSet, config: GraphConfig
) -> list[ReasoningPath]:
    """Enumerate document chains d1..dk (k <= max_path_docs).

    d1 holds a query mention, dk a candidate mention, and each consecutive
    pair shares a query- or reasoning-entity referent. One path is emitted
    per distinct choice of shared referents; docs never repeat in a chain.
    """
    bridge_mentions = mentions.query + mentions.reason
    doc_refs: dict[int, set[str]] = {}
    by_doc_ref: dict[tuple[int, str], list[Mention]] = {}
    for m in bridge_mentions:
        doc_refs.setdefault(m.doc, set()).add(m.referent)
        by_doc_ref.setdefault((m.doc, m.referent), []).append(m)
    cand_docs = {m.doc for m in mentions.cand}
    starts = sorted({m.doc for m in mentions.query})

    paths: list[ReasoningPath] = []
    seen = set()
    queue = deque((d,) for d in starts)
    while queue:
        chain = queue.popleft()
        if chain[-1] in cand_docs:
            shared = [sorted(doc_refs[a] & doc_refs[b]) for a, b in zip(chain, chain[1:])]
            for bridges in itertools.product(*shared):
                key = (chain, bridges)
                if key not in seen:
                    seen.add(key)
                    paths.append(ReasoningPath(chain, bridges, _path_mentions(chain, bridges, by_doc_ref)))
        if len(chain) >= config.max_path_docs:
            continue
        here = doc_refs.get(chain[-1], set())
        for nxt in sorted(doc_refs):
            if nxt not in chain and here & doc_refs[nxt]:
                queue.append(chain + (nxt,))
    return paths
