"""Mention discovery: exact query/candidate matches plus reasoning-entity spans."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from relqa.errors import ValidationError
from relqa.graphbuild.instance import Instance, normalize, tokenize

KIND_ORDER = {"query": 0, "cand": 1, "reason": 2}

STOPWORDS = frozenset(
    "a an and as at but by for from he her his however i if in it its of on or our she so "
    "that the their there these they this those to was we were what when where which while "
    "who with you".split()
)


@dataclass
class GraphConfig:
    use_reasoning: bool = False
    use_sentences: bool = False
    max_path_docs: int = 3
    ner_mode: str = "heuristic"
    match_normalization: str = "lowercase_exact"

    def __post_init__(self):
        if self.max_path_docs < 2:
            raise ValidationError("max_path_docs must be >= 2")
        if self.ner_mode not in ("heuristic", "provided"):
            raise ValidationError(f"unknown ner_mode {self.ner_mode!r}")
        if self.match_normalization != "lowercase_exact":
            raise ValidationError(f"unsupported match_normalization {self.match_normalization!r}")

    @property
    def setting(self) -> str:
        """Row label used in ablation tables."""
        parts = [p for p, on in (("+Reason", self.use_reasoning), ("+Sents", self.use_sentences)) if on]
        return "".join(parts) or "Base"

    @classmethod
    def from_setting(cls, name: str, **kw) -> GraphConfig:
        key = name.lower().replace(" ", "")
        if key not in ("base", "+reason", "+sents", "+reason+sents"):
            raise ValidationError(f"unknown graph setting {name!r}")
        return cls(use_reasoning="reason" in key, use_sentences="sents" in key, **kw)


@dataclass(frozen=True)
class Mention:
    referent: str
    surface: str
    doc: int
    sentence: int
    token_span: tuple[int, int]
    kind: str
    candidate_index: int | None = None

    @property
    def sort_key(self):
        return (self.doc, self.sentence, self.token_span, KIND_ORDER[self.kind],
                -1 if self.candidate_index is None else self.candidate_index)


class MentionSet(NamedTuple):
    query: list[Mention]
    cand: list[Mention]
    reason: list[Mention]

    def all(self) -> list[Mention]:
        return sorted(self.query + self.cand + self.reason, key=lambda m: m.sort_key)


def capitalized_runs(tokens, blocked=frozenset()) -> list[tuple[int, int]]:
    """Maximal runs of capitalized tokens, skipping blocked positions.

    A stopword at sentence position 0 ("The", "There") does not start a run.
    """
    runs, start = [], None
    for i, tok in enumerate(list(tokens) + [""]):
        cap = (
            i not in blocked
            and tok[:1].isupper()
            and not (i == 0 and tok.lower() in STOPWORDS)
        )
        if cap and start is None:
            start = i
        elif not cap and start is not None:
            runs.append((start, i))
            start = None
    return runs


def query_referents(instance: Instance) -> list[str]:
    """The subject string itself plus named entities inside it."""
    toks = instance.subject_tokens
    refs = [normalize(toks)] if toks else []
    for a, b in capitalized_runs(toks):
        ref = normalize(toks[a:b])
        if ref not in refs:
            refs.append(ref)
    return refs


def candidate_referents(instance: Instance) -> list[str]:
    return [normalize(tokenize(c)) for c in instance.candidates]


def _occurrences(sent_norm: list[str], pattern: list[str]):
    k = len(pattern)
    if k == 0:
        return
    for i in range(len(sent_norm) - k + 1):
        if sent_norm[i:i + k] == pattern:
            yield i, i + k


def find_mentions(instance: Instance, config: GraphConfig) -> MentionSet:
    q_refs = query_referents(instance)
    c_refs = candidate_referents(instance)
    excluded = set(q_refs) | set(c_refs)
    query, cand, reason = [], [], []
    blocked: dict[tuple[int, int], set[int]] = {}

    for d, doc in enumerate(instance.supports):
        for s, sent in enumerate(doc):
            low = [t.lower() for t in sent]
            taken = blocked.setdefault((d, s), set())
            for ref in q_refs:
                for a, b in _occurrences(low, ref.split(" ")):
                    query.append(Mention(ref, " ".join(sent[a:b]), d, s, (a, b), "query"))
                    taken.update(range(a, b))
            for k, ref in enumerate(c_refs):
                for a, b in _occurrences(low, ref.split(" ")):
                    cand.append(Mention(ref, " ".join(sent[a:b]), d, s, (a, b), "cand", k))
                    taken.update(range(a, b))

    if config.ner_mode == "heuristic":
        spans = [
            (d, s, a, b)
            for d, doc in enumerate(instance.supports)
            for s, sent in enumerate(doc)
            for a, b in capitalized_runs(sent, blocked[(d, s)])
        ]
    else:
        spans = sorted(set(tuple(sp) for sp in instance.ner_spans))
    for d, s, a, b in spans:
        if blocked[(d, s)].intersection(range(a, b)):
            continue
        toks = instance.supports[d][s][a:b]
        ref = normalize(toks)
        if ref in excluded:
            continue
        reason.append(Mention(ref, " ".join(toks), d, s, (a, b), "reason"))

    key = lambda m: m.sort_key  # noqa: E731
    return MentionSet(sorted(query, key=key), sorted(cand, key=key), sorted(set(reason), key=key))
