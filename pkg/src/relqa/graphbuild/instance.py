"""QA instances and their line-delimited JSON representation."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from relqa.errors import ValidationError

_TOKEN = re.compile(r"\w+(?:[-'’]\w+)*|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text)


def normalize(tokens) -> str:
    """Lowercase exact-match key for a token sequence."""
    return " ".join(t.lower() for t in tokens)


@dataclass
class Instance:
    id: str
    query_relation: str
    query_subject: str
    candidates: list[str]
    supports: list[list[list[str]]]  # document -> sentence -> token
    answer: str
    ner_spans: list[tuple[int, int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    @property
    def answer_index(self) -> int:
        return self.candidates.index(self.answer)

    @property
    def subject_tokens(self) -> list[str]:
        return tokenize(self.query_subject)

    @property
    def query_tokens(self) -> list[str]:
        """Relation words followed by the subject tokens."""
        rel = [w for w in re.split(r"[_\s]+", self.query_relation) if w]
        return rel + self.subject_tokens

    def validate(self) -> None:
        where = f"instance {self.id!r}"
        if not self.candidates:
            raise ValidationError(f"{where}: no candidates")
        if self.answer not in self.candidates:
            raise ValidationError(f"{where}: answer {self.answer!r} is not among the candidates")
        if not self.supports:
            raise ValidationError(f"{where}: no support documents")
        for d, doc in enumerate(self.supports):
            for s, sent in enumerate(doc):
                if not sent:
                    raise ValidationError(f"{where}: empty sentence {s} in document {d}")
        for span in self.ner_spans:
            if len(span) != 4:
                raise ValidationError(f"{where}: ner span {span!r} must be [doc, sent, start, end]")
            d, s, a, b = span
            if not (0 <= d < len(self.supports) and 0 <= s < len(self.supports[d])
                    and 0 <= a < b <= len(self.supports[d][s])):
                raise ValidationError(f"{where}: ner span {list(span)} out of bounds")

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> Instance:
        try:
            query = rec["query"]
            relation, _, subject = query.partition(" ")
            return cls(
                id=str(rec["id"]),
                query_relation=relation,
                query_subject=subject,
                candidates=[str(c) for c in rec["candidates"]],
                supports=[[[str(t) for t in sent] for sent in doc] for doc in rec["supports"]],
                answer=str(rec["answer"]),
                ner_spans=[tuple(int(v) for v in span) for span in rec.get("ner_spans", [])],
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(
                f"instance {rec.get('id', '?') if isinstance(rec, dict) else '?'!r}: "
                f"malformed record ({exc.__class__.__name__}: {exc})"
            ) from None

    def to_record(self) -> dict[str, Any]:
        rec = {
            "id": self.id,
            "query": f"{self.query_relation} {self.query_subject}",
            "candidates": list(self.candidates),
            "supports": [[list(sent) for sent in doc] for doc in self.supports],
            "answer": self.answer,
        }
        if self.ner_spans:
            rec["ner_spans"] = [list(span) for span in self.ner_spans]
        return rec
