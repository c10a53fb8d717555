"""Dataset IO and the synthetic multi-hop task generator."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from relqa.errors import ValidationError
from relqa.graphbuild import Instance

log = logging.getLogger(__name__)

RELATIONS = ("located_in", "member_of", "part_of", "founded_by", "capital_of", "citizen_of")
_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def load_dataset(path) -> list[Instance]:
    """Read a JSON-lines file of instance records, validating every line."""
    path = Path(path)
    out = []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ValidationError(f"{path}:{lineno}: record must be an object")
            try:
                inst = Instance.from_record(rec)
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if inst.id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate instance id {inst.id!r}")
            seen.add(inst.id)
            out.append(inst)
    if not out:
        log.warning("%s contains no instances", path)
    return out


def dumps_dataset(instances: Iterable[Instance]) -> str:
    return "".join(json.dumps(i.to_record(), sort_keys=True) + "\n" for i in instances)


def save_dataset(instances: Iterable[Instance], path) -> None:
    Path(path).write_text(dumps_dataset(instances), encoding="utf-8")


@dataclass
class SyntheticSpec:
    n_instances: int = 100
    n_docs: int | None = None      # default: the minimum the hop depth needs
    n_candidates: int = 5
    hop_depth: int = 2
    seed: int = 0
    vocab_size: int = 2000         # distinct entity names in the pool
    filler_size: int = 200
    id_prefix: str = "syn"

    def __post_init__(self):
        if self.hop_depth not in (1, 2):
            raise ValidationError(f"hop_depth must be 1 or 2, got {self.hop_depth}")
        if self.n_instances < 0:
            raise ValidationError("n_instances must be >= 0")
        if self.n_candidates < 1:
            raise ValidationError("n_candidates must be >= 1")
        if self.n_docs is None:
            self.n_docs = self.min_docs
        if self.n_docs < self.min_docs:
            raise ValidationError(
                f"hop_depth={self.hop_depth} with {self.n_candidates} candidates needs "
                f">= {self.min_docs} documents, got {self.n_docs}"
            )
        needed = self.names_per_instance
        if needed > self.vocab_size:
            raise ValidationError(
                f"each instance needs {needed} distinct entity names but vocab_size is {self.vocab_size}"
            )
        if self.filler_size < 4:
            raise ValidationError("filler_size must be >= 4")

    @property
    def min_docs(self) -> int:
        return self.hop_depth * self.n_candidates

    @property
    def names_per_instance(self) -> int:
        # subjects and candidates, plus one bridge entity per chain at depth 2,
        # plus one name per extra noise document
        return (self.hop_depth + 1) * self.n_candidates + (self.n_docs - self.min_docs)

    def to_dict(self) -> dict:
        return asdict(self)


def _word_pool(rng: np.random.Generator, size: int, syllables: int, capital: bool) -> list[str]:
    words: set[str] = set()
    out = []
    while len(out) < size:
        w = "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(syllables))
        if w not in words:
            words.add(w)
            out.append(w.capitalize() if capital else w)
    return out


def gen_synthetic(spec: SyntheticSpec) -> list[Instance]:
    """Generate a dataset whose answers need a fixed number of document hops.

    Depth 2: chain k is a *bridge* document mentioning subject S_k with entity
    E_k and a *candidate* document mentioning E_k with candidate C_k. Only
    S_0 is the query subject, so the answer C_0 is reached only through
    S_0 -> E_0 -> C_0. Every candidate document looks alike on its own.

    Depth 1: document k mentions S_k next to C_k; the answer shares a
    document with the query subject.

    Entity names are capitalised pseudo-words and everything else is
    lowercase filler, so heuristic NER and the emitted ``ner_spans`` agree.
    """
    rng = np.random.default_rng(spec.seed)
    names = _word_pool(rng, spec.vocab_size, 3, capital=True)
    filler = _word_pool(rng, spec.filler_size, 2, capital=False)
    K = spec.n_candidates
    out = []
    for idx in range(spec.n_instances):
        picks = rng.choice(len(names), size=spec.names_per_instance, replace=False)
        pool = [names[i] for i in picks]
        subjects, pool = pool[:K], pool[K:]
        if spec.hop_depth == 2:
            bridges, pool = pool[:K], pool[K:]
        cands, noise = pool[:K], pool[K:]

        def fill(n):
            return [filler[i] for i in rng.integers(len(filler), size=n)]

        pairs = []  # entity pairs, one document each
        if spec.hop_depth == 2:
            for k in range(K):
                pairs.append((subjects[k], bridges[k]))
                pairs.append((bridges[k], cands[k]))
        else:
            pairs = list(zip(subjects, cands))
        pairs += [(n, None) for n in noise]

        docs = []
        for first, second in pairs:
            ent = [first] + fill(2) + ([second] if second else []) + fill(2) + ["."]
            other = fill(4) + ["."]
            docs.append([ent, other] if rng.random() < 0.5 else [other, ent])
        order = rng.permutation(len(docs))
        docs = [docs[i] for i in order]

        ner = []
        for d, doc in enumerate(docs):
            for s, sent in enumerate(doc):
                ner.extend((d, s, t, t + 1) for t, tok in enumerate(sent) if tok[0].isupper())

        cand_order = rng.permutation(K)
        candidates = [cands[i] for i in cand_order]
        out.append(Instance(
            id=f"{spec.id_prefix}-{spec.seed}-{idx:05d}",
            query_relation=RELATIONS[int(rng.integers(len(RELATIONS)))],
            query_subject=subjects[0],
            candidates=candidates,
            supports=docs,
            answer=cands[0],
            ner_spans=ner,
        ))
    return out
