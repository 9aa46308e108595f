"""Domain types shared across the package: vocabulary, documents, queries,
candidate sets and ranked lists.

Ranks are 1-based everywhere; rank 1 is the best position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a type invariant."""


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        words = tuple(self.words)
        index = {w: i for i, w in enumerate(words)}
        if len(index) != len(words):
            raise ValidationError("vocabulary words must be distinct")
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.words)

    def lookup(self, word: str) -> int:
        return self._index[word]

    def word(self, token_id: int) -> str:
        return self.words[token_id]


def _check_tokens(tokens: Sequence[int], vocab_size: int | None, what: str) -> None:
    if vocab_size is None:
        return
    for t in tokens:
        if not 0 <= t < vocab_size:
            raise ValidationError(f"{what}: token id {t} outside vocabulary of size {vocab_size}")


@dataclass(frozen=True)
class TokenDoc:
    doc_id: str
    tokens: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if len(self.tokens) < 1:
            raise ValidationError(f"document {self.doc_id!r} is empty")
        if any(t < 0 for t in self.tokens):
            raise ValidationError(f"document {self.doc_id!r} has a negative token id")

    def __len__(self) -> int:
        return len(self.tokens)

    def check_vocab(self, vocab_size: int) -> None:
        _check_tokens(self.tokens, vocab_size, f"document {self.doc_id!r}")

    def replace(self, substitutions: Iterable[tuple[int, int]]) -> "TokenDoc":
        """Copy of this document with ``(position, new_token)`` substitutions applied."""
        tokens = list(self.tokens)
        for pos, new in substitutions:
            tokens[pos] = new
        return TokenDoc(self.doc_id, tuple(tokens))


@dataclass(frozen=True)
class TokenQuery:
    query_id: str
    tokens: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if len(self.tokens) < 1:
            raise ValidationError(f"query {self.query_id!r} is empty")
        if any(t < 0 for t in self.tokens):
            raise ValidationError(f"query {self.query_id!r} has a negative token id")

    def check_vocab(self, vocab_size: int) -> None:
        _check_tokens(self.tokens, vocab_size, f"query {self.query_id!r}")


@dataclass(frozen=True)
class CandidateSet:
    """Candidate documents of one query with a full ground-truth permutation."""

    query_id: str
    docs: tuple[TokenDoc, ...]
    gt_rank: Mapping[str, int]

    def __post_init__(self):
        docs = tuple(self.docs)
        object.__setattr__(self, "docs", docs)
        ids = [d.doc_id for d in docs]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"candidate set {self.query_id!r} has duplicate doc ids")
        if set(self.gt_rank) != set(ids):
            raise ValidationError(f"candidate set {self.query_id!r}: gt_rank keys differ from doc ids")
        if sorted(self.gt_rank.values()) != list(range(1, len(docs) + 1)):
            raise ValidationError(f"candidate set {self.query_id!r}: gt_rank is not a bijection onto 1..N_d")
        object.__setattr__(self, "gt_rank", dict(self.gt_rank))

    def __len__(self) -> int:
        return len(self.docs)

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.docs]

    def gt_top(self) -> TokenDoc:
        """The relevant document (ground-truth rank 1)."""
        for d in self.docs:
            if self.gt_rank[d.doc_id] == 1:
                return d
        raise AssertionError("unreachable: gt_rank is a bijection")

    def index_of(self, doc_id: str) -> int:
        return self.doc_ids.index(doc_id)


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: tuple[tuple[str, float], ...]
    rank_of: Mapping[str, int]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]


def rank_by_scores(scores: Mapping[str, float], query_id: str = "") -> RankedList:
    """Sort documents by descending score; equal scores go to the smaller doc_id."""
    if not scores:
        raise ValidationError("cannot rank an empty score map")
    for doc_id, s in scores.items():
        if not math.isfinite(s):
            raise ValidationError(f"non-finite score {s!r} for document {doc_id!r}")
    order = sorted(scores, key=lambda d: (-scores[d], d))
    entries = tuple((d, float(scores[d])) for d in order)
    rank_of = {d: i + 1 for i, d in enumerate(order)}
    return RankedList(query_id, entries, rank_of)


def argsort_desc(scores: np.ndarray) -> np.ndarray:
    """Indices ordering ``scores`` descending, ties to the smaller index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(len(scores)), -scores))


def ranks_from_scores(scores: np.ndarray, tie_keys: Sequence | None = None) -> np.ndarray:
    """1-based rank of every entry of ``scores``.

    ``tie_keys`` (e.g. doc ids) break ties ascending; defaults to position.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    if tie_keys is None:
        order = argsort_desc(scores)
    else:
        order = sorted(range(n), key=lambda i: (-scores[i], tie_keys[i]))
    ranks = np.empty(n, dtype=np.int64)
    ranks[np.asarray(order, dtype=np.int64)] = np.arange(1, n + 1)
    return ranks


def hamming_fraction(d: TokenDoc, d_prime: TokenDoc) -> float:
    """Fraction of positions at which two equal-length documents differ."""
    if len(d) != len(d_prime):
        raise ValidationError(
            f"length mismatch: {len(d)} vs {len(d_prime)} (substitution never changes length)"
        )
    diff = sum(a != b for a, b in zip(d.tokens, d_prime.tokens))
    return diff / len(d)
