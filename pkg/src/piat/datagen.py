"""Seeded synthetic corpus with planted relevance and synonym classes.

Every token realizes a *concept*. Tokens in one synonym class share a concept,
so swapping a token for a synonym never changes the planted relevance. Each
query picks a few topical concepts; a document's relevance is the number of
its positions drawn from those concepts (plus optional Gaussian noise), which
yields a total ground-truth order over every candidate set.

Within a synonym class the first member is the common spelling and the others
are rare, so a ranker trained on this corpus sees the rare members far less
often. That frequency skew is what word-substitution attacks exploit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import TYPE_CHECKING

import numpy as np

from .core import CandidateSet, TokenDoc, TokenQuery, ValidationError, Vocabulary

if TYPE_CHECKING:
    from .attack import AttackBudget


@dataclass(frozen=True)
class SynonymLexicon:
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(t) for t in g)) for g in self.groups)
        seen: set[int] = set()
        for g in groups:
            if len(set(g)) != len(g):
                raise ValidationError(f"synonym group {g} repeats a token")
            if seen & set(g):
                raise ValidationError(f"synonym group {g} overlaps another group")
            seen.update(g)
        object.__setattr__(self, "groups", groups)
        syn = {}
        for g in groups:
            for t in g:
                syn[t] = tuple(s for s in g if s != t)
        object.__setattr__(self, "_syn", syn)

    def syn_of(self, token: int) -> tuple[int, ...]:
        """Synonyms of ``token``, excluding itself (empty if it has no class)."""
        return self._syn.get(int(token), ())

    @classmethod
    def empty(cls) -> "SynonymLexicon":
        return cls(())

    def check_vocab(self, vocab_size: int) -> None:
        for g in self.groups:
            for t in g:
                if not 0 <= t < vocab_size:
                    raise ValidationError(f"synonym token {t} outside vocabulary of size {vocab_size}")


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    vocab_size: int = 400
    n_queries: int = 200
    n_eval_queries: int = 100
    docs_per_query: int = 20
    doc_len: int = 12
    query_len: int = 3
    synonym_class_size: int = 3
    n_synonym_classes: int = 100
    relevance_noise: float = 0.0
    # probability that a synonym-class concept is spelled with its common member
    common_prob: float = 0.8

    def validate(self) -> None:
        counts = ("vocab_size", "n_queries", "docs_per_query", "doc_len", "query_len", "n_synonym_classes")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValidationError(f"GenConfig.{name} must be >= 1")
        if self.n_eval_queries < 0:
            raise ValidationError("GenConfig.n_eval_queries must be >= 0")
        if self.synonym_class_size < 2:
            raise ValidationError("GenConfig.synonym_class_size must be >= 2")
        if self.n_synonym_classes * self.synonym_class_size > self.vocab_size:
            raise ValidationError("GenConfig.n_synonym_classes * synonym_class_size exceeds vocab_size")
        if self.query_len > self.n_synonym_classes:
            raise ValidationError("GenConfig.query_len exceeds the number of topical concepts")
        if self.n_synonym_classes == self.query_len and self.vocab_size == self.n_synonym_classes * self.synonym_class_size:
            raise ValidationError("GenConfig.vocab_size leaves no off-topic concepts")
        if self.relevance_noise < 0:
            raise ValidationError("GenConfig.relevance_noise must be >= 0")
        if not 0.0 <= self.common_prob <= 1.0:
            raise ValidationError("GenConfig.common_prob must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown gen config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Example:
    """One query with its candidate set and the planted relevance values."""

    query: TokenQuery
    candidates: CandidateSet
    relevance: tuple[float, ...]


@dataclass(frozen=True)
class Corpus:
    vocab: Vocabulary
    lexicon: SynonymLexicon
    train: tuple[Example, ...]
    eval: tuple[Example, ...]

    @property
    def examples(self) -> tuple[Example, ...]:
        return self.train + self.eval


def _concepts(cfg: GenConfig) -> list[tuple[int, ...]]:
    size = cfg.synonym_class_size
    classes = [tuple(range(c * size, (c + 1) * size)) for c in range(cfg.n_synonym_classes)]
    singles = [(t,) for t in range(cfg.n_synonym_classes * size, cfg.vocab_size)]
    return classes + singles


def _spell(concept: tuple[int, ...], common_prob: float, rng: np.random.Generator) -> int:
    if len(concept) == 1 or rng.random() < common_prob:
        return concept[0]
    return concept[1 + int(rng.integers(len(concept) - 1))]


def _make_example(cfg: GenConfig, concepts: list[tuple[int, ...]], qi: int) -> Example:
    rng = np.random.default_rng([cfg.seed, qi])
    n_topical = cfg.n_synonym_classes
    topic = rng.choice(n_topical, size=cfg.query_len, replace=False)
    topic_set = set(int(c) for c in topic)
    off_topic = np.array([c for c in range(len(concepts)) if c not in topic_set])

    qid = f"q{qi:04d}"
    query = TokenQuery(qid, tuple(_spell(concepts[c], cfg.common_prob, rng) for c in topic))

    m = cfg.doc_len
    high = max(1, (m + 1) // 2)
    overlaps = [high] + [int(rng.integers(0, high)) for _ in range(cfg.docs_per_query - 1)]
    rng.shuffle(overlaps)

    docs = []
    for j, o in enumerate(overlaps):
        picks = list(rng.choice(topic, size=o)) + list(rng.choice(off_topic, size=m - o))
        rng.shuffle(picks)
        tokens = tuple(_spell(concepts[int(c)], cfg.common_prob, rng) for c in picks)
        docs.append(TokenDoc(f"{qid}-d{j:03d}", tokens))

    relevance = np.asarray(overlaps, dtype=np.float64)
    if cfg.relevance_noise > 0:
        relevance = relevance + cfg.relevance_noise * rng.standard_normal(len(docs))
    order = sorted(range(len(docs)), key=lambda i: (-relevance[i], docs[i].doc_id))
    gt_rank = {docs[i].doc_id: r + 1 for r, i in enumerate(order)}
    cs = CandidateSet(qid, tuple(docs), gt_rank)
    return Example(query, cs, tuple(float(r) for r in relevance))


def generate(cfg: GenConfig) -> Corpus:
    """Build the vocabulary, lexicon and train/eval examples for ``cfg``.

    Query ``i`` draws from its own RNG stream seeded by ``(seed, i)``, so the
    output does not depend on generation order.
    """
    cfg.validate()
    vocab = Vocabulary(tuple(f"w{t:05d}" for t in range(cfg.vocab_size)))
    concepts = _concepts(cfg)
    lexicon = SynonymLexicon(tuple(c for c in concepts if len(c) > 1))
    examples = [_make_example(cfg, concepts, qi) for qi in range(cfg.n_queries + cfg.n_eval_queries)]
    return Corpus(vocab, lexicon, tuple(examples[: cfg.n_queries]), tuple(examples[cfg.n_queries :]))


def neighborhood_size(d: TokenDoc, lex: SynonymLexicon, budget: "AttackBudget") -> int:
    """Exact number of documents within the substitution budget of ``d``, including ``d``.

    Sum over all patterns of at most ``budget.limit(M)`` substituted positions of
    the product of per-position synonym counts (elementary symmetric sums).
    """
    limit = budget.limit(len(d))
    # e[k] = number of ways to substitute exactly k positions
    e = [1] + [0] * limit
    for t in d.tokens:
        c = len(lex.syn_of(t))
        if c == 0:
            continue
        for k in range(limit, 0, -1):
            e[k] += e[k - 1] * c
    return sum(e)
