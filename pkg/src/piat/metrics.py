"""Clean/robust MRR@k, attack success rate and location square deviation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import RankedList, ValidationError


@dataclass(frozen=True)
class MetricsReport:
    clean_mrr_at: dict[int, float]
    robust_mrr_at: dict[int, float]
    asr: float
    lsd: float
    n_queries: int
    n_attacked_docs: int
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "clean_mrr_at": {str(k): v for k, v in sorted(self.clean_mrr_at.items())},
            "robust_mrr_at": {str(k): v for k, v in sorted(self.robust_mrr_at.items())},
            "asr": self.asr,
            "lsd": self.lsd,
            "n_queries": self.n_queries,
            "n_attacked_docs": self.n_attacked_docs,
        }
        out.update(self.extras)
        return out


def mrr_at_k(ranked: RankedList, relevant_doc_id: str, k: int) -> float:
    """Reciprocal rank of the relevant document, or 0 beyond the cutoff."""
    if k < 1:
        raise ValidationError(f"cutoff k must be >= 1, got {k}")
    if relevant_doc_id not in ranked.rank_of:
        raise ValidationError(f"relevant document {relevant_doc_id!r} is not in the ranked list")
    r = ranked.rank_of[relevant_doc_id]
    return 1.0 / r if r <= k else 0.0


def attack_success_rate(pairs: Sequence[tuple[int, int]]) -> float:
    """Fraction of ``(orig_rank, attacked_rank)`` pairs that moved strictly up."""
    if not pairs:
        raise ValidationError("attack_success_rate needs at least one pair")
    for o, a in pairs:
        if o < 1 or a < 1:
            raise ValidationError(f"ranks must be >= 1, got {(o, a)}")
    return sum(a < o for o, a in pairs) / len(pairs)


def location_square_deviation(orig: RankedList, perturbed: RankedList) -> float:
    """Mean squared displacement of every document between two rankings."""
    if set(orig.rank_of) != set(perturbed.rank_of):
        raise ValidationError("ranked lists hold different document sets")
    n = len(orig.rank_of)
    return sum((orig.rank_of[d] - perturbed.rank_of[d]) ** 2 for d in orig.rank_of) / n
