"""Measured ranking errors: natural, boundary and robust.

All expectations over documents are exact averages over a candidate set; the
neighborhood of every document is enumerated in full (never sampled). A
perturbed document is evaluated by putting it in place of its original and
re-ranking the whole set, one document at a time.

Boundary semantics. The neighborhood rank of a document is one position
above its ground-truth rank. The ground-truth top document has no rank above
it; for it only the move one position *down* is considered, so its
neighborhood rank is 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attack import DEFAULT_ENUM_CAP, AttackBudget, enumerate_neighborhood
from .core import CandidateSet, TokenDoc, TokenQuery, ValidationError, rank_by_scores
from .datagen import SynonymLexicon
from .model import ScoringModel, score_batch


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class DocRecord:
    doc_id: str
    pred_rank: int
    gt_rank: int
    neighbor_rank: int
    in_boundary_nbhd: bool
    correctly_ranked: bool
    rank_can_change: bool
    flip_witness: TokenDoc | None = None


@dataclass(frozen=True)
class ErrorReport:
    r_nat: float
    r_bdy: float
    r_rob: float
    bound_bdy: float
    gap: float
    eta: float
    # P[d in B(DB(f), eps)] regardless of correctness
    boundary_membership: float
    n_docs: int
    per_doc: tuple[DocRecord, ...] = field(repr=False)

    @property
    def bound_holds(self) -> bool:
        return self.r_bdy <= self.bound_bdy

    @property
    def tightness_holds(self) -> bool:
        return self.gap <= self.eta + 1e-12

    @property
    def membership_gap(self) -> float:
        return self.boundary_membership - self.r_bdy


def neighbor_rank(pi_y: int, n_docs: int | None = None) -> int:
    """Rank one position above ``pi_y``; 2 for the top document."""
    if pi_y < 1 or (n_docs is not None and pi_y > n_docs):
        raise ValidationError(f"rank {pi_y} outside 1..{n_docs if n_docs is not None else 'N_d'}")
    return pi_y - 1 if pi_y > 1 else 2


def _predicted_ranks(model: ScoringModel, q: TokenQuery, cs: CandidateSet) -> tuple[np.ndarray, dict[str, int]]:
    scores = score_batch(model, q, cs.docs)
    ranked = rank_by_scores(dict(zip(cs.doc_ids, scores.tolist())), cs.query_id)
    return scores, dict(ranked.rank_of)


def natural_error(model: ScoringModel, q: TokenQuery, cs: CandidateSet) -> float:
    """Fraction of documents whose predicted rank differs from the ground truth."""
    _, pred = _predicted_ranks(model, q, cs)
    return sum(pred[d] != cs.gt_rank[d] for d in cs.doc_ids) / len(cs)


def _replacement_ranks(scores: np.ndarray, ids: Sequence[str], i: int, new_scores: np.ndarray) -> np.ndarray:
    """Rank doc ``i`` would take for each score in ``new_scores``, others fixed."""
    others = np.delete(scores, i)
    other_ids = [d for j, d in enumerate(ids) if j != i]
    before_on_tie = np.array([d < ids[i] for d in other_ids], dtype=bool)
    above = (others[None, :] > new_scores[:, None]) | ((others[None, :] == new_scores[:, None]) & before_on_tie[None, :])
    return 1 + above.sum(axis=1)


def _analyze_doc(
    model: ScoringModel,
    q: TokenQuery,
    cs: CandidateSet,
    i: int,
    scores: np.ndarray,
    pred: dict[str, int],
    lex: SynonymLexicon,
    budget: AttackBudget,
    cap: int,
) -> DocRecord:
    d = cs.docs[i]
    neighbors = list(enumerate_neighborhood(d, lex, budget, cap))
    new_ranks = _replacement_ranks(scores, cs.doc_ids, i, score_batch(model, q, neighbors))
    pf = pred[d.doc_id]
    py = cs.gt_rank[d.doc_id]
    pn = neighbor_rank(py)
    crossing = (pf - pn) * (new_ranks - pn) <= 0
    witness = neighbors[int(np.argmax(crossing))] if crossing.any() else None
    return DocRecord(
        doc_id=d.doc_id,
        pred_rank=pf,
        gt_rank=py,
        neighbor_rank=pn,
        in_boundary_nbhd=bool(crossing.any()),
        correctly_ranked=pf == py,
        rank_can_change=bool(np.any(new_ranks != pf)),
        flip_witness=witness,
    )


def _analyze(model, q, cs, lex, budget, cap) -> list[DocRecord]:
    scores, pred = _predicted_ranks(model, q, cs)
    return [_analyze_doc(model, q, cs, i, scores, pred, lex, budget, cap) for i in range(len(cs))]


def in_boundary_neighborhood(
    model: ScoringModel,
    q: TokenQuery,
    cs: CandidateSet,
    doc_id: str,
    lex: SynonymLexicon,
    budget: AttackBudget,
    cap: int = DEFAULT_ENUM_CAP,
) -> tuple[bool, TokenDoc | None]:
    """Whether some neighbor of the document lands on the other side of its boundary.

    Returns the first crossing neighbor in enumeration order as witness.
    """
    scores, pred = _predicted_ranks(model, q, cs)
    rec = _analyze_doc(model, q, cs, cs.index_of(doc_id), scores, pred, lex, budget, cap)
    return rec.in_boundary_nbhd, rec.flip_witness


def boundary_error(
    model: ScoringModel,
    q: TokenQuery,
    cs: CandidateSet,
    lex: SynonymLexicon,
    budget: AttackBudget,
    cap: int = DEFAULT_ENUM_CAP,
) -> float:
    """Fraction of correctly ranked documents that can be pushed across the boundary."""
    recs = _analyze(model, q, cs, lex, budget, cap)
    return sum(r.in_boundary_nbhd and r.correctly_ranked for r in recs) / len(recs)


def boundary_bound(
    model: ScoringModel,
    q: TokenQuery,
    cs: CandidateSet,
    lex: SynonymLexicon,
    budget: AttackBudget,
    cap: int = DEFAULT_ENUM_CAP,
) -> float:
    """Fraction of documents with some in-budget neighbor that changes their rank."""
    recs = _analyze(model, q, cs, lex, budget, cap)
    return sum(r.rank_can_change for r in recs) / len(recs)


def _report_from_records(recs: Sequence[DocRecord], r_nat: float, r_bdy: float, bound: float, member: float) -> ErrorReport:
    report = ErrorReport(
        r_nat=r_nat,
        r_bdy=r_bdy,
        r_rob=r_nat + r_bdy,
        bound_bdy=bound,
        gap=bound - r_bdy,
        eta=r_nat,
        boundary_membership=member,
        n_docs=len(recs),
        per_doc=tuple(recs),
    )
    return report


def robust_error_report(
    model: ScoringModel,
    q: TokenQuery,
    cs: CandidateSet,
    lex: SynonymLexicon,
    budget: AttackBudget,
    cap: int = DEFAULT_ENUM_CAP,
) -> ErrorReport:
    """All error quantities for one query, with the per-document ledger.

    Raises ``InvariantViolation`` if the ledger does not partition the
    documents or the upper bound falls below the boundary error. The gap
    versus natural-error inequality is reported (``tightness_holds``), not
    enforced.
    """
    report = measure_errors(model, q, cs, lex, budget, cap)
    check_report(report)
    return report


def measure_errors(
    model: ScoringModel,
    q: TokenQuery,
    cs: CandidateSet,
    lex: SynonymLexicon,
    budget: AttackBudget,
    cap: int = DEFAULT_ENUM_CAP,
) -> ErrorReport:
    """Like ``robust_error_report`` but never raises on a violated inequality."""
    recs = _analyze(model, q, cs, lex, budget, cap)
    n = len(recs)
    n_wrong = sum(not r.correctly_ranked for r in recs)
    n_bdy = sum(r.in_boundary_nbhd and r.correctly_ranked for r in recs)
    report = _report_from_records(
        recs,
        n_wrong / n,
        n_bdy / n,
        sum(r.rank_can_change for r in recs) / n,
        sum(r.in_boundary_nbhd for r in recs) / n,
    )
    return report


def check_report(report: ErrorReport) -> None:
    check_partition(report)
    if not report.bound_holds:
        raise InvariantViolation(f"boundary error {report.r_bdy} exceeds its bound {report.bound_bdy}")


def check_partition(report: ErrorReport) -> None:
    """Verify that the ledger partitions the documents and r_rob is their sum."""
    recs = report.per_doc
    n = len(recs)
    wrong = [r for r in recs if not r.correctly_ranked]
    bdy = [r for r in recs if r.correctly_ranked and r.in_boundary_nbhd]
    safe = [r for r in recs if r.correctly_ranked and not r.in_boundary_nbhd]
    if len(wrong) + len(bdy) + len(safe) != n:
        raise InvariantViolation("per-document ledger does not partition the candidate set")
    if report.r_rob != report.r_nat + report.r_bdy:
        raise InvariantViolation("robust error is not the sum of natural and boundary errors")
    if report.r_nat != len(wrong) / n or report.r_bdy != len(bdy) / n:
        raise InvariantViolation("error rates disagree with the per-document ledger")


def aggregate_reports(reports: Sequence[ErrorReport]) -> ErrorReport:
    """Mean of per-query reports; per-document records are concatenated in order."""
    if not reports:
        raise ValidationError("no reports to aggregate")
    k = len(reports)

    def mean(attr: str) -> float:
        return sum(getattr(r, attr) for r in reports) / k

    recs = tuple(rec for r in reports for rec in r.per_doc)
    r_nat, r_bdy = mean("r_nat"), mean("r_bdy")
    report = ErrorReport(
        r_nat=r_nat,
        r_bdy=r_bdy,
        r_rob=r_nat + r_bdy,
        bound_bdy=mean("bound_bdy"),
        gap=mean("bound_bdy") - r_bdy,
        eta=r_nat,
        boundary_membership=mean("boundary_membership"),
        n_docs=len(recs),
        per_doc=recs,
    )
    return report


def report_to_dict(report: ErrorReport) -> dict:
    return {
        "r_nat": report.r_nat,
        "r_bdy": report.r_bdy,
        "r_rob": report.r_rob,
        "bound_bdy": report.bound_bdy,
        "gap": report.gap,
        "eta": report.eta,
        "boundary_membership": report.boundary_membership,
        "bound_holds": report.bound_holds,
        "tightness_holds": report.tightness_holds,
        "per_doc": [
            {
                "doc_id": r.doc_id,
                "pred_rank": r.pred_rank,
                "gt_rank": r.gt_rank,
                "neighbor_rank": r.neighbor_rank,
                "in_boundary_nbhd": r.in_boundary_nbhd,
                "correctly_ranked": r.correctly_ranked,
                "rank_can_change": r.rank_can_change,
                "flip_witness": list(r.flip_witness.tokens) if r.flip_witness is not None else None,
            }
            for r in report.per_doc
        ],
    }


@dataclass(frozen=True)
class Instance:
    model: ScoringModel
    query: TokenQuery
    candidates: CandidateSet
    lexicon: SynonymLexicon
    budget: AttackBudget


def random_instance(rng: np.random.Generator, max_docs: int = 6, max_len: int = 6, max_dim: int = 3) -> Instance:
    """A small random (model, candidate set, lexicon, budget) draw.

    Parameters are standard normal so ties are rare; the lexicon groups a
    random prefix of a vocabulary permutation into classes of size 2 or 3.
    """
    if max_docs < 1 or max_len < 1 or max_dim < 1:
        raise ValidationError("size caps must be >= 1")
    v = int(rng.integers(6, 16))
    e = int(rng.integers(1, max_dim + 1))
    model = ScoringModel(rng.normal(size=(v, e)), rng.normal(size=(e, e)), float(rng.normal()))
    perm = rng.permutation(v)
    groups = []
    i = 0
    while i < v - 1 and rng.random() < 0.7:
        size = int(rng.integers(2, 4))
        group = tuple(int(t) for t in perm[i : i + size])
        if len(group) >= 2:
            groups.append(group)
        i += size
    lex = SynonymLexicon(tuple(groups))
    n_docs = int(rng.integers(1, max_docs + 1))
    m = int(rng.integers(1, max_len + 1))
    docs = tuple(TokenDoc(f"d{j}", tuple(int(t) for t in rng.integers(0, v, size=m))) for j in range(n_docs))
    gt = rng.permutation(n_docs) + 1
    cs = CandidateSet("q", docs, {d.doc_id: int(r) for d, r in zip(docs, gt)})
    q = TokenQuery("q", tuple(int(t) for t in rng.integers(0, v, size=int(rng.integers(1, 4)))))
    budget = AttackBudget(float(rng.uniform(0.1, 1.0)), int(rng.integers(1, 4)))
    return Instance(model, q, cs, lex, budget)


@dataclass(frozen=True)
class VerifySummary:
    trials: int
    seed: int
    bound_violations: int
    tightness_violations: int
    decomposition_violations: int
    # gap measured with boundary membership as the upper bound
    membership_tightness_violations: int
    max_gap_excess: float
    first_tightness_counterexample: int | None

    @property
    def ok(self) -> bool:
        return self.bound_violations == 0 and self.tightness_violations == 0 and self.decomposition_violations == 0

    def to_dict(self) -> dict:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d["ok"] = self.ok
        return d


def verify_inequalities(trials: int, seed: int = 0, max_docs: int = 6, max_len: int = 6) -> VerifySummary:
    """Count violations of the error inequalities over seeded random draws.

    Draw ``t`` uses the RNG stream ``(seed, t)``.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    t1 = tight = decomp = member = 0
    excess = -np.inf
    first = None
    for t in range(trials):
        inst = random_instance(np.random.default_rng([seed, t]), max_docs, max_len)
        r = measure_errors(inst.model, inst.query, inst.candidates, inst.lexicon, inst.budget)
        t1 += not r.bound_holds
        if not r.tightness_holds:
            tight += 1
            if first is None:
                first = t
        try:
            check_partition(r)
        except InvariantViolation:
            decomp += 1
        member += r.membership_gap > r.eta + 1e-12
        excess = max(excess, r.gap - r.eta)
    return VerifySummary(trials, seed, t1, tight, decomp, member, float(excess), first)
