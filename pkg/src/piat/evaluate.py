"""Attack-then-measure harness used by the CLI and the experiments.

For each evaluation query one target document is drawn from each of nine
rank bands of the model's clean ranking, each target is attacked, and the
attacked list (all targets replaced, original query) is re-ranked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attack import AttackBudget, AttackResult, attack_docs, sample_stratified_targets
from .core import RankedList, TokenDoc, rank_by_scores, ranks_from_scores
from .datagen import Example, SynonymLexicon
from .metrics import MetricsReport, attack_success_rate, location_square_deviation, mrr_at_k
from .model import ScoringModel, score_batch


@dataclass(frozen=True)
class QueryAttack:
    query_id: str
    results: tuple[AttackResult, ...]
    adv_docs: tuple[TokenDoc, ...]


@dataclass(frozen=True)
class QueryEval:
    query_id: str
    clean: RankedList
    attacked: RankedList
    asr_pairs: tuple[tuple[int, int], ...]


def rank_candidates(model: ScoringModel, ex: Example, docs: Sequence[TokenDoc] | None = None) -> RankedList:
    docs = list(ex.candidates.docs) if docs is None else list(docs)
    scores = score_batch(model, ex.query, docs)
    return rank_by_scores({d.doc_id: float(s) for d, s in zip(docs, scores)}, ex.query.query_id)


def attack_queries(
    model: ScoringModel, examples: Sequence[Example], lex: SynonymLexicon, budget: AttackBudget, seed: int = 0
) -> list[QueryAttack]:
    out = []
    for qi, ex in enumerate(examples):
        clean = rank_candidates(model, ex)
        targets = sample_stratified_targets(ex.candidates, dict(clean.rank_of), [seed, 303, qi])
        results, adv = attack_docs(model, ex.query, ex.candidates, targets, lex, budget)
        out.append(QueryAttack(ex.query.query_id, tuple(results), tuple(adv)))
    return out


def evaluate_query(model: ScoringModel, ex: Example, attack: QueryAttack) -> QueryEval:
    cs = ex.candidates
    ids = cs.doc_ids
    scores = score_batch(model, ex.query, cs.docs)
    clean = rank_by_scores(dict(zip(ids, scores.tolist())), cs.query_id)
    attacked = rank_candidates(model, ex, attack.adv_docs)
    pairs = []
    for res in attack.results:
        i = cs.index_of(res.original.doc_id)
        # ASR: each adversarial document replaces its original alone
        single = scores.copy()
        single[i] = score_batch(model, ex.query, [res.adversarial])[0]
        pairs.append((clean.rank_of[ids[i]], int(ranks_from_scores(single, ids)[i])))
    return QueryEval(cs.query_id, clean, attacked, tuple(pairs))


def evaluate(
    model: ScoringModel,
    examples: Sequence[Example],
    attacks: Sequence[QueryAttack],
    ks: Sequence[int] = (10,),
) -> tuple[MetricsReport, list[QueryEval]]:
    """Corpus metrics: means over queries, folded in query order."""
    by_id = {a.query_id: a for a in attacks}
    evals = [evaluate_query(model, ex, by_id[ex.query.query_id]) for ex in examples]
    n = len(evals)
    clean_mrr = {}
    robust_mrr = {}
    for k in ks:
        clean_mrr[k] = float(np.mean([mrr_at_k(e.clean, ex.candidates.gt_top().doc_id, k) for e, ex in zip(evals, examples)]))
        robust_mrr[k] = float(
            np.mean([mrr_at_k(e.attacked, ex.candidates.gt_top().doc_id, k) for e, ex in zip(evals, examples)])
        )
    pairs = [p for e in evals for p in e.asr_pairs]
    asr = attack_success_rate(pairs) if pairs else 0.0
    lsd = float(np.mean([location_square_deviation(e.clean, e.attacked) for e in evals]))
    report = MetricsReport(clean_mrr, robust_mrr, asr, lsd, n, len(pairs))
    return report, evals
