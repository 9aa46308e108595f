import itertools

import numpy as np
import pytest

from piat.attack import AttackBudget, enumerate_neighborhood
from piat.core import CandidateSet, TokenDoc, TokenQuery, ValidationError
from piat.datagen import SynonymLexicon
from piat.model import ScoringModel, score
from piat.robustness import (
    aggregate_reports,
    boundary_bound,
    boundary_error,
    check_report,
    in_boundary_neighborhood,
    measure_errors,
    natural_error,
    neighbor_rank,
    random_instance,
    report_to_dict,
    robust_error_report,
    verify_inequalities,
)


def indicator_model(vocab_size, weights):
    """E=1 model scoring a doc by the mean of per-token weights (query token 0 has embedding 1)."""
    emb = np.zeros((vocab_size, 1))
    emb[:, 0] = weights
    emb[0, 0] = 1.0
    return ScoringModel(emb, np.array([[1.0]]), 0.0)


def perfect_instance(n=4):
    """Doc j has score proportional to its weight; gt order matches the model."""
    v = n + 1
    weights = np.array([1.0] + [float(n - j) for j in range(n)])
    m = indicator_model(v, weights)
    docs = tuple(TokenDoc(f"d{j}", (j + 1,)) for j in range(n))
    cs = CandidateSet("q", docs, {f"d{j}": j + 1 for j in range(n)})
    return m, TokenQuery("q", (0,)), cs


def scratch_rank(model, q, docs, i, replacement):
    scores = [score(model, q, d) for d in docs]
    scores[i] = score(model, q, replacement)
    ids = [d.doc_id for d in docs]
    return 1 + sum(scores[j] > scores[i] or (scores[j] == scores[i] and ids[j] < ids[i]) for j in range(len(docs)) if j != i)


def scratch_errors(model, q, cs, lex, budget):
    """Independent evaluator written straight from the definitions."""
    docs = list(cs.docs)
    n = len(docs)
    wrong = bdy = bound = 0
    for i, d in enumerate(docs):
        pf = scratch_rank(model, q, docs, i, d)
        py = cs.gt_rank[d.doc_id]
        pn = py - 1 if py > 1 else 2
        hood = list(enumerate_neighborhood(d, lex, budget))
        ranks = [scratch_rank(model, q, docs, i, x) for x in hood]
        wrong += pf != py
        bdy += pf == py and any((pf - pn) * (r - pn) <= 0 for r in ranks)
        bound += any(r != pf for r in ranks)
    return wrong / n, bdy / n, bound / n


class TestNeighborRank:
    def test_values(self):
        assert neighbor_rank(5) == 4
        assert neighbor_rank(2) == 1
        # the top document can only move down
        assert neighbor_rank(1) == 2

    def test_range(self):
        with pytest.raises(ValidationError):
            neighbor_rank(0)
        with pytest.raises(ValidationError):
            neighbor_rank(4, n_docs=3)


class TestNaturalError:
    def test_perfect(self):
        m, q, cs = perfect_instance()
        assert natural_error(m, q, cs) == 0.0

    def test_reversed_pair(self):
        m, q, cs = perfect_instance(2)
        rev = CandidateSet("q", cs.docs, {"d0": 2, "d1": 1})
        assert natural_error(m, q, rev) == 1.0

    def test_one_adjacent_transposition(self):
        m, q, cs = perfect_instance(5)
        gt = {f"d{j}": j + 1 for j in range(5)}
        gt["d2"], gt["d3"] = 4, 3
        assert natural_error(m, q, CandidateSet("q", cs.docs, gt)) == 2 / 5


class TestBoundary:
    def test_empty_lexicon_perfect_model(self):
        m, q, cs = perfect_instance()
        lex = SynonymLexicon.empty()
        b = AttackBudget(1.0, 1)
        assert boundary_bound(m, q, cs, lex, b) == 0.0
        assert boundary_error(m, q, cs, lex, b) == 0.0
        r = robust_error_report(m, q, cs, lex, b)
        assert (r.r_nat, r.r_bdy, r.r_rob) == (0.0, 0.0, 0.0)

    def test_empty_lexicon_membership_iff_on_boundary(self):
        m, q, cs = perfect_instance(3)
        # model ranks d1 second, gt says third: pi_f == pi_n exactly
        gt = CandidateSet("q", cs.docs, {"d0": 1, "d1": 3, "d2": 2})
        inside, witness = in_boundary_neighborhood(m, q, gt, "d1", SynonymLexicon.empty(), AttackBudget())
        assert inside and witness == cs.docs[1]
        inside, _ = in_boundary_neighborhood(m, q, gt, "d2", SynonymLexicon.empty(), AttackBudget())
        assert not inside

    def test_constructed_lift_with_witness(self):
        # token 4 is a strong synonym of the weak token 3
        weights = np.array([1.0, 3.0, 2.0, 1.0, 2.5])
        m = indicator_model(5, weights)
        docs = (TokenDoc("a", (1,)), TokenDoc("b", (2,)), TokenDoc("c", (3,)))
        cs = CandidateSet("q", docs, {"a": 1, "b": 2, "c": 3})
        lex = SynonymLexicon(((3, 4),))
        inside, witness = in_boundary_neighborhood(m, TokenQuery("q", (0,)), cs, "c", lex, AttackBudget(1.0, 1))
        assert inside and witness.tokens == (4,)

    def test_all_wrong_gives_zero_boundary(self):
        m, q, cs = perfect_instance(2)
        rev = CandidateSet("q", cs.docs, {"d0": 2, "d1": 1})
        assert boundary_error(m, q, rev, SynonymLexicon(((1, 2),)), AttackBudget(1.0, 1)) == 0.0

    def test_zero_model(self):
        rng = np.random.default_rng(0)
        docs = tuple(TokenDoc(f"d{j}", tuple(rng.integers(0, 6, size=3))) for j in range(4))
        cs = CandidateSet("q", docs, {f"d{j}": j + 1 for j in range(4)})
        lex = SynonymLexicon(((0, 1), (2, 3)))
        r = robust_error_report(ScoringModel.zeros(6, 2), TokenQuery("q", (0,)), cs, lex, AttackBudget(1.0, 2))
        assert r.bound_bdy == 0.0 and r.r_bdy == 0.0

    @pytest.mark.parametrize("seed", range(30))
    def test_scratch_oracle(self, seed):
        inst = random_instance(np.random.default_rng([7, seed]))
        r = robust_error_report(inst.model, inst.query, inst.candidates, inst.lexicon, inst.budget)
        assert (r.r_nat, r.r_bdy, r.bound_bdy) == scratch_errors(
            inst.model, inst.query, inst.candidates, inst.lexicon, inst.budget
        )

    def test_lexicon_superset_never_lowers_bound(self):
        for seed in range(40):
            inst = random_instance(np.random.default_rng([11, seed]))
            groups = inst.lexicon.groups
            used = {t for g in groups for t in g}
            free = [t for t in range(inst.model.dims[0]) if t not in used]
            bigger = SynonymLexicon(groups + ((tuple(free[:2]),) if len(free) >= 2 else ()))
            small = boundary_bound(inst.model, inst.query, inst.candidates, inst.lexicon, inst.budget)
            large = boundary_bound(inst.model, inst.query, inst.candidates, bigger, inst.budget)
            assert large >= small


class TestReport:
    def test_decomposition_and_ledger(self):
        for seed in range(50):
            inst = random_instance(np.random.default_rng([3, seed]))
            r = robust_error_report(inst.model, inst.query, inst.candidates, inst.lexicon, inst.budget)
            assert r.r_rob == r.r_nat + r.r_bdy
            assert r.bound_holds
            assert r.gap == r.bound_bdy - r.r_bdy and r.eta == r.r_nat
            assert len(r.per_doc) == len(inst.candidates)
            check_report(r)

    def test_tightness_counterexample(self):
        """Perfect model whose middle document can only be demoted: gap exceeds eta."""
        weights = np.array([1.0, 3.0, 2.0, 1.0, 0.5])
        m = indicator_model(5, weights)
        docs = (TokenDoc("a", (1,)), TokenDoc("b", (2,)), TokenDoc("c", (3,)))
        cs = CandidateSet("q", docs, {"a": 1, "b": 2, "c": 3})
        # token 2 has a weak synonym 4 that drops b below c
        lex = SynonymLexicon(((2, 4),))
        r = measure_errors(m, TokenQuery("q", (0,)), cs, lex, AttackBudget(1.0, 1))
        assert r.r_nat == 0.0 and r.r_bdy == 0.0
        assert r.bound_bdy == pytest.approx(1 / 3)
        assert not r.tightness_holds
        # measured against boundary membership the gap is within eta
        assert r.membership_gap <= r.eta

    def test_aggregate(self):
        reps = []
        for seed in range(5):
            inst = random_instance(np.random.default_rng([5, seed]))
            reps.append(robust_error_report(inst.model, inst.query, inst.candidates, inst.lexicon, inst.budget))
        agg = aggregate_reports(reps)
        assert agg.r_nat == pytest.approx(np.mean([r.r_nat for r in reps]))
        assert agg.r_rob == agg.r_nat + agg.r_bdy
        assert agg.n_docs == sum(r.n_docs for r in reps)
        with pytest.raises(ValidationError):
            aggregate_reports([])

    def test_to_dict(self):
        m, q, cs = perfect_instance()
        d = report_to_dict(robust_error_report(m, q, cs, SynonymLexicon.empty(), AttackBudget()))
        assert d["bound_holds"] and len(d["per_doc"]) == 4


class TestVerify:
    def test_deterministic_and_counts(self):
        a = verify_inequalities(60, seed=4)
        assert a == verify_inequalities(60, seed=4)
        assert a.bound_violations == 0 and a.decomposition_violations == 0
        assert a.membership_tightness_violations == 0

    def test_random_instance_caps(self):
        for seed in range(30):
            inst = random_instance(np.random.default_rng(seed), max_docs=3, max_len=2)
            assert len(inst.candidates) <= 3 and all(len(d) <= 2 for d in inst.candidates.docs)
