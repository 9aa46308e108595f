import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from piat.attack import (
    AttackBudget,
    NeighborhoodTooLarge,
    attack_candidate_set,
    brute_force_attack,
    enumerate_neighborhood,
    greedy_attack,
    sample_stratified_targets,
    sample_uniform_targets,
)
from piat.core import CandidateSet, TokenDoc, TokenQuery, ValidationError, hamming_fraction
from piat.datagen import SynonymLexicon
from piat.model import ScoringModel, score

from conftest import pair_lexicon, random_candidates, random_docs, random_model, random_query


class TestBudget:
    def test_limit(self):
        assert AttackBudget(0.25, 20).limit(12) == 3
        assert AttackBudget(0.29, 50).limit(100) == 29
        assert AttackBudget(0.29, 20).limit(100) == 20
        assert AttackBudget(1.0, 2).limit(12) == 2

    def test_invalid(self):
        with pytest.raises(ValidationError):
            AttackBudget(0.0, 3)
        with pytest.raises(ValidationError):
            AttackBudget(0.5, 0)

    def test_admits(self):
        b = AttackBudget(0.5, 1)
        d = TokenDoc("d", (0, 2, 4, 6))
        assert b.admits(d, d.replace([(0, 1)]))
        assert not b.admits(d, d.replace([(0, 1), (1, 3)]))


class TestEnumerate:
    def test_starts_with_original_and_is_unique(self):
        lex = pair_lexicon(8)
        d = TokenDoc("d", (0, 2, 5, 7))
        ns = list(enumerate_neighborhood(d, lex, AttackBudget(1.0, 4)))
        assert ns[0] == d
        assert len(ns) == len(set(n.tokens for n in ns)) == 2**4

    def test_cap(self):
        lex = pair_lexicon(8)
        with pytest.raises(NeighborhoodTooLarge):
            enumerate_neighborhood(TokenDoc("d", (0, 2, 4, 6)), lex, AttackBudget(1.0, 4), cap=10)

    @settings(max_examples=50)
    @given(st.lists(st.integers(0, 9), min_size=1, max_size=6), st.floats(0.05, 1.0), st.integers(1, 6))
    def test_every_neighbor_in_budget_and_synonymous(self, tokens, eps, k):
        lex = SynonymLexicon(((0, 1, 2), (3, 4)))
        d = TokenDoc("d", tokens)
        b = AttackBudget(eps, k)
        for n in enumerate_neighborhood(d, lex, b):
            assert b.admits(d, n)
            assert all(a == c or c in lex.syn_of(a) for a, c in zip(d.tokens, n.tokens))


def exhaustive_best(model, q, d, lex, budget):
    """Independent oracle: max score over a recursive walk of all substitution sets."""
    limit = budget.limit(len(d))
    best = -np.inf

    def walk(pos, tokens, used):
        nonlocal best
        if pos == len(tokens):
            best = max(best, score(model, q, TokenDoc("x", tokens)))
            return
        walk(pos + 1, tokens, used)
        if used < limit:
            for s in lex.syn_of(tokens[pos]):
                walk(pos + 1, tokens[:pos] + (s,) + tokens[pos + 1 :], used + 1)

    walk(0, d.tokens, 0)
    return best


class TestAttacks:
    @pytest.mark.parametrize("seed", range(10))
    def test_brute_force_is_exact(self, seed):
        rng = np.random.default_rng(seed)
        m = random_model(rng, 8, 2)
        q = random_query(rng, 8)
        d = random_docs(rng, 1, 5, 8)[0]
        lex = pair_lexicon(8)
        b = AttackBudget(0.6, 3)
        res = brute_force_attack(m, q, d, lex, b)
        assert score(m, q, res.adversarial) == pytest.approx(exhaustive_best(m, q, d, lex, b), abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_greedy_dominated(self, seed):
        rng = np.random.default_rng(seed)
        m = random_model(rng, 10, 3)
        q = random_query(rng, 10)
        d = random_docs(rng, 1, 6, 10)[0]
        lex = SynonymLexicon(((0, 1, 2), (3, 4), (5, 6, 7)))
        b = AttackBudget(0.5, 3)
        g = greedy_attack(m, q, d, lex, b)
        bf = brute_force_attack(m, q, d, lex, b)
        assert 0.0 <= g.score_gain <= bf.score_gain
        assert b.admits(d, g.adversarial) and b.admits(d, bf.adversarial)
        assert g.score_gain == score(m, q, g.adversarial) - score(m, q, d)

    def test_no_synonyms_returns_original(self, rng):
        m = random_model(rng, 5, 2)
        d = TokenDoc("d", (1, 2))
        res = greedy_attack(m, random_query(rng, 5), d, SynonymLexicon.empty(), AttackBudget())
        assert res.adversarial == d and res.score_gain == 0.0 and res.n_substitutions == 0

    def test_zero_model_no_strict_gain(self):
        m = ScoringModel.zeros(6, 2)
        d = TokenDoc("d", (0, 2, 4))
        res = greedy_attack(m, TokenQuery("q", (1,)), d, pair_lexicon(6), AttackBudget(1.0, 3))
        assert res.adversarial == d

    def test_substitutions_recorded(self, rng):
        m = random_model(rng, 8, 3)
        d = TokenDoc("d", (0, 2, 4, 6))
        res = greedy_attack(m, random_query(rng, 8), d, pair_lexicon(8), AttackBudget(1.0, 4))
        assert res.adversarial == d.replace([(p, new) for p, _, new in res.substituted_positions])
        assert hamming_fraction(d, res.adversarial) == res.n_substitutions / 4


class TestTargets:
    def test_uniform_excludes_top(self, rng):
        cs = random_candidates(rng, 8, 3, 5)
        top = cs.index_of(cs.gt_top().doc_id)
        for seed in range(20):
            t = sample_uniform_targets(cs, 5, seed)
            assert len(t) == len(set(t)) == 5 and top not in t
        assert len(sample_uniform_targets(cs, 8, 0)) == 7
        with pytest.raises(ValidationError):
            sample_uniform_targets(cs, 9, 0)

    def test_uniform_deterministic(self, rng):
        cs = random_candidates(rng, 10, 3, 5)
        assert sample_uniform_targets(cs, 4, [1, 2]) == sample_uniform_targets(cs, 4, [1, 2])

    def test_stratified_bands_for_100(self):
        docs = tuple(TokenDoc(f"d{i:03d}", (0,)) for i in range(100))
        cs = CandidateSet("q", docs, {d.doc_id: i + 1 for i, d in enumerate(docs)})
        pred = {d.doc_id: i + 1 for i, d in enumerate(docs)}
        t = sample_stratified_targets(cs, pred, 0)
        assert len(t) == 9
        assert [(pred[docs[i].doc_id] - 1) // 10 for i in t] == list(range(1, 10))

    def test_stratified_scaled_to_20(self, rng):
        cs = random_candidates(rng, 20, 3, 5)
        pred = {d: r for d, r in cs.gt_rank.items()}
        t = sample_stratified_targets(cs, pred, 3)
        assert len(t) == 9
        assert all(pred[cs.docs[i].doc_id] >= 3 for i in t)

    def test_attack_candidate_set_alignment(self, rng):
        cs = random_candidates(rng, 6, 4, 8)
        m = random_model(rng, 8, 3)
        results, adv = attack_candidate_set(m, random_query(rng, 8), cs, pair_lexicon(8), AttackBudget(0.5, 2), 3, 0)
        assert len(adv) == 6 and len(results) == 3
        attacked = {r.original.doc_id for r in results}
        for orig, a in zip(cs.docs, adv):
            assert a.doc_id == orig.doc_id
            if orig.doc_id not in attacked:
                assert a == orig
