"""Word-substitution ranking attack.

The attacker replaces up to ``min(floor(eps * M), k_max)`` words of a target
document with synonyms, aiming to maximize ``f(q, d') - f(q, d)``. Greedy
search is the working attack; exhaustive enumeration certifies it on small
neighborhoods.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .core import CandidateSet, TokenDoc, TokenQuery, ValidationError, hamming_fraction
from .datagen import SynonymLexicon, neighborhood_size
from .model import ScoringModel, score, score_batch

DEFAULT_ENUM_CAP = 10**6


@dataclass(frozen=True)
class AttackBudget:
    epsilon: float = 0.25
    k_max: int = 20

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValidationError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.k_max < 1:
            raise ValidationError(f"k_max must be >= 1, got {self.k_max}")

    def limit(self, doc_len: int) -> int:
        """Effective substitution cap for a document of ``doc_len`` words."""
        # the small slack keeps e.g. 0.29 * 100 from flooring to 28
        return max(0, min(math.floor(self.epsilon * doc_len + 1e-9), self.k_max))

    def admits(self, original: TokenDoc, perturbed: TokenDoc) -> bool:
        n_sub = sum(a != b for a, b in zip(original.tokens, perturbed.tokens))
        return hamming_fraction(original, perturbed) <= self.epsilon + 1e-12 and n_sub <= self.k_max


@dataclass(frozen=True)
class AttackResult:
    original: TokenDoc
    adversarial: TokenDoc
    score_gain: float
    substituted_positions: tuple[tuple[int, int, int], ...]

    @property
    def n_substitutions(self) -> int:
        return len(self.substituted_positions)


class NeighborhoodTooLarge(RuntimeError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"neighborhood has {size} documents, above the enumeration cap {cap}")
        self.size = size
        self.cap = cap


def _substitutions(original: TokenDoc, perturbed: TokenDoc) -> tuple[tuple[int, int, int], ...]:
    return tuple(
        (m, a, b) for m, (a, b) in enumerate(zip(original.tokens, perturbed.tokens)) if a != b
    )


def enumerate_neighborhood(
    d: TokenDoc, lex: SynonymLexicon, budget: AttackBudget, cap: int = DEFAULT_ENUM_CAP
) -> Iterator[TokenDoc]:
    """Yield every document reachable within the budget, starting with ``d``.

    Order: by number of substitutions, then position subsets in lexicographic
    order, then synonyms in ascending token id.
    """
    size = neighborhood_size(d, lex, budget)
    if size > cap:
        raise NeighborhoodTooLarge(size, cap)
    return _walk(d, lex, budget.limit(len(d)))


def _walk(d: TokenDoc, lex: SynonymLexicon, limit: int) -> Iterator[TokenDoc]:
    bearing = [m for m, t in enumerate(d.tokens) if lex.syn_of(t)]
    for k in range(0, min(limit, len(bearing)) + 1):
        for positions in itertools.combinations(bearing, k):
            choices = [lex.syn_of(d.tokens[m]) for m in positions]
            for picked in itertools.product(*choices):
                yield d.replace(zip(positions, picked))


def brute_force_attack(
    model: ScoringModel,
    q: TokenQuery,
    d: TokenDoc,
    lex: SynonymLexicon,
    budget: AttackBudget,
    cap: int = DEFAULT_ENUM_CAP,
) -> AttackResult:
    """Exact maximizer of the score gain over the whole neighborhood.

    Ties go to fewer substitutions, then to the lexicographically smallest
    token sequence.
    """
    neighbors = list(enumerate_neighborhood(d, lex, budget, cap))
    scores = score_batch(model, q, neighbors)
    base = score(model, q, d)
    best = max(
        range(len(neighbors)),
        key=lambda i: (
            scores[i],
            -sum(a != b for a, b in zip(d.tokens, neighbors[i].tokens)),
            tuple(-t for t in neighbors[i].tokens),
        ),
    )
    adv = neighbors[best]
    return AttackResult(d, adv, score(model, q, adv) - base, _substitutions(d, adv))


def greedy_attack(
    model: ScoringModel, q: TokenQuery, d: TokenDoc, lex: SynonymLexicon, budget: AttackBudget
) -> AttackResult:
    """Two-phase greedy word substitution.

    Phase 1 ranks positions by their best single-substitution gain. Phase 2
    visits positions in that order and commits the best synonym whenever it
    strictly raises the current score, up to the substitution limit.
    """
    limit = budget.limit(len(d))
    base = score(model, q, d)
    bearing = [m for m, t in enumerate(d.tokens) if lex.syn_of(t)]
    if limit == 0 or not bearing:
        return AttackResult(d, d, 0.0, ())

    singles = []
    owners = []
    for m in bearing:
        for s in lex.syn_of(d.tokens[m]):
            singles.append(d.replace([(m, s)]))
            owners.append(m)
    gains = score_batch(model, q, singles) - base
    importance = {m: -math.inf for m in bearing}
    for m, g in zip(owners, gains):
        importance[m] = max(importance[m], g)
    order = sorted(bearing, key=lambda m: (-importance[m], m))

    current, current_score, commits = d, base, 0
    for m in order:
        if commits >= limit:
            break
        syns = lex.syn_of(d.tokens[m])
        trials = [current.replace([(m, s)]) for s in syns]
        trial_scores = score_batch(model, q, trials)
        k = int(np.argmax(trial_scores))
        if trial_scores[k] > current_score:
            current, current_score = trials[k], float(trial_scores[k])
            commits += 1
    # recompute rather than accumulate so the gain matches a fresh evaluation
    gain = score(model, q, current) - base
    return AttackResult(d, current, float(gain), _substitutions(d, current))


def attack_docs(
    model: ScoringModel,
    q: TokenQuery,
    cs: CandidateSet,
    targets: Sequence[int],
    lex: SynonymLexicon,
    budget: AttackBudget,
) -> tuple[list[AttackResult], list[TokenDoc]]:
    """Greedy-attack the documents at ``targets``; return results and the aligned D_adv."""
    results = []
    adv_docs = list(cs.docs)
    for i in sorted(targets):
        res = greedy_attack(model, q, cs.docs[i], lex, budget)
        results.append(res)
        adv_docs[i] = res.adversarial
    return results, adv_docs


def sample_uniform_targets(cs: CandidateSet, n_attack: int, seed) -> list[int]:
    """Indices of ``n_attack`` documents drawn uniformly, never the ground-truth top.

    ``n_attack`` is capped at the number of non-top documents.
    """
    if n_attack < 0 or n_attack > len(cs):
        raise ValidationError(f"n_attack={n_attack} must lie in [0, N_d={len(cs)}]")
    pool = [i for i, d in enumerate(cs.docs) if cs.gt_rank[d.doc_id] != 1]
    n = min(n_attack, len(pool))
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(pool), size=n, replace=False) if n else []
    return sorted(pool[int(i)] for i in picked)


def sample_stratified_targets(
    cs: CandidateSet, predicted_rank: dict[str, int], seed, n_ranges: int = 9
) -> list[int]:
    """One document per rank band, the bands being tenths 2..10 of the list.

    For 100 candidates the bands are [11,20], ..., [91,100]. The ground-truth
    top document is never a target; empty bands are skipped.
    """
    n = len(cs)
    rng = np.random.default_rng(seed)
    by_rank = {predicted_rank[d.doc_id]: i for i, d in enumerate(cs.docs)}
    targets = []
    for band in range(1, n_ranges + 1):
        lo = math.floor(band * n / (n_ranges + 1)) + 1
        hi = math.floor((band + 1) * n / (n_ranges + 1))
        members = [by_rank[r] for r in range(lo, hi + 1) if cs.gt_rank[cs.docs[by_rank[r]].doc_id] != 1]
        if members:
            targets.append(members[int(rng.integers(len(members)))])
    return sorted(targets)


def attack_candidate_set(
    model: ScoringModel,
    q: TokenQuery,
    cs: CandidateSet,
    lex: SynonymLexicon,
    budget: AttackBudget,
    n_attack: int,
    selection_seed,
) -> tuple[list[AttackResult], list[TokenDoc]]:
    """Attack ``n_attack`` uniformly chosen non-top documents of ``cs``.

    The returned D_adv is index-aligned with ``cs.docs``; unattacked slots hold
    the original document.
    """
    targets = sample_uniform_targets(cs, n_attack, selection_seed)
    return attack_docs(model, q, cs, targets, lex, budget)
