"""Training loops for standard training (ST), data augmentation (DA), vanilla
adversarial training (AT) and perturbation-invariant adversarial training (PIAT).

All methods use plain gradient descent with a fixed step and average
per-query gradients over each batch in a fixed order.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .attack import AttackBudget, attack_candidate_set
from .core import CandidateSet, TokenDoc, TokenQuery, ValidationError
from .datagen import Example, SynonymLexicon
from .losses import LossOutput, TradeoffConfig, adversarial_loss, combined_loss, natural_loss
from .model import Gradient, ScoringModel, backprop, score_batch


class Method(str, Enum):
    ST = "ST"
    DA = "DA"
    AT = "AT"
    PIAT = "PIAT"


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    method: Method = Method.PIAT
    tradeoff: TradeoffConfig = field(default_factory=TradeoffConfig)
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 0.05
    n_hard_negatives: int = 4
    n_random_negatives: int = 4
    adv_fraction: float = 0.1
    n_attack_per_query: int = 10
    # None: adversarial examples are generated once
    adv_refresh_epochs: int | None = None
    adv_start_epoch: int = 0
    embedding_dim: int = 16
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if isinstance(self.tradeoff, dict):
            object.__setattr__(self, "tradeoff", TradeoffConfig(**self.tradeoff))

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ValidationError(f"TrainConfig.{name} must be >= 1")
        for name in ("n_hard_negatives", "n_random_negatives", "n_attack_per_query", "adv_start_epoch"):
            if getattr(self, name) < 0:
                raise ValidationError(f"TrainConfig.{name} must be >= 0")
        if self.n_hard_negatives + self.n_random_negatives < 1:
            raise ValidationError("TrainConfig needs at least one negative per query")
        if not self.learning_rate > 0:
            raise ValidationError("TrainConfig.learning_rate must be > 0")
        if not 0.0 <= self.adv_fraction <= 1.0:
            raise ValidationError("TrainConfig.adv_fraction must lie in [0, 1]")
        if self.adv_refresh_epochs is not None and self.adv_refresh_epochs < 1:
            raise ValidationError("TrainConfig.adv_refresh_epochs must be >= 1 or null")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        if "tradeoff" in d:
            t = dict(d["tradeoff"])
            tknown = {f.name for f in fields(TradeoffConfig)}
            if set(t) - tknown:
                raise ValidationError(f"unknown tradeoff config keys: {sorted(set(t) - tknown)}")
            d["tradeoff"] = TradeoffConfig(**t)
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        d["tradeoff"]["adv_variant"] = self.tradeoff.adv_variant.value
        d["tradeoff"]["phi"] = self.tradeoff.phi.value
        return d


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    natural_loss: float
    adversarial_loss: float
    combined_loss: float
    wall_time: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    checkpoint: str | None = None

    def to_dict(self, include_time: bool = False) -> dict:
        recs = []
        for r in self.records:
            d = asdict(r)
            if not include_time:
                d.pop("wall_time")
            recs.append(d)
        return {"epochs": recs, "checkpoint": self.checkpoint}


def sample_negatives(
    cs: CandidateSet, n_hard: int, n_random: int, rng: np.random.Generator, scores=None
) -> list[TokenDoc]:
    """Hard negatives (top non-relevant by ``scores``) then uniform random ones.

    Without ``scores`` the hard negatives follow candidate order.
    """
    pool = [i for i, d in enumerate(cs.docs) if cs.gt_rank[d.doc_id] != 1]
    return [cs.docs[i] for i in _negative_indices(pool, n_hard, n_random, rng, scores)]


def _negative_indices(pool: list[int], n_hard: int, n_random: int, rng: np.random.Generator, scores) -> list[int]:
    if n_hard + n_random > len(pool):
        raise ValidationError(f"asked for {n_hard + n_random} negatives but only {len(pool)} candidates exist")
    if scores is not None:
        s = np.asarray(scores)
        ranked = sorted(pool, key=lambda i: (-s[i], i))
    else:
        ranked = list(pool)
    hard = ranked[:n_hard]
    rest = ranked[n_hard:]
    picked = rng.choice(len(rest), size=n_random, replace=False) if n_random else []
    return hard + [rest[int(i)] for i in picked]


def _augment(doc: TokenDoc, lex: SynonymLexicon, n_sub: int, rng: np.random.Generator, tag: str) -> TokenDoc:
    bearing = [m for m, t in enumerate(doc.tokens) if lex.syn_of(t)]
    k = min(n_sub, len(bearing))
    positions = rng.choice(len(bearing), size=k, replace=False) if k else []
    subs = []
    for p in sorted(int(i) for i in positions):
        m = bearing[p]
        syns = lex.syn_of(doc.tokens[m])
        subs.append((m, syns[int(rng.integers(len(syns)))]))
    return TokenDoc(f"{doc.doc_id}#{tag}", doc.replace(subs).tokens)


def augment_candidates(
    cs: CandidateSet, lex: SynonymLexicon, budget: AttackBudget, rng: np.random.Generator, copies: int = 2
) -> list[list[TokenDoc]]:
    """For every candidate, ``copies`` uniformly synonym-substituted variants.

    Each variant substitutes as many words as the attack budget allows.
    """
    out = []
    for d in cs.docs:
        n_sub = budget.limit(len(d))
        out.append([_augment(d, lex, n_sub, rng, f"aug{c + 1}") for c in range(copies)])
    return out


class _AdvPool:
    """Adversarial documents per training query, aligned with the candidate list."""

    def __init__(self, examples: Sequence[Example], cfg: TrainConfig):
        n = len(examples)
        n_adv = int(math.ceil(cfg.adv_fraction * n - 1e-9))
        rng = np.random.default_rng([cfg.seed, 101])
        self.selected = set(int(i) for i in rng.permutation(n)[:n_adv])
        self.docs: dict[int, list[TokenDoc]] = {}
        self.targets: dict[int, list[int]] = {}
        self.generation = 0

    def due(self, epoch: int, cfg: TrainConfig) -> bool:
        if epoch < cfg.adv_start_epoch:
            return False
        if epoch == cfg.adv_start_epoch:
            return True
        return cfg.adv_refresh_epochs is not None and (epoch - cfg.adv_start_epoch) % cfg.adv_refresh_epochs == 0

    def regenerate(self, model, examples, lex, budget, cfg: TrainConfig) -> None:
        self.generation += 1
        for qi in sorted(self.selected):
            ex = examples[qi]
            results, adv = attack_candidate_set(
                model, ex.query, ex.candidates, lex, budget, cfg.n_attack_per_query, [cfg.seed, 202, qi, self.generation]
            )
            self.docs[qi] = adv
            self.targets[qi] = [i for i, (a, d) in enumerate(zip(adv, ex.candidates.docs)) if a.tokens != d.tokens]


def _natural_full(scores: np.ndarray, pos: int, negs: list[int]) -> LossOutput:
    """Natural loss with its gradient scattered over the full candidate list."""
    out = natural_loss(scores[pos], scores[negs])
    g = np.zeros(len(scores))
    g[pos] += out.grad_scores_clean[0]
    np.add.at(g, negs, out.grad_scores_clean[1:])
    return LossOutput(out.value, g)


def _query_step(
    model: ScoringModel,
    qi: int,
    ex: Example,
    cfg: TrainConfig,
    rng_neg: np.random.Generator,
    adv_pool: _AdvPool,
    augmented: dict[int, list[list[TokenDoc]]],
) -> tuple[Gradient, float, float | None, float]:
    """Gradient and (natural, adversarial, combined) loss values for one query."""
    q, cs = ex.query, ex.candidates
    docs = list(cs.docs)
    scores = score_batch(model, q, docs)
    pos = next(i for i, d in enumerate(docs) if cs.gt_rank[d.doc_id] == 1)
    pool = [i for i in range(len(docs)) if i != pos]
    method = cfg.method

    if method is Method.DA:
        variants = augmented[qi]
        all_docs = docs + [v for vs in variants for v in vs]
        all_scores = np.concatenate([scores, score_batch(model, q, all_docs[len(docs):])])
        n_copies = len(variants[0])
        owner = list(range(len(docs))) + [i for i in range(len(docs)) for _ in range(n_copies)]
        positives = [j for j, o in enumerate(owner) if o == pos]
        neg_pool = [j for j, o in enumerate(owner) if o != pos]
        negs = _negative_indices(neg_pool, cfg.n_hard_negatives, cfg.n_random_negatives, rng_neg, all_scores)
        g = np.zeros(len(all_docs))
        value = 0.0
        for p in positives:
            out = _natural_full(all_scores, p, negs)
            g += out.grad_scores_clean / len(positives)
            value += out.value / len(positives)
        grad = backprop(model, q, docs, g[: len(docs)])
        grad.add_scaled(backprop(model, q, all_docs[len(docs):], g[len(docs):]))
        return grad, value, None, value

    negs = _negative_indices(pool, cfg.n_hard_negatives, cfg.n_random_negatives, rng_neg, scores)

    if method is Method.AT and qi in adv_pool.docs:
        targets = adv_pool.targets[qi]
        adv_docs = [adv_pool.docs[qi][i] for i in targets]
        adv_scores = score_batch(model, q, adv_docs)
        ext = np.concatenate([scores, adv_scores])
        out = _natural_full(ext, pos, negs + list(range(len(docs), len(docs) + len(adv_docs))))
        grad = backprop(model, q, docs, out.grad_scores_clean[: len(docs)])
        grad.add_scaled(backprop(model, q, adv_docs, out.grad_scores_clean[len(docs):]))
        return grad, out.value, None, out.value

    nat = _natural_full(scores, pos, negs)
    if method is not Method.PIAT:
        return backprop(model, q, docs, nat.grad_scores_clean), nat.value, None, nat.value

    tradeoff = cfg.tradeoff
    if qi not in adv_pool.docs or tradeoff.lam == 1.0:
        # queries without adversarial examples contribute lam * L_nat
        empty = LossOutput(0.0, np.zeros(0))
        comb = combined_loss(tradeoff, nat, empty)
        return backprop(model, q, docs, comb.grad_scores_clean), nat.value, None, comb.value

    adv_docs = adv_pool.docs[qi]
    adv_scores = score_batch(model, q, adv_docs)
    adv = adversarial_loss(tradeoff, scores, adv_scores)
    comb = combined_loss(tradeoff, nat, adv)
    grad = backprop(model, q, docs, comb.grad_scores_clean)
    grad.add_scaled(backprop(model, q, adv_docs, comb.grad_scores_adv))
    return grad, nat.value, adv.value, comb.value


def train(
    cfg: TrainConfig,
    examples: Sequence[Example],
    lex: SynonymLexicon,
    budget: AttackBudget | None = None,
    vocab_size: int | None = None,
    init: ScoringModel | None = None,
) -> tuple[ScoringModel, TrainLog]:
    """Train a ranker on ``examples`` with the method in ``cfg``.

    Deterministic given ``cfg.seed``. Raises ``TrainingDiverged`` on a
    non-finite loss.
    """
    cfg.validate()
    if not examples:
        raise ValidationError("no training examples")
    budget = budget or AttackBudget()
    if vocab_size is None:
        vocab_size = 1 + max(
            max(max(ex.query.tokens), max(t for d in ex.candidates.docs for t in d.tokens)) for ex in examples
        )
    model = init.copy() if init is not None else ScoringModel.init(vocab_size, cfg.embedding_dim, cfg.seed)
    rng_order = np.random.default_rng([cfg.seed, 1])
    rng_neg = np.random.default_rng([cfg.seed, 2])

    augmented: dict[int, list[list[TokenDoc]]] = {}
    if cfg.method is Method.DA:
        rng_aug = np.random.default_rng([cfg.seed, 3])
        augmented = {qi: augment_candidates(ex.candidates, lex, budget, rng_aug) for qi, ex in enumerate(examples)}

    adv_pool = _AdvPool(examples, cfg)
    uses_adv = cfg.method in (Method.AT, Method.PIAT)
    log = TrainLog()
    n = len(examples)

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        if uses_adv and adv_pool.selected and adv_pool.due(epoch, cfg):
            adv_pool.regenerate(model, examples, lex, budget, cfg)
        order = rng_order.permutation(n)
        nat_sum = adv_sum = comb_sum = 0.0
        n_adv = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            batch = order[start : start + cfg.batch_size]
            total = Gradient.zeros_like(model)
            for qi in batch:
                try:
                    grad, v_nat, v_adv, v_comb = _query_step(
                        model, int(qi), examples[qi], cfg, rng_neg, adv_pool, augmented
                    )
                except FloatingPointError as exc:
                    raise TrainingDiverged(epoch, b) from exc
                if not (math.isfinite(v_nat) and math.isfinite(v_comb)):
                    raise TrainingDiverged(epoch, b)
                total.add_scaled(grad, 1.0 / len(batch))
                nat_sum += v_nat
                comb_sum += v_comb
                if v_adv is not None:
                    adv_sum += v_adv
                    n_adv += 1
            model.apply(total, cfg.learning_rate)
            if not model.is_finite():
                raise TrainingDiverged(epoch, b)
        log.records.append(
            EpochRecord(epoch, nat_sum / n, adv_sum / n_adv if n_adv else 0.0, comb_sum / n, time.perf_counter() - t0)
        )
    return model, log


def with_lambda(cfg: TrainConfig, lam: float) -> TrainConfig:
    return replace(cfg, tradeoff=replace(cfg.tradeoff, lam=lam))
