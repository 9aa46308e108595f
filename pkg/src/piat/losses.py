"""Natural and perturbation-invariant ranking losses.

Every loss returns its value together with the gradient with respect to the
score lists it consumed, so the model's ``backprop`` can finish the chain.
Losses here are per query; averaging over queries is the trainer's job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import ValidationError, argsort_desc

LOG_FLOOR = 1e-300


class Phi(str, Enum):
    """Increasing, strictly positive transform applied to scores before normalization."""

    EXPONENTIAL = "exponential"
    SIGMOID = "sigmoid"
    LINEAR = "linear"


class AdvVariant(str, Enum):
    KL = "KL"
    LISTNET = "ListNet"
    LISTMLE = "ListMLE"


@dataclass(frozen=True)
class TradeoffConfig:
    lam: float = 0.5
    adv_variant: AdvVariant = AdvVariant.LISTNET
    phi: Phi = Phi.EXPONENTIAL
    detach_clean_target: bool = False
    # ListNet regularizer restricted to the first Plackett-Luce stage
    listnet_top_one: bool = False
    # ListMLE regularizer measured relative to the clean list's own likelihood
    listmle_centered: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"lambda must lie in [0, 1], got {self.lam}")
        object.__setattr__(self, "adv_variant", AdvVariant(self.adv_variant))
        object.__setattr__(self, "phi", Phi(self.phi))


@dataclass(frozen=True)
class LossOutput:
    value: float
    grad_scores_clean: np.ndarray
    grad_scores_adv: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise FloatingPointError(f"non-finite loss value {self.value}")
        object.__setattr__(self, "grad_scores_clean", np.asarray(self.grad_scores_clean, dtype=np.float64))
        object.__setattr__(self, "grad_scores_adv", np.asarray(self.grad_scores_adv, dtype=np.float64))


def logsumexp(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x)
    return float(m + np.log(np.sum(np.exp(x - m))))


def log_softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x - logsumexp(x)


def score_distribution(scores) -> np.ndarray:
    """Softmax over a list of scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0 or not np.all(np.isfinite(scores)):
        raise ValidationError("score_distribution needs a non-empty list of finite scores")
    return np.exp(log_softmax(scores))


def natural_loss(pos_score: float, neg_scores) -> LossOutput:
    """Softmax cross-entropy of the relevant document against its negatives.

    ``grad_scores_clean`` is laid out as ``[d/d pos, d/d neg_1, ...]``.
    """
    neg = np.asarray(neg_scores, dtype=np.float64)
    if neg.size == 0:
        raise ValidationError("natural_loss needs at least one negative")
    logits = np.concatenate([[pos_score], neg])
    lp = log_softmax(logits)
    grad = np.exp(lp)
    grad[0] -= 1.0
    return LossOutput(float(-lp[0]), grad)


def _check_pair(clean, adv) -> tuple[np.ndarray, np.ndarray]:
    clean = np.asarray(clean, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    if clean.shape != adv.shape:
        raise ValidationError(f"clean and adversarial score lists differ in length: {clean.shape} vs {adv.shape}")
    if clean.ndim != 1 or clean.size < 2:
        raise ValidationError("adversarial losses need aligned lists of at least 2 scores")
    return clean, adv


def kl_adv_loss(clean, adv, detach_clean_target: bool = False) -> LossOutput:
    """KL(softmax(clean) || softmax(adv)) with gradients for both lists."""
    clean, adv = _check_pair(clean, adv)
    lp = log_softmax(clean)
    lq = log_softmax(adv)
    p = np.exp(lp)
    q = np.exp(lq)
    diff = lp - lq
    value = float(np.sum(p * diff))
    grad_adv = q - p
    grad_clean = np.zeros_like(clean) if detach_clean_target else p * (diff - value)
    # KL is non-negative; only roundoff can push it below zero
    return LossOutput(max(value, 0.0), grad_clean, grad_adv)


def _phi_terms(s: np.ndarray, phi: Phi) -> tuple[np.ndarray, np.ndarray]:
    """``log phi(s)`` and the log-derivative ``phi'(s) / phi(s)``."""
    if phi is Phi.EXPONENTIAL:
        return s.copy(), np.ones_like(s)
    if phi is Phi.SIGMOID:
        # log sigmoid(s) = -log(1 + e^-s); d/ds = 1 - sigmoid(s)
        return -np.logaddexp(0.0, -s), 1.0 - 0.5 * (1.0 + np.tanh(0.5 * s))
    if phi is Phi.LINEAR:
        if np.any(s <= 0):
            raise ValidationError("linear transform requires strictly positive scores")
        return np.log(s), 1.0 / s
    raise ValidationError(f"unknown transform {phi!r}")


def _suffix_log_norms(logphi: np.ndarray) -> np.ndarray:
    """``log sum_{k >= j} phi_k`` for every stage j (inputs already in stage order)."""
    return np.logaddexp.accumulate(logphi[::-1])[::-1]


def pl_permutation_logprob(scores, pi, phi: Phi | str = Phi.EXPONENTIAL) -> tuple[float, np.ndarray]:
    """Plackett-Luce log-probability of ``pi`` and its gradient w.r.t. ``scores``.

    ``pi[j]`` is the index of the item placed at position ``j``.
    """
    phi = Phi(phi)
    s = np.asarray(scores, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.int64)
    n = s.size
    if pi.shape != (n,) or sorted(pi.tolist()) != list(range(n)):
        raise ValidationError(f"pi is not a permutation of 0..{n - 1}")
    logphi, dlog = _phi_terms(s[pi], phi)
    log_norm = _suffix_log_norms(logphi)
    value = float(np.sum(logphi - log_norm))
    # stage j contributes -phi_k / S_j to every k placed at or after j
    expo = logphi[None, :] - log_norm[:, None]
    expo[np.tril_indices(n, -1)] = -np.inf
    share = np.exp(expo)
    grad_sorted = dlog * (1.0 - share.sum(axis=0))
    grad = np.empty(n)
    grad[pi] = grad_sorted
    return value, grad


def _stage_kl(a: np.ndarray, c: np.ndarray, phi: Phi) -> tuple[float, np.ndarray, np.ndarray]:
    """KL(P_a || P_c) for the normalized transforms of one suffix, with gradients."""
    la, ra = _phi_terms(a, phi)
    lc, rc = _phi_terms(c, phi)
    lpa = la - logsumexp(la)
    lpc = lc - logsumexp(lc)
    pa = np.exp(lpa)
    pc = np.exp(lpc)
    diff = lpa - lpc
    value = float(np.sum(pa * diff))
    grad_a = ra * pa * (diff - value)
    grad_c = -rc * (pa - pc)
    return value, grad_a, grad_c


def listnet_adv_loss(
    clean, adv, phi: Phi | str = Phi.EXPONENTIAL, top_one: bool = False, detach_clean_target: bool = False
) -> LossOutput:
    """Stage-wise KL between adversarial and clean Plackett-Luce choices.

    The stages follow the clean ranking ``pi*``, which is held constant. At
    stage ``j`` the remaining documents ``pi*[j:]`` are normalized under both
    score lists and ``KL(adv || clean)`` is added. ``top_one`` keeps only the
    first stage (the original top-one ListNet distribution).
    """
    phi = Phi(phi)
    clean, adv = _check_pair(clean, adv)
    order = argsort_desc(clean)
    n = clean.size
    value = 0.0
    grad_clean = np.zeros(n)
    grad_adv = np.zeros(n)
    # the last stage holds a single document and contributes nothing
    stages = 1 if top_one else n - 1
    for j in range(stages):
        idx = order[j:]
        v, ga, gc = _stage_kl(adv[idx], clean[idx], phi)
        value += v
        grad_adv[idx] += ga
        if not detach_clean_target:
            grad_clean[idx] += gc
    return LossOutput(max(value, 0.0), grad_clean, grad_adv)


def listmle_adv_loss(
    clean, adv, phi: Phi | str = Phi.EXPONENTIAL, centered: bool = True, detach_clean_target: bool = False
) -> LossOutput:
    """Negative log-likelihood of the clean ranking under the adversarial scores.

    With ``centered`` (the default) the clean list's own log-likelihood of that
    ranking is added back, so the loss is the log-likelihood drop caused by the
    perturbation: zero when ``adv == clean``, gradients through both lists.
    With ``centered=False`` it is the raw ``-log P(pi* | adv)`` and the clean
    scores only enter through the (constant) argsort. ``detach_clean_target``
    keeps the centered value but drops the clean-side gradient.
    """
    phi = Phi(phi)
    clean, adv = _check_pair(clean, adv)
    order = argsort_desc(clean)
    lp_adv, g_adv = pl_permutation_logprob(adv, order, phi)
    if not centered:
        return LossOutput(-lp_adv, np.zeros_like(clean), -g_adv)
    lp_clean, g_clean = pl_permutation_logprob(clean, order, phi)
    if detach_clean_target:
        g_clean = np.zeros_like(clean)
    return LossOutput(lp_clean - lp_adv, g_clean, -g_adv)


def adversarial_loss(cfg: TradeoffConfig, clean, adv) -> LossOutput:
    """Dispatch to the regularizer selected by ``cfg``."""
    if cfg.adv_variant is AdvVariant.KL:
        return kl_adv_loss(clean, adv, cfg.detach_clean_target)
    if cfg.adv_variant is AdvVariant.LISTNET:
        return listnet_adv_loss(clean, adv, cfg.phi, cfg.listnet_top_one, cfg.detach_clean_target)
    return listmle_adv_loss(clean, adv, cfg.phi, cfg.listmle_centered, cfg.detach_clean_target)


def _pad(g: np.ndarray, n: int) -> np.ndarray:
    if g.size == 0:
        return np.zeros(n)
    if g.size != n:
        raise ValidationError(f"gradient length {g.size} does not match {n}")
    return g


def combined_loss(cfg: TradeoffConfig, natural: LossOutput, adversarial: LossOutput) -> LossOutput:
    """``lam * natural + (1 - lam) * adversarial`` for values and gradients.

    Both components must refer to the same score lists; an empty gradient is
    read as all zeros.
    """
    lam = cfg.lam
    n_clean = max(natural.grad_scores_clean.size, adversarial.grad_scores_clean.size)
    n_adv = max(natural.grad_scores_adv.size, adversarial.grad_scores_adv.size)
    value = lam * natural.value + (1.0 - lam) * adversarial.value
    gc = lam * _pad(natural.grad_scores_clean, n_clean) + (1.0 - lam) * _pad(adversarial.grad_scores_clean, n_clean)
    ga = lam * _pad(natural.grad_scores_adv, n_adv) + (1.0 - lam) * _pad(adversarial.grad_scores_adv, n_adv)
    return LossOutput(value, gc, ga)
