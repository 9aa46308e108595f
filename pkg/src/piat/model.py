"""Mean-pooled bilinear ranker with hand-derived gradients.

    f(q, d) = phi(q)^T W phi(d) + b,   phi(x) = mean of the token embeddings of x
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import TokenDoc, TokenQuery, ValidationError


@dataclass
class ScoringModel:
    embeddings: np.ndarray  # (V, E)
    interaction: np.ndarray  # (E, E)
    bias: float = 0.0

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.interaction = np.asarray(self.interaction, dtype=np.float64)
        self.bias = float(self.bias)
        v, e = self.embeddings.shape
        if self.interaction.shape != (e, e):
            raise ValidationError(f"interaction must be {e}x{e}, got {self.interaction.shape}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.embeddings.shape

    @property
    def n_params(self) -> int:
        v, e = self.dims
        return v * e + e * e + 1

    @classmethod
    def init(cls, vocab_size: int, dim: int, seed: int = 0) -> "ScoringModel":
        rng = np.random.default_rng(seed)
        emb = rng.uniform(-0.1, 0.1, size=(vocab_size, dim))
        return cls(emb, 0.1 * np.eye(dim), 0.0)

    @classmethod
    def zeros(cls, vocab_size: int, dim: int) -> "ScoringModel":
        return cls(np.zeros((vocab_size, dim)), np.zeros((dim, dim)), 0.0)

    def copy(self) -> "ScoringModel":
        return ScoringModel(self.embeddings.copy(), self.interaction.copy(), self.bias)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.embeddings)) and np.all(np.isfinite(self.interaction)) and math.isfinite(self.bias)
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.embeddings.ravel(), self.interaction.ravel(), [self.bias]])

    @classmethod
    def from_vector(cls, vec: np.ndarray, dims: tuple[int, int]) -> "ScoringModel":
        v, e = dims
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (v * e + e * e + 1,):
            raise ValidationError(f"parameter vector has shape {vec.shape}, expected ({v * e + e * e + 1},)")
        return cls(vec[: v * e].reshape(v, e).copy(), vec[v * e : v * e + e * e].reshape(e, e).copy(), vec[-1])

    def apply(self, grad: "Gradient", step: float) -> None:
        """In-place update ``theta <- theta - step * grad``."""
        self.embeddings -= step * grad.embeddings
        self.interaction -= step * grad.interaction
        self.bias -= step * grad.bias


@dataclass
class Gradient:
    embeddings: np.ndarray
    interaction: np.ndarray
    bias: float = 0.0

    @classmethod
    def zeros_like(cls, model: ScoringModel) -> "Gradient":
        return cls(np.zeros_like(model.embeddings), np.zeros_like(model.interaction), 0.0)

    def add_scaled(self, other: "Gradient", alpha: float = 1.0) -> "Gradient":
        self.embeddings += alpha * other.embeddings
        self.interaction += alpha * other.interaction
        self.bias += alpha * other.bias
        return self

    def scale(self, alpha: float) -> "Gradient":
        self.embeddings *= alpha
        self.interaction *= alpha
        self.bias *= alpha
        return self

    def zero(self) -> None:
        self.embeddings[...] = 0.0
        self.interaction[...] = 0.0
        self.bias = 0.0

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.embeddings.ravel(), self.interaction.ravel(), [self.bias]])


def _check_ids(tokens: Sequence[int], vocab_size: int, what: str) -> None:
    for t in tokens:
        if not 0 <= t < vocab_size:
            raise ValidationError(f"{what}: token id {t} is out of vocabulary (V={vocab_size})")


def _pool(model: ScoringModel, tokens: Sequence[int]) -> np.ndarray:
    return model.embeddings[np.asarray(tokens, dtype=np.int64)].mean(axis=0)


def _doc_matrix(docs: Sequence[TokenDoc]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened token ids, owning row, and per-token pooling weight 1/M_j."""
    ids = np.fromiter((t for d in docs for t in d.tokens), dtype=np.int64)
    rows = np.repeat(np.arange(len(docs)), [len(d) for d in docs])
    weights = np.repeat([1.0 / len(d) for d in docs], [len(d) for d in docs])
    return ids, rows, weights


def _pool_docs(model: ScoringModel, docs: Sequence[TokenDoc]) -> np.ndarray:
    ids, rows, weights = _doc_matrix(docs)
    pooled = np.zeros((len(docs), model.dims[1]))
    np.add.at(pooled, rows, model.embeddings[ids] * weights[:, None])
    return pooled


def score(model: ScoringModel, q: TokenQuery, d: TokenDoc) -> float:
    # same arithmetic path as score_batch so single and batched scores agree bitwise
    return float(score_batch(model, q, [d])[0])


def score_batch(model: ScoringModel, q: TokenQuery, docs: Sequence[TokenDoc]) -> np.ndarray:
    """Scores of ``docs`` for ``q`` in one pass sharing the pooled query."""
    if len(docs) == 0:
        return np.zeros(0)
    v = model.dims[0]
    _check_ids(q.tokens, v, f"query {q.query_id!r}")
    for d in docs:
        _check_ids(d.tokens, v, f"document {d.doc_id!r}")
    u = _pool(model, q.tokens) @ model.interaction
    # row-wise reduction keeps each score independent of the batch composition
    return (_pool_docs(model, docs) * u[None, :]).sum(axis=1) + model.bias


def backprop(model: ScoringModel, q: TokenQuery, docs: Sequence[TokenDoc], upstream) -> Gradient:
    """Gradient of ``sum_j upstream[j] * f(q, docs[j])`` with respect to all parameters."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (len(docs),):
        raise ValidationError(f"upstream has shape {upstream.shape}, expected ({len(docs)},)")
    grad = Gradient.zeros_like(model)
    if len(docs) == 0:
        return grad
    w = model.interaction
    a = _pool(model, q.tokens)
    pooled = _pool_docs(model, docs)
    b_sum = upstream @ pooled  # sum_j g_j phi(d_j)

    grad.interaction = np.outer(a, b_sum)
    grad.bias = float(upstream.sum())

    q_ids = np.asarray(q.tokens, dtype=np.int64)
    np.add.at(grad.embeddings, q_ids, np.broadcast_to((w @ b_sum) / len(q_ids), (len(q_ids), w.shape[0])))

    ids, rows, weights = _doc_matrix(docs)
    wa = w.T @ a
    np.add.at(grad.embeddings, ids, (upstream[rows] * weights)[:, None] * wa[None, :])
    return grad


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_index: int
    n_checked: int
    passed: bool


def relative_error(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def check_vector_gradient(
    fn: Callable[[np.ndarray], float], x, analytic, h: float = 1e-5, tol: float = 1e-4
) -> GradCheckReport:
    """Central-difference check of ``analytic`` against ``fn`` at ``x``."""
    if h <= 0:
        raise ValidationError("finite-difference step h must be > 0")
    x = np.array(x, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.empty_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + h
        fp = fn(x)
        x.flat[i] = orig - h
        fm = fn(x)
        x.flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite loss while probing coordinate {i}")
        numeric.flat[i] = (fp - fm) / (2 * h)
    err = relative_error(numeric, analytic).ravel()
    worst = int(np.argmax(err)) if err.size else -1
    max_err = float(err[worst]) if err.size else 0.0
    return GradCheckReport(max_err, worst, int(err.size), max_err <= tol)


def finite_diff_check(
    loss_fn: Callable[[ScoringModel], float],
    model: ScoringModel,
    analytic: Gradient,
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Probe every model parameter by +-h and compare with ``analytic``."""
    dims = model.dims
    return check_vector_gradient(
        lambda vec: loss_fn(ScoringModel.from_vector(vec, dims)), model.to_vector(), analytic.to_vector(), h, tol
    )
