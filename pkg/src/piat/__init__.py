"""Perturbation-invariant adversarial training for rankers, at desk scale."""

from .attack import AttackBudget, AttackResult, brute_force_attack, enumerate_neighborhood, greedy_attack
from .core import CandidateSet, RankedList, TokenDoc, TokenQuery, ValidationError, Vocabulary, rank_by_scores
from .datagen import GenConfig, SynonymLexicon, generate, neighborhood_size
from .losses import AdvVariant, Phi, TradeoffConfig
from .model import ScoringModel, backprop, score, score_batch
from .robustness import ErrorReport, robust_error_report
from .train import Method, TrainConfig, train

__all__ = [
    "AdvVariant",
    "AttackBudget",
    "AttackResult",
    "CandidateSet",
    "ErrorReport",
    "GenConfig",
    "Method",
    "Phi",
    "RankedList",
    "ScoringModel",
    "SynonymLexicon",
    "TokenDoc",
    "TokenQuery",
    "TradeoffConfig",
    "TrainConfig",
    "ValidationError",
    "Vocabulary",
    "backprop",
    "brute_force_attack",
    "enumerate_neighborhood",
    "generate",
    "greedy_attack",
    "neighborhood_size",
    "rank_by_scores",
    "robust_error_report",
    "score",
    "score_batch",
    "train",
]
