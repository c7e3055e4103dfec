"""Ensemble combiners: majority and weighted-majority voting, and the
average, product, minimum and maximum rules over discriminator scores.

The array functions work on a stacked score tensor of shape
(n_members, n_samples, n_classes) so the search can fuse cached member
outputs without re-scoring; the per-sample operations wrap them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from core import ClassLabel, FeatureVector, TrainedClassifier, argmax_lowest
from errors import FusionError, MissingWeightsError, NotBinaryError, UnknownStrategyError

logger = logging.getLogger(__name__)

STRATEGIES = ("maj", "wmaj", "avg", "pro", "min", "max")
VOTING = ("maj", "wmaj")
ALGEBRAIC = ("avg", "pro", "min", "max")


def check_strategy(strategy: str) -> str:
    if strategy not in STRATEGIES:
        raise UnknownStrategyError(
            f"unknown fusion strategy {strategy!r}; expected one of {'|'.join(STRATEGIES)}"
        )
    return strategy


def check_weights(weights: Optional[Sequence[float]], n_members: int) -> Optional[np.ndarray]:
    if weights is None:
        return None
    beta = np.asarray(weights, dtype=np.float64)
    if beta.shape != (n_members,):
        raise FusionError(f"expected {n_members} weights, got {beta.shape[0] if beta.ndim else 0}")
    if not np.all(np.isfinite(beta)) or np.any(beta < 0.0):
        raise FusionError(f"weights must be finite and non-negative, got {beta.tolist()}")
    if not np.any(beta > 0.0):
        raise FusionError("at least one weight must be positive")
    return beta


def member_votes(member_scores: np.ndarray) -> np.ndarray:
    """Each member's decision, shape (n_members, n_samples)."""
    return argmax_lowest(member_scores)


def vote_totals(member_scores: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-class vote mass, shape (n_samples, n_classes). Unit weights when none given."""
    n_members, n_samples, n_classes = member_scores.shape
    if weights is None:
        weights = np.ones(n_members)
    votes = member_votes(member_scores)
    totals = np.zeros((n_samples, n_classes))
    samples = np.arange(n_samples)
    for j in range(n_members):
        totals[samples, votes[j]] += weights[j]
    return totals


def aggregate_scores(member_scores: np.ndarray, strategy: str, product_epsilon: float = 0.0) -> np.ndarray:
    """Combine h_{j,i} over members j for every class i, shape (n_samples, n_classes).

    Members are sorted per cell before reducing so the result does not depend
    on member order, not even in the last bit.
    """
    ordered = np.sort(member_scores, axis=0)
    if strategy == "avg":
        return ordered.mean(axis=0)
    if strategy == "pro":
        if product_epsilon > 0.0:
            ordered = np.maximum(ordered, product_epsilon)
        return ordered.prod(axis=0)
    if strategy == "min":
        return ordered[0]
    if strategy == "max":
        return ordered[-1]
    raise UnknownStrategyError(f"{strategy!r} is not an algebraic fusion strategy")


def fuse_scores(member_scores: np.ndarray, strategy: str, weights: Optional[Sequence[float]] = None,
                product_epsilon: float = 0.0) -> np.ndarray:
    """Fused class decision for every sample, shape (n_samples,)."""
    check_strategy(strategy)
    if strategy == "maj":
        return argmax_lowest(vote_totals(member_scores))
    if strategy == "wmaj":
        beta = check_weights(weights, member_scores.shape[0])
        if beta is None:
            raise MissingWeightsError("weighted majority voting needs member weights")
        return argmax_lowest(vote_totals(member_scores, beta))
    return argmax_lowest(aggregate_scores(member_scores, strategy, product_epsilon))


def fused_positive_scores(member_scores: np.ndarray, strategy: str, positive_class: int = 1,
                          weights: Optional[Sequence[float]] = None,
                          product_epsilon: float = 0.0) -> np.ndarray:
    """A confidence for the positive class that increases with the fused support.

    avg/min/max use the aggregated positive-class score, pro its L-th root,
    maj/wmaj the (weighted) fraction of members voting positive.
    """
    check_strategy(strategy)
    n_members, _, n_classes = member_scores.shape
    if n_classes != 2:
        raise NotBinaryError(f"positive-class scores need 2 classes, got {n_classes}")
    if strategy == "maj":
        return vote_totals(member_scores)[:, positive_class] / n_members
    if strategy == "wmaj":
        beta = check_weights(weights, n_members)
        if beta is None:
            raise MissingWeightsError("weighted majority voting needs member weights")
        return vote_totals(member_scores, beta)[:, positive_class] / beta.sum()
    fused = aggregate_scores(member_scores, strategy, product_epsilon)[:, positive_class]
    if strategy == "pro":
        return fused ** (1.0 / n_members)
    return fused


@dataclass(frozen=True)
class Ensemble:
    """Ordered members D_1..D_L fused with one strategy.

    `weights` (beta) are required for wmaj and ignored otherwise.
    """
    members: tuple
    strategy: str
    weights: Optional[tuple] = None
    product_epsilon: float = 0.0

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise FusionError("an ensemble needs at least one member")
        check_strategy(self.strategy)
        sizes = {m.n_classes for m in members}
        if len(sizes) != 1:
            raise FusionError(f"members disagree on the label-set size: {sorted(sizes)}")
        beta = check_weights(self.weights, len(members))
        if self.strategy == "wmaj" and beta is None:
            raise MissingWeightsError("weighted majority voting needs member weights")
        if self.product_epsilon < 0.0:
            raise FusionError("product_epsilon must be non-negative")
        object.__setattr__(self, "members", members)
        if beta is not None:
            object.__setattr__(self, "weights", tuple(float(b) for b in beta))

    @property
    def n_classes(self) -> int:
        return self.members[0].n_classes

    def member_scores(self, features: np.ndarray) -> np.ndarray:
        return stack_member_scores(self.members, features)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return fuse_scores(self.member_scores(features), self.strategy, self.weights, self.product_epsilon)

    def positive_scores(self, features: np.ndarray, positive_class: int = 1) -> np.ndarray:
        return fused_positive_scores(self.member_scores(features), self.strategy, positive_class,
                                     self.weights, self.product_epsilon)


def _single(ensemble: Ensemble, x: FeatureVector) -> ClassLabel:
    return ClassLabel(int(ensemble.predict(x.as_array())[0]), ensemble.n_classes)


def _require(ensemble: Ensemble, allowed: Sequence[str]) -> None:
    if ensemble.strategy not in allowed:
        raise FusionError(f"ensemble strategy is {ensemble.strategy!r}, expected {'|'.join(allowed)}")


def fuse_majority(ensemble: Ensemble, x: FeatureVector) -> ClassLabel:
    """Class with the most member votes; ties go to the lowest class index."""
    _require(ensemble, ("maj",))
    return _single(ensemble, x)


def fuse_weighted_majority(ensemble: Ensemble, x: FeatureVector) -> ClassLabel:
    """Class with the largest sum of weights of the members voting for it."""
    _require(ensemble, ("wmaj",))
    return _single(ensemble, x)


def fuse_algebraic(ensemble: Ensemble, x: FeatureVector) -> ClassLabel:
    _require(ensemble, ALGEBRAIC)
    return _single(ensemble, x)


def fuse(ensemble: Ensemble, x: FeatureVector) -> ClassLabel:
    return _single(ensemble, x)


def fused_positive_score(ensemble: Ensemble, x: FeatureVector, positive_class: int = 1) -> float:
    return float(ensemble.positive_scores(x.as_array(), positive_class)[0])


def stack_member_scores(members: Sequence[TrainedClassifier], features: np.ndarray) -> np.ndarray:
    """Score `features` with every member, shape (n_members, n_samples, n_classes)."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return np.stack([m.predict_scores(features) for m in members])
