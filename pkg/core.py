"""Domain types and the classifier contract.

A classifier maps a 19-dimensional screening feature vector to one
discriminator score per class; its decision is the argmax of those scores.
Every decision in this package breaks ties toward the lowest class index.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from errors import ArityError, FeatureVectorError, NonFiniteError, RangeError

logger = logging.getLogger(__name__)

N_FEATURES = 19
FEATURE_NAMES = tuple(f"chi{i}" for i in range(N_FEATURES))

# chi0 quality, chi1 pre-screening, chi2..chi7 MA counts at alpha 0.5..1.0,
# chi8..chi16 exudate measures, chi17 MC-ODC distance, chi18 AM/FM confidence
QUALITY = 0
PRESCREEN = 1
MA_COUNTS = slice(2, 8)
EXUDATES = slice(8, 17)
MC_ODC_DISTANCE = 17
AMFM_CONFIDENCE = 18

SCORE_SUM_TOLERANCE = 1e-9


class Grade(IntEnum):
    """Messidor retinopathy grade."""
    R0 = 0
    R1 = 1
    R2 = 2
    R3 = 3


@dataclass(frozen=True)
class ClassLabel:
    """Index of a class inside a label set of size n_classes."""
    index: int
    n_classes: int = 2

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"label set needs at least 2 classes, got {self.n_classes}")
        if not 0 <= self.index < self.n_classes:
            raise ValueError(f"class index {self.index} outside 0..{self.n_classes - 1}")


@dataclass(frozen=True)
class FeatureVector:
    """A validated chi0..chi18 screening record. Build it with validate_feature_vector."""
    values: tuple

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class GradedRecord:
    features: FeatureVector
    grade: Grade


@dataclass(frozen=True)
class DiscriminatorScores:
    """Normalized per-class scores h_1(x)..h_M(x) of one classifier."""
    scores: tuple

    def __post_init__(self):
        if len(self.scores) < 2:
            raise ValueError("discriminator scores need at least 2 classes")
        for s in self.scores:
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"discriminator score {s} outside [0, 1]")
        total = math.fsum(self.scores)
        if abs(total - 1.0) > SCORE_SUM_TOLERANCE:
            raise ValueError(f"discriminator scores sum to {total}, expected 1")

    @property
    def n_classes(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class LabeledData:
    """Feature matrix with integer class labels, as seen by learners.

    `indices` are the row positions in the source dataset, kept so every
    split can be audited back to the original records.
    """
    features: np.ndarray
    labels: np.ndarray
    n_classes: int = 2
    indices: np.ndarray = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] != labels.shape[0]:
            raise ValueError(
                f"features {features.shape} and labels {labels.shape} do not line up"
            )
        indices = self.indices
        if indices is None:
            indices = np.arange(labels.shape[0])
        indices = np.asarray(indices, dtype=np.int64)
        for array in (features, labels, indices):
            array.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "indices", indices)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, positions: np.ndarray) -> "LabeledData":
        positions = np.asarray(positions, dtype=np.int64)
        return LabeledData(
            features=self.features[positions],
            labels=self.labels[positions],
            n_classes=self.n_classes,
            indices=self.indices[positions],
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


class TrainedClassifier(ABC):
    """Contract every trained model satisfies.

    Implementations are immutable once constructed and return identical scores
    for identical inputs. Scores are rows of non-negative values summing to 1.
    """

    name: str
    n_classes: int

    @abstractmethod
    def predict_scores(self, features: np.ndarray) -> np.ndarray:
        """Score a batch.

        Args:
            features: array of shape (n_samples, 19)

        Returns:
            Array of shape (n_samples, n_classes) with normalized scores.
        """

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, n_classes={self.n_classes})"


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax over the last axis; the first maximum wins."""
    return np.argmax(scores, axis=-1)


def score(classifier: TrainedClassifier, x: FeatureVector) -> DiscriminatorScores:
    row = classifier.predict_scores(x.as_array()[np.newaxis, :])[0]
    return DiscriminatorScores(tuple(float(v) for v in row))


def decide(classifier: TrainedClassifier, x: FeatureVector) -> ClassLabel:
    """Return the class with the highest discriminator score."""
    scores = score(classifier, x)
    index = int(argmax_lowest(np.asarray(scores.scores)))
    return ClassLabel(index, classifier.n_classes)


def validate_feature_vector(raw: Sequence[float]) -> FeatureVector:
    """Check a raw sequence against the screening schema.

    Raises:
        ArityError: length is not 19
        NonFiniteError: a value is NaN or infinite
        RangeError: chi0 outside [0, 1], chi1 not 0/1, or a negative measure
    """
    values = list(raw)
    if len(values) != N_FEATURES:
        raise ArityError(f"expected {N_FEATURES} features, got {len(values)}")

    converted = []
    for i, value in enumerate(values):
        try:
            number = float(value)
        except (TypeError, ValueError) as e:
            raise FeatureVectorError(f"{FEATURE_NAMES[i]} is not a real number: {value!r}") from e
        if not math.isfinite(number):
            raise NonFiniteError(f"{FEATURE_NAMES[i]} is not finite: {number}")
        converted.append(number)

    if not 0.0 <= converted[QUALITY] <= 1.0:
        raise RangeError(f"chi0 (quality) must be in [0, 1], got {converted[QUALITY]}")
    if converted[PRESCREEN] not in (0.0, 1.0):
        raise RangeError(f"chi1 (pre-screening) must be 0 or 1, got {converted[PRESCREEN]}")
    for i in range(2, N_FEATURES):
        if converted[i] < 0.0:
            raise RangeError(f"{FEATURE_NAMES[i]} must be non-negative, got {converted[i]}")

    return FeatureVector(tuple(converted))
