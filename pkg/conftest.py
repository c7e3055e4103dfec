"""Shared pytest fixtures: small cohorts and classifiers with fixed score tables."""

from __future__ import annotations

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core import N_FEATURES, LabeledData, TrainedClassifier  # noqa: E402
from dataio import MESSIDOR_GRADE_PROPORTIONS, generate_synthetic  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale end-to-end runs (deselect with -m 'not slow')")


class TableClassifier(TrainedClassifier):
    """Looks its scores up by the sample id stored in feature column 0."""

    def __init__(self, name: str, table):
        self.name = name
        self.table = np.asarray(table, dtype=np.float64)
        self.n_classes = int(self.table.shape[1])

    def predict_scores(self, features: np.ndarray) -> np.ndarray:
        ids = np.asarray(features)[:, 0].astype(np.int64)
        return self.table[ids].copy()


class ConstantClassifier(TrainedClassifier):
    """Returns the same score row for every input."""

    def __init__(self, row, name: str = "constant"):
        self.name = name
        self.row = np.asarray(row, dtype=np.float64)
        self.n_classes = int(self.row.shape[0])

    def predict_scores(self, features: np.ndarray) -> np.ndarray:
        return np.tile(self.row, (np.atleast_2d(features).shape[0], 1))


def id_features(n: int) -> np.ndarray:
    """Feature matrix whose column 0 holds the sample id 0..n-1."""
    features = np.zeros((n, N_FEATURES))
    features[:, 0] = np.arange(n)
    return features


def random_pool(truth: np.ndarray, n_members: int, seed: int):
    """Members whose positive score leans toward the truth by a member-specific amount."""
    rng = np.random.default_rng(seed)
    pool = []
    for j in range(n_members):
        skill = 0.15 + 0.5 * rng.random()
        positive = np.clip((1.0 - skill) * rng.random(truth.shape[0]) + skill * truth, 0.0, 1.0)
        pool.append(TableClassifier(f"table{j}", np.column_stack([1.0 - positive, positive])))
    return pool


@pytest.fixture
def table_data():
    """200 samples with ids as features and a seeded binary truth."""
    rng = np.random.default_rng(11)
    labels = (rng.random(200) < 0.4).astype(np.int64)
    return LabeledData(id_features(200), labels)


@pytest.fixture
def small_cohort():
    return generate_synthetic(200, MESSIDOR_GRADE_PROPORTIONS, 3.0, 0)


@pytest.fixture
def separable_data():
    """Two classes 60 samples each, separated by a wide gap in chi2; other features constant."""
    rng = np.random.default_rng(5)
    labels = np.repeat([0, 1], 60)
    features = np.zeros((120, N_FEATURES))
    features[:, 2] = np.abs(rng.normal(0.0, 0.2, size=120)) + 3.0 * labels
    return LabeledData(features, labels)
