"""Reference learners behind the TrainedClassifier contract.

Five small, deterministic learners make the ensemble machinery runnable end
to end: k-nearest neighbours, Gaussian naive Bayes, a Gini decision tree, a
random forest of those trees and AdaBoost over decision stumps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from core import LabeledData, TrainedClassifier
from errors import EmptyClassError, LearnerSpecError

logger = logging.getLogger(__name__)

# Hyperparameters each learner accepts, with their defaults.
LEARNER_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "knn": {"k": 5},
    "naive_bayes": {"var_smoothing": 1e-9},
    "decision_tree": {"max_depth": None, "min_leaf": 1},
    "random_forest": {
        "n_trees": 15,
        "seed": 0,
        "max_depth": None,
        "min_leaf": 1,
        "max_features": "sqrt",
        "bootstrap": True,
    },
    "adaboost": {"n_rounds": 30},
}
LEARNER_KINDS = tuple(LEARNER_DEFAULTS)

_POSITIVE_INTS = ("k", "n_trees", "n_rounds", "min_leaf")

ADABOOST_MIN_ERROR = 1e-10


@dataclass(frozen=True)
class LearnerSpec:
    """Which learner to train and with which hyperparameters."""
    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LEARNER_DEFAULTS:
            raise LearnerSpecError(
                f"unknown learner kind {self.kind!r}; expected one of {', '.join(LEARNER_KINDS)}"
            )
        allowed = LEARNER_DEFAULTS[self.kind]
        for key, value in self.hyperparameters.items():
            if key not in allowed:
                raise LearnerSpecError(f"{self.kind} has no hyperparameter {key!r}")
            _check_hyperparameter(key, value)
        object.__setattr__(self, "hyperparameters", dict(self.hyperparameters))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "LearnerSpec":
        """Build from a config entry such as {"kind": "knn", "k": 3}."""
        if "kind" not in mapping:
            raise LearnerSpecError("learner entry has no 'kind'")
        params = {k: v for k, v in mapping.items() if k != "kind"}
        return cls(kind=mapping["kind"], hyperparameters=params)

    def resolved(self) -> Dict[str, Any]:
        params = dict(LEARNER_DEFAULTS[self.kind])
        params.update(self.hyperparameters)
        return params

    def to_mapping(self) -> Dict[str, Any]:
        return {"kind": self.kind, **self.hyperparameters}

    @property
    def name(self) -> str:
        if not self.hyperparameters:
            return self.kind
        params = ",".join(f"{k}={v}" for k, v in sorted(self.hyperparameters.items()))
        return f"{self.kind}({params})"


def _check_hyperparameter(key: str, value: Any) -> None:
    if key in _POSITIVE_INTS:
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise LearnerSpecError(f"{key} must be an integer >= 1, got {value!r}")
    elif key == "max_depth":
        if value is not None and (isinstance(value, bool) or not isinstance(value, int) or value < 1):
            raise LearnerSpecError(f"max_depth must be an integer >= 1 or null, got {value!r}")
    elif key == "seed":
        if isinstance(value, bool) or not isinstance(value, int):
            raise LearnerSpecError(f"seed must be an integer, got {value!r}")
    elif key == "max_features":
        if value in (None, "sqrt"):
            return
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise LearnerSpecError(f"max_features must be null, 'sqrt' or an integer >= 1, got {value!r}")
    elif key == "bootstrap":
        if not isinstance(value, bool):
            raise LearnerSpecError(f"bootstrap must be true or false, got {value!r}")
    elif key == "var_smoothing":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            raise LearnerSpecError(f"var_smoothing must be a positive number, got {value!r}")


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Standardizer:
    """z-score transform fitted on a training split. Constant features keep scale 1."""
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        mean = features.mean(axis=0)
        scale = features.std(axis=0)
        scale[scale == 0.0] = 1.0
        return cls(_frozen(mean), _frozen(scale))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.scale


class KNearestNeighbors(TrainedClassifier):
    """Scores are the class fractions among the k nearest standardized training points."""

    _CHUNK = 256

    def __init__(self, name: str, n_classes: int, standardizer: Standardizer,
                 train_points: np.ndarray, train_labels: np.ndarray, k: int):
        self.name = name
        self.n_classes = n_classes
        self._standardizer = standardizer
        self._points = _frozen(train_points)
        self._labels = _frozen(train_labels)
        self.k = k

    def predict_scores(self, features: np.ndarray) -> np.ndarray:
        z = self._standardizer.transform(features)
        out = np.zeros((z.shape[0], self.n_classes))
        for start in range(0, z.shape[0], self._CHUNK):
            block = z[start:start + self._CHUNK]
            dist = ((block[:, np.newaxis, :] - self._points[np.newaxis, :, :]) ** 2).sum(axis=2)
            # stable sort: equidistant neighbours resolve to the lower training index
            nearest = np.argsort(dist, axis=1, kind="stable")[:, :self.k]
            votes = np.zeros((block.shape[0], self.n_classes))
            rows = np.repeat(np.arange(block.shape[0]), self.k)
            np.add.at(votes, (rows, self._labels[nearest].ravel()), 1.0)
            out[start:start + block.shape[0]] = votes / self.k
        return out


class GaussianNaiveBayes(TrainedClassifier):
    """Class posteriors under independent Gaussian likelihoods on standardized features."""

    def __init__(self, name: str, n_classes: int, standardizer: Standardizer,
                 log_priors: np.ndarray, means: np.ndarray, variances: np.ndarray):
        self.name = name
        self.n_classes = n_classes
        self._standardizer = standardizer
        self._log_priors = _frozen(log_priors)
        self._means = _frozen(means)
        self._variances = _frozen(variances)

    def predict_scores(self, features: np.ndarray) -> np.ndarray:
        z = self._standardizer.transform(features)
        diff = z[:, np.newaxis, :] - self._means[np.newaxis, :, :]
        log_lik = -0.5 * (np.log(2.0 * math.pi * self._variances)[np.newaxis] + diff ** 2 / self._variances[np.newaxis]).sum(axis=2)
        joint = log_lik + self._log_priors[np.newaxis, :]
        post = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
        return post / post.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class _TreeArrays:
    """Flat preorder tree. Leaves have feature == -1."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


class DecisionTree(TrainedClassifier):
    """CART tree; scores are the (weighted) class frequencies of the reached leaf."""

    def __init__(self, name: str, n_classes: int, tree: _TreeArrays):
        self.name = name
        self.n_classes = n_classes
        self._tree = tree

    @property
    def n_nodes(self) -> int:
        return int(self._tree.feature.shape[0])

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self._tree.feature[node] >= 0:
                depths[self._tree.left[node]] = depths[node] + 1
                depths[self._tree.right[node]] = depths[node] + 1
        return int(depths.max())

    def predict_scores(self, features: np.ndarray) -> np.ndarray:
        tree = self._tree
        x = np.asarray(features, dtype=np.float64)
        rows = np.arange(x.shape[0])
        node = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            feature = tree.feature[node]
            internal = feature >= 0
            if not internal.any():
                break
            go_left = x[rows, np.where(internal, feature, 0)] <= tree.threshold[node]
            node = np.where(internal, np.where(go_left, tree.left[node], tree.right[node]), node)
        return tree.value[node].copy()


class RandomForest(TrainedClassifier):
    """Mean of the member trees' scores."""

    def __init__(self, name: str, n_classes: int, trees: Sequence[DecisionTree]):
        if not trees:
            raise ValueError("a forest needs at least one tree")
        self.name = name
        self.n_classes = n_classes
        self.trees = tuple(trees)

    def predict_scores(self, features: np.ndarray) -> np.ndarray:
        total = np.zeros((np.asarray(features).shape[0], self.n_classes))
        for tree in self.trees:
            total += tree.predict_scores(features)
        return total / len(self.trees)


class AdaBoost(TrainedClassifier):
    """Boosted stumps; scores are each class's share of the alpha-weighted stump votes."""

    def __init__(self, name: str, n_classes: int, stumps: Sequence[DecisionTree],
                 alphas: Sequence[float], prior: np.ndarray):
        self.name = name
        self.n_classes = n_classes
        self.stumps = tuple(stumps)
        self.alphas = _frozen(np.asarray(alphas, dtype=np.float64))
        self._prior = _frozen(prior)

    def predict_scores(self, features: np.ndarray) -> np.ndarray:
        n = np.asarray(features).shape[0]
        votes = np.zeros((n, self.n_classes))
        for stump, alpha in zip(self.stumps, self.alphas):
            decision = np.argmax(stump.predict_scores(features), axis=1)
            votes[np.arange(n), decision] += alpha
        total = votes.sum(axis=1, keepdims=True)
        empty = total[:, 0] <= 0.0
        votes[empty] = self._prior
        total[empty] = 1.0
        return votes / total


def _class_frequencies(labels: np.ndarray, weights: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(labels, weights=weights, minlength=n_classes)
    return counts / counts.sum()


def _best_split(x: np.ndarray, y_onehot: np.ndarray, min_leaf: int, features: Sequence[int]):
    """Lowest weighted Gini impurity over midpoint thresholds.

    Features are scanned in ascending order and thresholds from low to high;
    only a strictly better candidate replaces the incumbent.
    Returns (feature, threshold, left_mask) or None.
    """
    n = x.shape[0]
    total = y_onehot.sum(axis=0)
    total_weight = total.sum()
    best = None
    best_impurity = math.inf
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        cum = np.cumsum(y_onehot[order], axis=0)[:-1]
        positions = np.arange(min_leaf - 1, n - min_leaf)
        if positions.size == 0:
            continue
        positions = positions[xs[positions] < xs[positions + 1]]
        if positions.size == 0:
            continue
        left = cum[positions]
        right = total - left
        w_left = left.sum(axis=1)
        w_right = right.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            gini_left = 1.0 - ((left / w_left[:, None]) ** 2).sum(axis=1)
            gini_right = 1.0 - ((right / w_right[:, None]) ** 2).sum(axis=1)
        impurity = (w_left * np.nan_to_num(gini_left) + w_right * np.nan_to_num(gini_right)) / total_weight
        i = int(np.argmin(impurity))
        if impurity[i] < best_impurity:
            p = positions[i]
            threshold = 0.5 * (xs[p] + xs[p + 1])
            if threshold >= xs[p + 1]:
                threshold = xs[p]
            best_impurity = impurity[i]
            best = (int(f), float(threshold))
    if best is None:
        return None
    f, threshold = best
    return f, threshold, x[:, f] <= threshold


def _grow_tree(features: np.ndarray, labels: np.ndarray, weights: np.ndarray, n_classes: int,
               max_depth: Optional[int], min_leaf: int, max_features: Optional[int],
               rng: Optional[np.random.Generator]) -> _TreeArrays:
    n_features = features.shape[1]
    onehot = np.zeros((labels.shape[0], n_classes))
    onehot[np.arange(labels.shape[0]), labels] = weights

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[np.ndarray] = []

    def build(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        counts = onehot[rows].sum(axis=0)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts / counts.sum())

        if max_depth is not None and depth >= max_depth:
            return node
        if np.count_nonzero(counts) <= 1 or rows.shape[0] < 2 * min_leaf:
            return node

        if max_features is None or max_features >= n_features:
            candidates = range(n_features)
        else:
            candidates = np.sort(rng.choice(n_features, size=max_features, replace=False))
        split = _best_split(features[rows], onehot[rows], min_leaf, candidates)
        if split is None:
            return node

        f, t, go_left = split
        feature[node] = f
        threshold[node] = t
        left[node] = build(rows[go_left], depth + 1)
        right[node] = build(rows[~go_left], depth + 1)
        return node

    build(np.arange(labels.shape[0]), 0)
    return _TreeArrays(
        feature=_frozen(np.asarray(feature, dtype=np.int64)),
        threshold=_frozen(np.asarray(threshold, dtype=np.float64)),
        left=_frozen(np.asarray(left, dtype=np.int64)),
        right=_frozen(np.asarray(right, dtype=np.int64)),
        value=_frozen(np.vstack(value)),
    )


def _prior_tree(labels: np.ndarray, weights: np.ndarray, n_classes: int) -> _TreeArrays:
    return _TreeArrays(
        feature=_frozen(np.array([-1])),
        threshold=_frozen(np.array([0.0])),
        left=_frozen(np.array([-1])),
        right=_frozen(np.array([-1])),
        value=_frozen(_class_frequencies(labels, weights, n_classes)[np.newaxis, :]),
    )


def _is_degenerate(features: np.ndarray) -> bool:
    return bool(np.all(features == features[0]))


def _resolve_max_features(max_features: Any, n_features: int) -> Optional[int]:
    if max_features is None:
        return None
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    return min(int(max_features), n_features)


def _train_tree(name: str, data: LabeledData, weights: np.ndarray, max_depth: Optional[int],
                min_leaf: int, max_features: Optional[int] = None,
                rng: Optional[np.random.Generator] = None) -> DecisionTree:
    arrays = _grow_tree(data.features, data.labels, weights, data.n_classes,
                        max_depth, min_leaf, max_features, rng)
    return DecisionTree(name, data.n_classes, arrays)


def _train_knn(spec: LearnerSpec, data: LabeledData) -> TrainedClassifier:
    k = spec.resolved()["k"]
    if k > len(data):
        logger.warning(f"{spec.name}: k={k} exceeds {len(data)} training samples, using k={len(data)}")
        k = len(data)
    standardizer = Standardizer.fit(data.features)
    return KNearestNeighbors(spec.name, data.n_classes, standardizer,
                             standardizer.transform(data.features), data.labels, k)


def _train_naive_bayes(spec: LearnerSpec, data: LabeledData) -> TrainedClassifier:
    standardizer = Standardizer.fit(data.features)
    z = standardizer.transform(data.features)
    epsilon = spec.resolved()["var_smoothing"] * max(1.0, float(z.var(axis=0).max()))
    counts = data.class_counts()
    means = np.vstack([z[data.labels == c].mean(axis=0) for c in range(data.n_classes)])
    variances = np.vstack([z[data.labels == c].var(axis=0) for c in range(data.n_classes)]) + epsilon
    log_priors = np.log(counts / counts.sum())
    return GaussianNaiveBayes(spec.name, data.n_classes, standardizer, log_priors, means, variances)


def _train_decision_tree(spec: LearnerSpec, data: LabeledData) -> TrainedClassifier:
    params = spec.resolved()
    weights = np.ones(len(data))
    if _is_degenerate(data.features):
        logger.warning(f"{spec.name}: all features constant, returning a prior-only model")
        return DecisionTree(spec.name, data.n_classes, _prior_tree(data.labels, weights, data.n_classes))
    return _train_tree(spec.name, data, weights, params["max_depth"], params["min_leaf"])


def _train_random_forest(spec: LearnerSpec, data: LabeledData) -> TrainedClassifier:
    params = spec.resolved()
    weights = np.ones(len(data))
    if _is_degenerate(data.features):
        logger.warning(f"{spec.name}: all features constant, returning a prior-only model")
        prior = DecisionTree(spec.name, data.n_classes, _prior_tree(data.labels, weights, data.n_classes))
        return RandomForest(spec.name, data.n_classes, [prior])

    max_features = _resolve_max_features(params["max_features"], data.features.shape[1])
    seeds = np.random.SeedSequence(params["seed"]).spawn(params["n_trees"])
    trees = []
    for t, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        if params["bootstrap"]:
            sample = data.subset(rng.integers(0, len(data), size=len(data)))
            # a bootstrap draw can miss a class; the tree then just never predicts it
        else:
            sample = data
        trees.append(_train_tree(f"{spec.name}#tree{t}", sample, np.ones(len(sample)),
                                 params["max_depth"], params["min_leaf"], max_features, rng))
    return RandomForest(spec.name, data.n_classes, trees)


def _train_adaboost(spec: LearnerSpec, data: LabeledData) -> TrainedClassifier:
    n_rounds = spec.resolved()["n_rounds"]
    m = data.n_classes
    n = len(data)
    prior = _class_frequencies(data.labels, np.ones(n), m)
    if _is_degenerate(data.features):
        logger.warning(f"{spec.name}: all features constant, returning a prior-only model")
        return AdaBoost(spec.name, m, [], [], prior)

    weights = np.full(n, 1.0 / n)
    stumps: List[DecisionTree] = []
    alphas: List[float] = []
    for round_index in range(n_rounds):
        stump = _train_tree(f"{spec.name}#stump{round_index}", data, weights, max_depth=1, min_leaf=1)
        missed = np.argmax(stump.predict_scores(data.features), axis=1) != data.labels
        error = float(weights[missed].sum() / weights.sum())
        if error >= 1.0 - 1.0 / m:
            logger.debug(f"{spec.name}: stopping at round {round_index}, stump error {error:.4f}")
            break
        clipped = max(error, ADABOOST_MIN_ERROR)
        alpha = math.log((1.0 - clipped) / clipped) + math.log(m - 1)
        stumps.append(stump)
        alphas.append(alpha)
        if error <= 0.0:
            break
        weights = weights * np.exp(alpha * missed)
        weights /= weights.sum()
    return AdaBoost(spec.name, m, stumps, alphas, prior)


_TRAINERS = {
    "knn": _train_knn,
    "naive_bayes": _train_naive_bayes,
    "decision_tree": _train_decision_tree,
    "random_forest": _train_random_forest,
    "adaboost": _train_adaboost,
}


def train(spec: LearnerSpec, data: LabeledData) -> TrainedClassifier:
    """Train the learner described by `spec` on `data`.

    Training is deterministic: the same spec (seed included) and data always
    give a model with identical scores.

    Raises:
        EmptyClassError: some class of the label set has no sample
    """
    counts = data.class_counts()
    missing = [c for c in range(data.n_classes) if counts[c] == 0]
    if missing:
        raise EmptyClassError(f"{spec.name}: no training samples for class(es) {missing}")
    model = _TRAINERS[spec.kind](spec, data)
    logger.debug(f"Trained {spec.name} on {len(data)} samples (class counts {counts.tolist()})")
    return model
