"""Ensemble membership search.

Forward search starts from the best single classifier and makes one pass
over the rest in pool order, keeping a classifier only if the ensemble
energy strictly increases. Backward search starts from the whole pool and
makes one pass removing members the same way, never removing the last one.
`All`, `single best` and an exhaustive optimum are provided for comparison.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import metrics
from core import LabeledData, TrainedClassifier
from errors import NotBinaryError, ScreeningError
from fusion import check_strategy, fuse_scores, stack_member_scores

logger = logging.getLogger(__name__)

ENERGY_KINDS = ("sensitivity", "accuracy", "fscore")
SEARCH_METHODS = ("forward", "backward", "all", "single_best", "exhaustive")
SEARCH_MODES = ("single_pass", "iterative")
EXHAUSTIVE_LIMIT = 16

_ENERGY_FUNCTIONS: Dict[str, Callable[[metrics.ConfusionCounts], float]] = {
    "sensitivity": metrics.sensitivity,
    "accuracy": metrics.accuracy,
    "fscore": metrics.f_score,
}


def check_energy_kind(kind: str) -> str:
    if kind not in _ENERGY_FUNCTIONS:
        raise ScreeningError(f"unknown energy function {kind!r}; expected one of {'|'.join(ENERGY_KINDS)}")
    return kind


def energy(kind: str, predictions: Sequence[int], truth: Sequence[int], positive_class: int = 1) -> float:
    """Sensitivity, Accuracy or F-score of binary predictions against the truth."""
    check_energy_kind(kind)
    return _ENERGY_FUNCTIONS[kind](metrics.confusion(predictions, truth, positive_class))


@dataclass(frozen=True)
class SearchStep:
    """One energy evaluation made by a search.

    `candidate` is the classifier tried (None when the whole initial subset
    is evaluated), `subset` the members evaluated.
    """
    candidate: Optional[int]
    subset: Tuple[int, ...]
    energy: float
    accepted: bool
    phase: str = "pass"


@dataclass(frozen=True)
class SearchResult:
    method: str
    selected: Tuple[int, ...]
    energy: float
    trace: Tuple[SearchStep, ...]

    @property
    def candidate_evaluations(self) -> int:
        return sum(1 for step in self.trace if step.phase == "pass")


class EnsembleObjective:
    """The energy E of any member subset, fused with a fixed strategy.

    Member scores on the evaluation data are computed once; subset energies
    are memoized. For weighted majority voting the weights of a subset are the
    members' own energies, normalized over the subset.
    """

    def __init__(self, member_scores: np.ndarray, truth: np.ndarray, strategy: str, energy_kind: str,
                 positive_class: int = 1, product_epsilon: float = 0.0):
        if member_scores.ndim != 3 or member_scores.shape[0] == 0:
            raise ScreeningError("member scores must have shape (n_members, n_samples, n_classes)")
        if member_scores.shape[2] != 2:
            raise NotBinaryError(f"energy functions need 2 classes, got {member_scores.shape[2]}")
        self.member_scores = member_scores
        self.truth = np.asarray(truth)
        self.strategy = check_strategy(strategy)
        self.energy_kind = check_energy_kind(energy_kind)
        self.positive_class = positive_class
        self.product_epsilon = product_epsilon
        self._cache: Dict[Tuple[int, ...], float] = {}
        self._member_energies: Optional[np.ndarray] = None

    @classmethod
    def from_pool(cls, pool: Sequence[TrainedClassifier], strategy: str, energy_kind: str,
                  eval_data: LabeledData, product_epsilon: float = 0.0) -> "EnsembleObjective":
        if not pool:
            raise ScreeningError("the classifier pool is empty")
        return cls(stack_member_scores(pool, eval_data.features), eval_data.labels,
                   strategy, energy_kind, product_epsilon=product_epsilon)

    @property
    def n_members(self) -> int:
        return int(self.member_scores.shape[0])

    @property
    def member_energies(self) -> np.ndarray:
        if self._member_energies is None:
            decisions = np.argmax(self.member_scores, axis=2)
            self._member_energies = np.array(
                [energy(self.energy_kind, decisions[j], self.truth, self.positive_class)
                 for j in range(self.n_members)]
            )
        return self._member_energies

    def weights_for(self, subset: Sequence[int]) -> Optional[Tuple[float, ...]]:
        if self.strategy != "wmaj":
            return None
        beta = self.member_energies[list(subset)]
        total = beta.sum()
        if total <= 0.0:
            logger.warning(f"All members of {tuple(subset)} have zero {self.energy_kind}; using equal weights")
            return tuple([1.0 / len(subset)] * len(subset))
        return tuple(float(b) for b in beta / total)

    def predict(self, subset: Sequence[int], member_scores: Optional[np.ndarray] = None) -> np.ndarray:
        """Fused decisions of `subset`, on the evaluation data or on other stacked scores."""
        scores = self.member_scores if member_scores is None else member_scores
        chosen = list(subset)
        return fuse_scores(scores[chosen], self.strategy, self.weights_for(chosen), self.product_epsilon)

    def __call__(self, subset: Sequence[int]) -> float:
        key = tuple(sorted(subset))
        if not key:
            raise ScreeningError("cannot evaluate an empty ensemble")
        if key not in self._cache:
            self._cache[key] = energy(self.energy_kind, self.predict(key), self.truth, self.positive_class)
        return self._cache[key]


def _log_step(method: str, step: SearchStep) -> None:
    logger.debug(f"{method}: candidate={step.candidate} subset={step.subset} "
                 f"energy={step.energy:.6f} accepted={step.accepted}")


def _best_single(objective: EnsembleObjective, trace: List[SearchStep], method: str) -> Tuple[int, float]:
    energies = [objective((i,)) for i in range(objective.n_members)]
    best = 0
    for i, e in enumerate(energies):
        if e > energies[best]:
            best = i
    for i, e in enumerate(energies):
        step = SearchStep(i, (i,), e, i == best, phase="init")
        trace.append(step)
        _log_step(method, step)
    return best, energies[best]


def search_forward(objective: EnsembleObjective, mode: str = "single_pass") -> SearchResult:
    trace: List[SearchStep] = []
    best, e_best = _best_single(objective, trace, "forward")
    selected: Tuple[int, ...] = (best,)
    while True:
        changed = False
        for i in range(objective.n_members):
            if i in selected:
                continue
            candidate = tuple(sorted(selected + (i,)))
            e = objective(candidate)
            accepted = e > e_best
            step = SearchStep(i, candidate, e, accepted)
            trace.append(step)
            _log_step("forward", step)
            if accepted:
                selected, e_best, changed = candidate, e, True
        if mode == "single_pass" or not changed:
            break
    return SearchResult("forward", selected, e_best, tuple(trace))


def search_backward(objective: EnsembleObjective, mode: str = "single_pass") -> SearchResult:
    selected = tuple(range(objective.n_members))
    e_best = objective(selected)
    trace: List[SearchStep] = [SearchStep(None, selected, e_best, True, phase="init")]
    _log_step("backward", trace[0])
    while True:
        changed = False
        for i in tuple(selected):
            if len(selected) == 1:
                break
            candidate = tuple(j for j in selected if j != i)
            e = objective(candidate)
            accepted = e > e_best
            step = SearchStep(i, candidate, e, accepted)
            trace.append(step)
            _log_step("backward", step)
            if accepted:
                selected, e_best, changed = candidate, e, True
        if mode == "single_pass" or not changed:
            break
    return SearchResult("backward", selected, e_best, tuple(trace))


def search_all(objective: EnsembleObjective) -> SearchResult:
    selected = tuple(range(objective.n_members))
    e = objective(selected)
    return SearchResult("all", selected, e, (SearchStep(None, selected, e, True, phase="init"),))


def search_single_best(objective: EnsembleObjective) -> SearchResult:
    trace: List[SearchStep] = []
    best, e_best = _best_single(objective, trace, "single_best")
    return SearchResult("single_best", (best,), e_best, tuple(trace))


def search_exhaustive(objective: EnsembleObjective) -> SearchResult:
    """Global optimum over all non-empty subsets; the first subset in
    size-then-lexicographic order wins ties."""
    n = objective.n_members
    if n > EXHAUSTIVE_LIMIT:
        raise ScreeningError(f"exhaustive search is limited to {EXHAUSTIVE_LIMIT} members, pool has {n}")
    trace: List[SearchStep] = []
    best: Tuple[int, ...] = ()
    e_best = -math.inf
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            e = objective(subset)
            accepted = e > e_best
            if accepted:
                best, e_best = subset, e
            trace.append(SearchStep(None, subset, e, accepted, phase="init"))
    return SearchResult("exhaustive", best, e_best, tuple(trace))


def run_search(method: str, objective: EnsembleObjective, mode: str = "single_pass") -> SearchResult:
    if mode not in SEARCH_MODES:
        raise ScreeningError(f"unknown search mode {mode!r}; expected one of {'|'.join(SEARCH_MODES)}")
    if method == "forward":
        return search_forward(objective, mode)
    if method == "backward":
        return search_backward(objective, mode)
    if method == "all":
        return search_all(objective)
    if method == "single_best":
        return search_single_best(objective)
    if method == "exhaustive":
        return search_exhaustive(objective)
    raise ScreeningError(f"unknown search method {method!r}; expected one of {'|'.join(SEARCH_METHODS)}")


def forward_search(pool: Sequence[TrainedClassifier], strategy: str, energy_kind: str,
                   eval_data: LabeledData, mode: str = "single_pass",
                   product_epsilon: float = 0.0) -> SearchResult:
    objective = EnsembleObjective.from_pool(pool, strategy, energy_kind, eval_data, product_epsilon)
    return run_search("forward", objective, mode)


def backward_search(pool: Sequence[TrainedClassifier], strategy: str, energy_kind: str,
                    eval_data: LabeledData, mode: str = "single_pass",
                    product_epsilon: float = 0.0) -> SearchResult:
    objective = EnsembleObjective.from_pool(pool, strategy, energy_kind, eval_data, product_epsilon)
    return run_search("backward", objective, mode)


def select_all(pool: Sequence[TrainedClassifier], strategy: str, energy_kind: str,
               eval_data: LabeledData, product_epsilon: float = 0.0) -> SearchResult:
    if not pool:
        raise ScreeningError("the classifier pool is empty")
    objective = EnsembleObjective.from_pool(pool, strategy, energy_kind, eval_data, product_epsilon)
    return search_all(objective)


def select_single_best(pool: Sequence[TrainedClassifier], strategy: str, energy_kind: str,
                       eval_data: LabeledData, product_epsilon: float = 0.0) -> SearchResult:
    objective = EnsembleObjective.from_pool(pool, strategy, energy_kind, eval_data, product_epsilon)
    return search_single_best(objective)


def select_exhaustive(pool: Sequence[TrainedClassifier], strategy: str, energy_kind: str,
                      eval_data: LabeledData, product_epsilon: float = 0.0) -> SearchResult:
    objective = EnsembleObjective.from_pool(pool, strategy, energy_kind, eval_data, product_epsilon)
    return search_exhaustive(objective)
