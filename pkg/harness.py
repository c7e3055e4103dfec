"""Cross-validated ensemble experiments and their reports.

For every scenario and fold the classifier pool is trained on the training
split, the ensemble is searched with the energy evaluated on a validation
slice of that split (or the whole split), and the fused ensemble is scored
on the untouched test fold. Cells of the (search, energy, strategy) grid
report fold-mean Sensitivity/Specificity/Accuracy and a pooled ROC/AUC.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

import metrics
from classifiers import LearnerSpec, train
from core import LabeledData
from dataio import (MIN_SYNTH_SIZE, Dataset, FoldPlan, Scenario, apply_scenario, check_proportions,
                    generate_synthetic, load_csv, stratified_holdout, stratified_kfold)
from errors import BadProportionsError, ConfigError, FoldError
from fusion import STRATEGIES, fuse_scores, fused_positive_scores, stack_member_scores
from selection import ENERGY_KINDS, SEARCH_METHODS, SEARCH_MODES, EnsembleObjective, SearchResult, run_search

logger = logging.getLogger(__name__)

ENERGY_ON = ("validation", "train")
POSITIVE_CLASS = 1
MANIFEST_NAME = "manifest.json"


class Defaults:
    """Values used when a config omits a key."""
    scenario = ("nodr_vs_dr",)
    fusion = ("avg",)
    search = ("backward",)
    energy = ("accuracy",)
    k = 10
    seed = 0
    energy_on = "validation"
    validation_fraction = 0.25
    search_mode = "single_pass"
    product_epsilon = 0.0
    threads = None
    out_dir = "results"


@dataclass(frozen=True)
class SynthParams:
    n: int
    proportions: Tuple[float, ...]
    separation: float
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment: data, grid axes, CV protocol and output location."""
    pool: Tuple[LearnerSpec, ...]
    data_path: Optional[str] = None
    synth: Optional[SynthParams] = None
    scenarios: Tuple[Scenario, ...] = tuple(Scenario(s) for s in Defaults.scenario)
    fusion: Tuple[str, ...] = Defaults.fusion
    search: Tuple[str, ...] = Defaults.search
    energy: Tuple[str, ...] = Defaults.energy
    k: int = Defaults.k
    seed: int = Defaults.seed
    energy_on: str = Defaults.energy_on
    validation_fraction: float = Defaults.validation_fraction
    search_mode: str = Defaults.search_mode
    product_epsilon: float = Defaults.product_epsilon
    threads: Optional[int] = Defaults.threads
    out_dir: str = Defaults.out_dir

    def __post_init__(self):
        if (self.data_path is None) == (self.synth is None):
            raise ConfigError("data", "give exactly one of data.path or data.synth")
        if not self.pool:
            raise ConfigError("pool", "the classifier pool is empty")
        _check_axis("scenario", [s.value for s in self.scenarios], [s.value for s in Scenario])
        _check_axis("fusion", self.fusion, STRATEGIES)
        _check_axis("search", self.search, SEARCH_METHODS)
        _check_axis("energy", self.energy, ENERGY_KINDS)
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 2:
            raise ConfigError("cv.k", f"must be an integer >= 2, got {self.k!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("cv.seed", f"must be a non-negative integer, got {self.seed!r}")
        if self.energy_on not in ENERGY_ON:
            raise ConfigError("energy_on", f"must be one of {'|'.join(ENERGY_ON)}, got {self.energy_on!r}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction", f"must be in (0, 1), got {self.validation_fraction!r}")
        if self.search_mode not in SEARCH_MODES:
            raise ConfigError("search_mode", f"must be one of {'|'.join(SEARCH_MODES)}, got {self.search_mode!r}")
        if not 0.0 <= self.product_epsilon < 1.0:
            raise ConfigError("product_epsilon", f"must be in [0, 1), got {self.product_epsilon!r}")
        if self.threads is not None and (isinstance(self.threads, bool) or not isinstance(self.threads, int)
                                         or self.threads < 1):
            raise ConfigError("threads", f"must be a positive integer or null, got {self.threads!r}")
        if self.synth is not None:
            _check_synth(self.synth)

    def to_mapping(self) -> Dict[str, Any]:
        """Config echo for the manifest. Execution settings (threads, out_dir) are left out
        so that they cannot change the manifest bytes."""
        if self.data_path is not None:
            data: Dict[str, Any] = {"path": self.data_path}
        else:
            data = {"synth": {"n": self.synth.n, "proportions": list(self.synth.proportions),
                              "separation": self.synth.separation, "seed": self.synth.seed}}
        return {
            "data": data,
            "scenario": [s.value for s in self.scenarios],
            "pool": [spec.to_mapping() for spec in self.pool],
            "fusion": list(self.fusion),
            "search": list(self.search),
            "energy": list(self.energy),
            "cv": {"k": self.k, "seed": self.seed},
            "energy_on": self.energy_on,
            "validation_fraction": self.validation_fraction,
            "search_mode": self.search_mode,
            "product_epsilon": self.product_epsilon,
        }


def _check_axis(key: str, values: Sequence[str], vocabulary: Sequence[str]) -> None:
    if not values:
        raise ConfigError(key, "needs at least one value")
    for value in values:
        if value not in vocabulary:
            raise ConfigError(key, f"unknown value {value!r}; expected one of {'|'.join(vocabulary)}")
    if len(set(values)) != len(values):
        raise ConfigError(key, f"duplicate values in {list(values)}")


def _check_synth(synth: SynthParams) -> None:
    if isinstance(synth.n, bool) or not isinstance(synth.n, int) or synth.n < MIN_SYNTH_SIZE:
        raise ConfigError("data.synth.n", f"must be an integer >= {MIN_SYNTH_SIZE}, got {synth.n!r}")
    try:
        check_proportions(synth.proportions)
    except BadProportionsError as e:
        raise ConfigError("data.synth.proportions", str(e)) from e
    if not synth.separation >= 0.0:
        raise ConfigError("data.synth.separation", f"must be non-negative, got {synth.separation!r}")
    if isinstance(synth.seed, bool) or not isinstance(synth.seed, int) or synth.seed < 0:
        raise ConfigError("data.synth.seed", f"must be a non-negative integer, got {synth.seed!r}")


class CellKey(NamedTuple):
    scenario: str
    search: str
    energy: str
    strategy: str

    @property
    def slug(self) -> str:
        return "_".join(self)


@dataclass(frozen=True)
class FoldCellResult:
    """Outcome of one grid cell on one test fold."""
    fold: int
    selected: Tuple[int, ...]
    roster: Tuple[str, ...]
    search_energy: float
    weights: Optional[Tuple[float, ...]]
    test_indices: Tuple[int, ...]
    truth: Tuple[int, ...]
    predictions: Tuple[int, ...]
    positive_scores: Tuple[float, ...]
    counts: metrics.ConfusionCounts
    trace: Tuple[Any, ...] = ()

    @property
    def sensitivity(self) -> float:
        return metrics.sensitivity(self.counts)

    @property
    def specificity(self) -> float:
        return metrics.specificity(self.counts)

    @property
    def accuracy(self) -> float:
        return metrics.accuracy(self.counts)


@dataclass(frozen=True)
class CellResult:
    key: CellKey
    folds: Tuple[FoldCellResult, ...]
    sensitivity: float
    specificity: float
    accuracy: float
    roc: metrics.RocCurve
    modal_roster: Tuple[str, ...]


@dataclass(frozen=True)
class FoldAudit:
    """Dataset row indices each stage of a fold saw."""
    scenario: str
    fold: int
    fit_indices: Tuple[int, ...]
    eval_indices: Tuple[int, ...]
    test_indices: Tuple[int, ...]


@dataclass
class EvaluationReport:
    config: ExperimentConfig
    provenance: str
    cells: Dict[CellKey, CellResult] = field(default_factory=dict)
    folds: List[FoldAudit] = field(default_factory=list)

    def cell(self, scenario: str, search: str, energy: str, strategy: str) -> CellResult:
        return self.cells[CellKey(Scenario(scenario).value, search, energy, strategy)]


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.data_path is not None:
        return load_csv(config.data_path)
    synth = config.synth
    return generate_synthetic(synth.n, synth.proportions, synth.separation, synth.seed)


def fold_mean(values: Sequence[float]) -> float:
    """Unweighted mean over folds."""
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def modal_roster(rosters: Sequence[Tuple[str, ...]]) -> Tuple[str, ...]:
    """Most frequent roster; ties go to the roster seen first."""
    counts = Counter(rosters)
    first_seen = {r: i for i, r in reversed(list(enumerate(rosters)))}
    return min(counts, key=lambda r: (-counts[r], first_seen[r]))


def _member_names(pool: Sequence[LearnerSpec]) -> Tuple[str, ...]:
    return tuple(f"D{j + 1}:{spec.name}" for j, spec in enumerate(pool))


def _grid(config: ExperimentConfig) -> List[Tuple[str, str, str]]:
    return [(search, energy, strategy)
            for search in config.search for energy in config.energy for strategy in config.fusion]


def _trace_rows(result: SearchResult) -> Tuple[Any, ...]:
    return tuple((s.candidate, list(s.subset), s.energy, s.accepted, s.phase) for s in result.trace)


def _run_fold(config: ExperimentConfig, labeled: LabeledData, plan: FoldPlan, fold: int,
              scenario: Scenario) -> Tuple[FoldAudit, Dict[CellKey, FoldCellResult]]:
    logger.info(f"{scenario.display_name}: fold {fold + 1}/{plan.k} started")
    train_data = labeled.subset(plan.train_positions(fold))
    test_data = labeled.subset(plan.test_positions(fold))
    if config.energy_on == "validation":
        fit_pos, eval_pos = stratified_holdout(train_data.labels, config.validation_fraction,
                                               (config.seed, fold))
        fit_data = train_data.subset(fit_pos)
        eval_data = train_data.subset(eval_pos)
    else:
        fit_data = eval_data = train_data

    pool = [train(spec, fit_data) for spec in config.pool]
    names = _member_names(config.pool)
    eval_scores = stack_member_scores(pool, eval_data.features)
    test_scores = stack_member_scores(pool, test_data.features)

    objectives: Dict[Tuple[str, str], EnsembleObjective] = {}
    results: Dict[CellKey, FoldCellResult] = {}
    for search, energy_kind, strategy in _grid(config):
        objective = objectives.get((energy_kind, strategy))
        if objective is None:
            objective = EnsembleObjective(eval_scores, eval_data.labels, strategy, energy_kind,
                                          POSITIVE_CLASS, config.product_epsilon)
            objectives[(energy_kind, strategy)] = objective
        found = run_search(search, objective, config.search_mode)
        chosen = list(found.selected)
        weights = objective.weights_for(chosen)
        predictions = fuse_scores(test_scores[chosen], strategy, weights, config.product_epsilon)
        positive = fused_positive_scores(test_scores[chosen], strategy, POSITIVE_CLASS, weights,
                                         config.product_epsilon)
        results[CellKey(scenario.value, search, energy_kind, strategy)] = FoldCellResult(
            fold=fold,
            selected=found.selected,
            roster=tuple(names[j] for j in chosen),
            search_energy=found.energy,
            weights=weights,
            test_indices=tuple(int(i) for i in test_data.indices),
            truth=tuple(int(v) for v in test_data.labels),
            predictions=tuple(int(v) for v in predictions),
            positive_scores=tuple(float(v) for v in positive),
            counts=metrics.confusion(predictions, test_data.labels, POSITIVE_CLASS),
            trace=_trace_rows(found),
        )
    audit = FoldAudit(
        scenario=scenario.value,
        fold=fold,
        fit_indices=tuple(int(i) for i in fit_data.indices),
        eval_indices=tuple(int(i) for i in eval_data.indices),
        test_indices=tuple(int(i) for i in test_data.indices),
    )
    logger.info(f"{scenario.display_name}: fold {fold + 1}/{plan.k} finished")
    return audit, results


def _guarded_fold(config, labeled, plan, fold, scenario):
    try:
        return _run_fold(config, labeled, plan, fold, scenario)
    except Exception as e:
        logger.error(f"{scenario.display_name}: fold {fold} failed: {e}")
        raise FoldError(fold, e) from e


def _assemble_cell(key: CellKey, folds: Sequence[FoldCellResult]) -> CellResult:
    scores = [s for f in folds for s in f.positive_scores]
    truth = [t for f in folds for t in f.truth]
    return CellResult(
        key=key,
        folds=tuple(folds),
        sensitivity=fold_mean([f.sensitivity for f in folds]),
        specificity=fold_mean([f.specificity for f in folds]),
        accuracy=fold_mean([f.accuracy for f in folds]),
        roc=metrics.roc_auc(scores, truth, POSITIVE_CLASS),
        modal_roster=modal_roster([f.roster for f in folds]),
    )


def run_experiment(config: ExperimentConfig, dataset: Optional[Dataset] = None) -> EvaluationReport:
    """Run the full cross-validated grid described by `config`.

    The result depends only on the config and the data; thread count and
    scheduling do not change it.

    Raises:
        FoldError: a fold failed; the original error is its __cause__
    """
    if dataset is None:
        dataset = load_dataset(config)
    report = EvaluationReport(config=config, provenance=dataset.provenance)
    n_jobs = config.threads if config.threads is not None else -1

    for scenario in config.scenarios:
        labeled = apply_scenario(dataset, scenario)
        plan = stratified_kfold(labeled, config.k, config.seed)
        outputs = Parallel(n_jobs=n_jobs, backend="threading")(
            delayed(_guarded_fold)(config, labeled, plan, fold, scenario) for fold in range(plan.k)
        )
        report.folds.extend(audit for audit, _ in outputs)
        for search, energy_kind, strategy in _grid(config):
            key = CellKey(scenario.value, search, energy_kind, strategy)
            cell = _assemble_cell(key, [cells[key] for _, cells in outputs])
            report.cells[key] = cell
            logger.info(f"{scenario.display_name} {search}/{energy_kind}/{strategy}: "
                        f"Sn={cell.sensitivity:.3f} Sp={cell.specificity:.3f} "
                        f"Acc={cell.accuracy:.3f} AUC={cell.roc.auc:.3f}")
    return report


# Reports

def _percent(value: float) -> str:
    return f"{100.0 * value:.0f}%"


def format_cell(sensitivity: float, specificity: float, accuracy: float) -> str:
    return f"{_percent(sensitivity)}/{_percent(specificity)}/{_percent(accuracy)}"


def _write_table(path_stem: str, title: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> List[str]:
    """Write the same table as aligned text and as CSV."""
    widths = [max(len(str(r[i])) for r in [header] + list(rows)) for i in range(len(header))]
    with open(path_stem + ".txt", "w", newline="") as handle:
        handle.write(title + "\n")
        for row in [header] + list(rows):
            handle.write(" | ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")
    with open(path_stem + ".csv", "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return [path_stem + ".txt", path_stem + ".csv"]


def _axis_aggregates(report: EvaluationReport, scenario: str, axis: str) -> List[List[str]]:
    position = CellKey._fields.index(axis)
    values: Dict[str, List[CellResult]] = {}
    for key, cell in report.cells.items():
        if key.scenario == scenario:
            values.setdefault(key[position], []).append(cell)
    rows = []
    for value, cells in values.items():
        rows.append([value,
                     _percent(fold_mean([c.sensitivity for c in cells])),
                     _percent(fold_mean([c.specificity for c in cells])),
                     _percent(fold_mean([c.accuracy for c in cells]))])
    return rows


def emit_report(report: EvaluationReport, out_dir: Optional[str] = None) -> List[str]:
    """Write grid tables, comparison rows, aggregates, ROC files and the manifest.

    Returns:
        Paths of all written files.
    """
    out_dir = out_dir or report.config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    config = report.config
    written: List[str] = []

    for scenario in config.scenarios:
        for search in config.search:
            rows = []
            for strategy in config.fusion:
                row = [strategy]
                for energy_kind in config.energy:
                    cell = report.cells[CellKey(scenario.value, search, energy_kind, strategy)]
                    row.append(format_cell(cell.sensitivity, cell.specificity, cell.accuracy))
                rows.append(row)
            written += _write_table(
                os.path.join(out_dir, f"grid_{scenario.value}_{search}"),
                f"{scenario.display_name}, {search} search: Sensitivity/Specificity/Accuracy",
                ["strategy"] + list(config.energy), rows)

        for axis, label in (("energy", "energy function"), ("search", "search method"),
                            ("strategy", "fusion strategy")):
            written += _write_table(
                os.path.join(out_dir, f"aggregate_{scenario.value}_{axis}"),
                f"{scenario.display_name}: comparison by {label}",
                [label.replace(" ", "_"), "sensitivity", "specificity", "accuracy"],
                _axis_aggregates(report, scenario.value, axis))

    if "all" in config.search:
        energy_kind = "accuracy" if "accuracy" in config.energy else config.energy[0]
        rows = []
        for strategy in config.fusion:
            row = [strategy]
            for scenario in config.scenarios:
                cell = report.cells[CellKey(scenario.value, "all", energy_kind, strategy)]
                row.append(format_cell(cell.sensitivity, cell.specificity, cell.accuracy))
            rows.append(row)
        written += _write_table(os.path.join(out_dir, "all_classifiers"),
                                f"All classifiers (weights from {energy_kind})",
                                ["strategy"] + [s.value for s in config.scenarios], rows)

    comparison = os.path.join(out_dir, "comparison.csv")
    with open(comparison, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["scenario", "search", "energy", "strategy",
                         "sensitivity", "specificity", "accuracy", "auc", "modal_roster"])
        for key, cell in report.cells.items():
            writer.writerow(list(key) + [repr(cell.sensitivity), repr(cell.specificity),
                                         repr(cell.accuracy), repr(cell.roc.auc),
                                         " ".join(cell.modal_roster)])
    written.append(comparison)

    for key, cell in report.cells.items():
        path = os.path.join(out_dir, "roc", f"{key.slug}.txt")
        metrics.write_roc(cell.roc, path)
        written.append(path)

    manifest = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest, "w", newline="") as handle:
        json.dump(build_manifest(report), handle, indent=1)
        handle.write("\n")
    written.append(manifest)

    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written


def build_manifest(report: EvaluationReport) -> Dict[str, Any]:
    return {
        "config": report.config.to_mapping(),
        "provenance": report.provenance,
        "folds": [
            {"scenario": a.scenario, "fold": a.fold, "fit_indices": list(a.fit_indices),
             "eval_indices": list(a.eval_indices), "test_indices": list(a.test_indices)}
            for a in report.folds
        ],
        "cells": [
            {
                "scenario": key.scenario, "search": key.search,
                "energy": key.energy, "strategy": key.strategy,
                "sensitivity": cell.sensitivity, "specificity": cell.specificity,
                "accuracy": cell.accuracy, "auc": cell.roc.auc,
                "modal_roster": list(cell.modal_roster),
                "folds": [
                    {
                        "fold": f.fold, "selected": list(f.selected), "roster": list(f.roster),
                        "search_energy": f.search_energy,
                        "weights": None if f.weights is None else list(f.weights),
                        "test_indices": list(f.test_indices), "truth": list(f.truth),
                        "predictions": list(f.predictions),
                        "positive_scores": list(f.positive_scores),
                        "counts": f.counts.as_dict(),
                        "trace": [list(step) for step in f.trace],
                    }
                    for f in cell.folds
                ],
            }
            for key, cell in report.cells.items()
        ],
    }


def load_manifest(path: str) -> Dict[str, Any]:
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path, "r") as handle:
        return json.load(handle)


def recompute_cells(manifest: Dict[str, Any]) -> Dict[CellKey, Dict[str, float]]:
    """Rebuild every cell's metrics from the persisted per-fold predictions."""
    recomputed = {}
    for cell in manifest["cells"]:
        counts = [metrics.confusion(f["predictions"], f["truth"], POSITIVE_CLASS) for f in cell["folds"]]
        scores = [s for f in cell["folds"] for s in f["positive_scores"]]
        truth = [t for f in cell["folds"] for t in f["truth"]]
        key = CellKey(cell["scenario"], cell["search"], cell["energy"], cell["strategy"])
        recomputed[key] = {
            "sensitivity": fold_mean([metrics.sensitivity(c) for c in counts]),
            "specificity": fold_mean([metrics.specificity(c) for c in counts]),
            "accuracy": fold_mean([metrics.accuracy(c) for c in counts]),
            "auc": metrics.roc_auc(scores, truth, POSITIVE_CLASS).auc,
        }
    return recomputed


def audit_manifest(manifest: Dict[str, Any]) -> List[str]:
    """Problems found in the manifest: test rows that reached training or energy
    evaluation, and folds that do not partition the scenario's records."""
    problems = []
    by_scenario: Dict[str, List[Dict[str, Any]]] = {}
    for fold in manifest["folds"]:
        by_scenario.setdefault(fold["scenario"], []).append(fold)
        test = set(fold["test_indices"])
        leaked = test & (set(fold["fit_indices"]) | set(fold["eval_indices"]))
        if leaked:
            problems.append(f"{fold['scenario']} fold {fold['fold']}: {len(leaked)} test rows used before testing")
    for scenario, folds in by_scenario.items():
        seen: List[int] = [i for f in folds for i in f["test_indices"]]
        if len(seen) != len(set(seen)):
            problems.append(f"{scenario}: test folds overlap")
        trained = set(folds[0]["fit_indices"]) | set(folds[0]["eval_indices"]) | set(folds[0]["test_indices"])
        if set(seen) != trained:
            problems.append(f"{scenario}: test folds do not cover the scenario's records")
    return problems
