"""Dataset ingestion, scenario labelling, stratified folds and a synthetic
cohort generator, all in the 19-feature screening schema.

CSV files carry the exact header `chi0,...,chi18,grade` with grades 0..3.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from core import (EXUDATES, FEATURE_NAMES, MA_COUNTS, MC_ODC_DISTANCE, N_FEATURES, AMFM_CONFIDENCE,
                  PRESCREEN, QUALITY, FeatureVector, Grade, GradedRecord, LabeledData,
                  validate_feature_vector)
from errors import (BadProportionsError, EmptyAfterFilterError, EmptyFileError, FeatureVectorError,
                    RowValidationError, SchemaError, TooFewSamplesError)

logger = logging.getLogger(__name__)

CSV_HEADER = FEATURE_NAMES + ("grade",)

# Messidor population: R0, R1, R2, R3 image counts out of 1200
MESSIDOR_GRADE_COUNTS = (540, 153, 247, 260)
MESSIDOR_GRADE_PROPORTIONS = tuple(c / sum(MESSIDOR_GRADE_COUNTS) for c in MESSIDOR_GRADE_COUNTS)

PROPORTION_TOLERANCE = 1e-6
MIN_SYNTH_SIZE = 4


@dataclass(frozen=True)
class Dataset:
    """Graded screening records held as a feature matrix plus a grade column."""
    features: np.ndarray
    grades: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        grades = np.array(self.grades, dtype=np.int64)
        if features.ndim != 2 or features.shape[1] != N_FEATURES:
            raise SchemaError(f"expected a matrix with {N_FEATURES} feature columns, got shape {features.shape}")
        if features.shape[0] == 0:
            raise EmptyFileError("a dataset needs at least one record")
        if grades.shape != (features.shape[0],):
            raise SchemaError(f"{features.shape[0]} feature rows but {grades.shape} grades")
        bad = ~np.isin(grades, [g.value for g in Grade])
        if bad.any():
            raise SchemaError(f"grades must be 0..3, found {sorted(set(grades[bad].tolist()))}")
        for row in features:
            validate_feature_vector(row)
        features.setflags(write=False)
        grades.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "grades", grades)

    def __len__(self) -> int:
        return int(self.grades.shape[0])

    def record(self, index: int) -> GradedRecord:
        return GradedRecord(FeatureVector(tuple(float(v) for v in self.features[index])),
                            Grade(int(self.grades[index])))

    def grade_counts(self) -> Tuple[int, ...]:
        return tuple(int(c) for c in np.bincount(self.grades, minlength=len(Grade)))


class Scenario(str, Enum):
    """Binary relabelling of grades."""
    R0_VS_R1 = "r0_vs_r1"
    NODR_VS_DR = "nodr_vs_dr"

    @property
    def admitted_grades(self) -> Tuple[Grade, ...]:
        if self is Scenario.R0_VS_R1:
            return (Grade.R0, Grade.R1)
        return tuple(Grade)

    @property
    def display_name(self) -> str:
        return "R0 vs R1" if self is Scenario.R0_VS_R1 else "No DR/DR"


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every sample position to one of k folds."""
    k: int
    assignment: np.ndarray
    seed: int

    def test_positions(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_positions(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


# CSV

def _parse_row(line: int, row: Sequence[str]) -> Tuple[FeatureVector, int]:
    if len(row) != len(CSV_HEADER):
        raise RowValidationError(line, f"expected {len(CSV_HEADER)} columns, got {len(row)}")
    try:
        vector = validate_feature_vector([float(v) for v in row[:N_FEATURES]])
    except FeatureVectorError as e:
        raise RowValidationError(line, str(e)) from e
    except ValueError as e:
        raise RowValidationError(line, f"non-numeric feature value ({e})") from e
    try:
        grade = int(row[N_FEATURES])
    except ValueError:
        raise RowValidationError(line, f"grade must be an integer 0..3, got {row[N_FEATURES]!r}")
    if grade not in (0, 1, 2, 3):
        raise RowValidationError(line, f"grade must be 0..3, got {grade}")
    return vector, grade


def _csv_rows(path: str) -> Iterator[Tuple[int, List[str]]]:
    """Yield (line number, cells) for every data row after checking the header."""
    with open(path, "r", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise EmptyFileError(f"{path} is empty")
        header = [h.strip() for h in header]
        if tuple(header) != CSV_HEADER:
            missing = [h for h in CSV_HEADER if h not in header]
            detail = f"missing {missing}" if missing else f"got {header}"
            raise SchemaError(f"{path}: header must be {','.join(CSV_HEADER)}; {detail}")
        for row in reader:
            if not row:
                continue
            yield reader.line_num, row


def load_csv(path: str) -> Dataset:
    """Read a screening CSV.

    Raises:
        EmptyFileError: no header or no data rows
        SchemaError: wrong header
        RowValidationError: a row fails validation (names its line)
    """
    vectors = []
    grades = []
    for line, row in _csv_rows(path):
        vector, grade = _parse_row(line, row)
        vectors.append(vector.values)
        grades.append(grade)
    if not vectors:
        raise EmptyFileError(f"{path} has a header but no records")
    dataset = Dataset(np.asarray(vectors), np.asarray(grades), provenance=os.path.abspath(path))
    logger.info(f"Loaded {len(dataset)} records from {path} (grade counts {dataset.grade_counts()})")
    return dataset


def audit_csv(path: str) -> List[RowValidationError]:
    """Collect every row problem instead of stopping at the first one.

    Header and empty-file problems still raise.
    """
    problems: List[RowValidationError] = []
    n_rows = 0
    for line, row in _csv_rows(path):
        n_rows += 1
        try:
            _parse_row(line, row)
        except RowValidationError as e:
            problems.append(e)
    if n_rows == 0:
        raise EmptyFileError(f"{path} has a header but no records")
    return problems


def write_csv(dataset: Dataset, path: str) -> None:
    """Write `dataset` so that load_csv reads back exactly the same values."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for features, grade in zip(dataset.features, dataset.grades):
            writer.writerow([repr(float(v)) for v in features] + [int(grade)])
    logger.info(f"Wrote {len(dataset)} records to {path}")


# Scenarios and folds

def apply_scenario(data: Dataset, scenario: Scenario) -> LabeledData:
    """Binary labels: R1 (R0 vs R1) or R1..R3 (No DR/DR) positive, R0 negative.

    Raises:
        EmptyAfterFilterError: no record survives or one class is absent
    """
    scenario = Scenario(scenario)
    admitted = np.isin(data.grades, [g.value for g in scenario.admitted_grades])
    positions = np.flatnonzero(admitted)
    labels = (data.grades[positions] != Grade.R0).astype(np.int64)
    n_pos = int(labels.sum())
    n_neg = int(labels.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise EmptyAfterFilterError(
            f"scenario {scenario.value} leaves {n_neg} negative and {n_pos} positive records"
        )
    logger.info(f"Scenario {scenario.display_name}: {n_neg} negative, {n_pos} positive records")
    return LabeledData(data.features[positions], labels, n_classes=2, indices=positions)


def stratified_kfold(data: LabeledData, k: int, seed: int) -> FoldPlan:
    """Seeded stratified assignment of samples to k folds.

    Within each class the samples are shuffled; the classes are then laid end
    to end and dealt round-robin, so per-class fold counts differ by at most
    one and so do fold sizes.

    Raises:
        TooFewSamplesError: k < 2 or some class has fewer than k samples
    """
    if k < 2:
        raise TooFewSamplesError(f"k must be at least 2, got {k}")
    counts = data.class_counts()
    if counts.min() < k:
        raise TooFewSamplesError(f"{k}-fold stratification needs {k} samples per class, class counts {counts.tolist()}")
    rng = np.random.default_rng(seed)
    dealt = np.concatenate([rng.permutation(np.flatnonzero(data.labels == c)) for c in range(data.n_classes)])
    assignment = np.empty(len(data), dtype=np.int64)
    assignment[dealt] = np.arange(dealt.shape[0]) % k
    assignment.setflags(write=False)
    return FoldPlan(k=k, assignment=assignment, seed=seed)


def stratified_holdout(labels: np.ndarray, fraction: float, seed: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Split positions 0..n-1 into (fit, held-out), keeping every class on both sides.

    Raises:
        TooFewSamplesError: a class has fewer than 2 samples
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(list(seed))
    fit: List[np.ndarray] = []
    held: List[np.ndarray] = []
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        if members.shape[0] < 2:
            raise TooFewSamplesError(f"class {c} has {members.shape[0]} training sample(s), cannot hold one out")
        n_held = min(max(1, int(round(members.shape[0] * fraction))), members.shape[0] - 1)
        held.append(members[:n_held])
        fit.append(members[n_held:])
    return np.sort(np.concatenate(fit)), np.sort(np.concatenate(held))


# Synthetic cohorts

def apportion(n: int, proportions: Sequence[float]) -> Tuple[int, ...]:
    """Largest-remainder rounding of n * proportions; ties go to the lower grade."""
    total = sum(proportions)
    # rounded so that e.g. 1200 * 0.45 floors to 540, not 539
    quotas = [round(n * p / total, 9) for p in proportions]
    counts = [int(q) for q in quotas]
    remainders = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in remainders[: n - sum(counts)]:
        counts[i] += 1
    return tuple(counts)


def check_proportions(proportions: Sequence[float]) -> None:
    """Raise BadProportionsError unless `proportions` is one non-negative weight per grade summing to 1."""
    if len(proportions) != len(Grade):
        raise BadProportionsError(f"need {len(Grade)} grade proportions, got {len(proportions)}")
    if any(p < 0 for p in proportions):
        raise BadProportionsError(f"proportions must be non-negative, got {list(proportions)}")
    if abs(sum(proportions) - 1.0) > PROPORTION_TOLERANCE:
        raise BadProportionsError(f"proportions must sum to 1, got {sum(proportions)}")


def generate_synthetic(n: int, grade_proportions: Sequence[float], separation: float, seed: int) -> Dataset:
    """Draw a cohort whose feature distributions shift with the grade.

    Every grade effect scales with `separation`; at 0 the features do not
    depend on the grade at all. MA counts are nested across confidence
    levels (a lesion found at a high confidence is also found at every lower
    one), so counts decrease with the confidence index.
    """
    if n < MIN_SYNTH_SIZE:
        raise BadProportionsError(f"n must be at least {MIN_SYNTH_SIZE}, got {n}")
    check_proportions(grade_proportions)
    if separation < 0:
        raise BadProportionsError(f"separation must be non-negative, got {separation}")
    counts = apportion(n, grade_proportions)
    rng = np.random.default_rng(seed)
    grades = rng.permutation(np.repeat(np.arange(len(Grade)), counts))
    effect = separation * grades.astype(np.float64)

    features = np.zeros((n, N_FEATURES))
    features[:, QUALITY] = rng.beta(8.0, 2.0 * (1.0 + 0.1 * effect))
    prescreen_rate = 0.5 + 0.5 * np.tanh(0.6 * separation * (grades - 0.5))
    features[:, PRESCREEN] = (rng.random(n) < prescreen_rate).astype(np.float64)

    ma_columns = range(MA_COUNTS.start, MA_COUNTS.stop)
    ma_means = np.array([8.0 * 0.7 ** c for c in range(len(ma_columns))])
    scale = 1.0 + 0.6 * effect
    counts_at = rng.poisson(ma_means[-1] * scale).astype(np.float64)
    features[:, MA_COUNTS.stop - 1] = counts_at
    for c in range(len(ma_columns) - 2, -1, -1):
        counts_at = counts_at + rng.poisson((ma_means[c] - ma_means[c + 1]) * scale)
        features[:, MA_COUNTS.start + c] = counts_at

    for c, column in enumerate(range(EXUDATES.start, EXUDATES.stop)):
        features[:, column] = rng.gamma(1.0, 0.05 * 0.8 ** c * (1.0 + 0.6 * effect))

    features[:, MC_ODC_DISTANCE] = np.abs(rng.normal(0.5 * (1.0 + 0.05 * effect), 0.03 * (1.0 + 0.1 * effect)))
    features[:, AMFM_CONFIDENCE] = rng.gamma(2.0, 0.1 * (1.0 + 0.5 * effect))

    provenance = (f"synthetic(n={n}, proportions={list(grade_proportions)}, "
                  f"separation={separation}, seed={seed})")
    dataset = Dataset(features, grades, provenance=provenance)
    logger.info(f"Generated {n} synthetic records, grade counts {dataset.grade_counts()}")
    return dataset
