import numpy as np
import pytest

import metrics
from errors import LengthMismatchError, OneClassOnlyError
from metrics import ConfusionCounts
from selection import energy


class TestConfusion:
    def test_perfect(self):
        assert metrics.confusion([1, 1, 0], [1, 1, 0]) == ConfusionCounts(tp=2, fp=0, tn=1, fn=0)

    def test_constant_predictor(self):
        counts = metrics.confusion([1, 1, 1, 1], [1, 0, 1, 0])
        assert (counts.tp, counts.fp) == (2, 2)

    def test_swapping_positive_class(self):
        pred = [1, 0, 1, 1, 0, 0, 1]
        truth = [1, 1, 0, 1, 0, 1, 0]
        a = metrics.confusion(pred, truth, positive_class=1)
        b = metrics.confusion(pred, truth, positive_class=0)
        assert (a.tp, a.fp, a.tn, a.fn) == (b.tn, b.fn, b.tp, b.fp)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            metrics.confusion([1, 0], [1])
        with pytest.raises(LengthMismatchError):
            metrics.confusion([], [])


class TestRatios:
    def test_hand_built_counts(self):
        counts = ConfusionCounts(tp=4, fp=2, tn=6, fn=2)
        assert metrics.sensitivity(counts) == 4 / 6
        assert metrics.specificity(counts) == 6 / 8
        assert metrics.accuracy(counts) == 10 / 14
        assert metrics.f_score(counts) == 2 / 3

    def test_specificity_examples(self):
        assert metrics.specificity(ConfusionCounts(tp=0, fp=9, tn=91, fn=0)) == 0.91
        assert metrics.specificity(ConfusionCounts(tp=3, fp=0, tn=5, fn=1)) == 1.0

    def test_zero_denominators(self):
        empty = ConfusionCounts(tp=0, fp=0, tn=0, fn=0)
        assert metrics.sensitivity(empty) == 0.0
        assert metrics.specificity(empty) == 0.0
        assert metrics.accuracy(empty) == 0.0
        assert metrics.f_score(empty) == 0.0

    def test_label_inversion_swaps_sensitivity_and_specificity(self):
        rng = np.random.default_rng(2)
        pred = rng.integers(0, 2, 500)
        truth = rng.integers(0, 2, 500)
        pos = metrics.confusion(pred, truth, positive_class=1)
        neg = metrics.confusion(pred, truth, positive_class=0)
        assert metrics.sensitivity(pos) == metrics.specificity(neg)
        assert metrics.specificity(pos) == metrics.sensitivity(neg)

    def test_agrees_with_energy_functions(self):
        rng = np.random.default_rng(6)
        pred = rng.integers(0, 2, 300)
        truth = rng.integers(0, 2, 300)
        counts = metrics.confusion(pred, truth)
        assert energy("sensitivity", pred, truth) == metrics.sensitivity(counts)
        assert energy("accuracy", pred, truth) == metrics.accuracy(counts)
        assert energy("fscore", pred, truth) == metrics.f_score(counts)


class TestRocAuc:
    def test_perfect_separation(self):
        assert metrics.roc_auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]).auc == 1.0

    def test_all_tied(self):
        curve = metrics.roc_auc([0.5] * 6, [1, 0, 1, 0, 0, 1])
        assert curve.auc == 0.5
        assert curve.points == ((0.0, 0.0), (1.0, 1.0))

    def test_hand_case(self):
        assert metrics.roc_auc([0.9, 0.4, 0.8, 0.2], [1, 1, 0, 0]).auc == 0.75

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.random(400)
        truth = (rng.random(400) < scores).astype(int)
        base = metrics.roc_auc(scores, truth).auc
        assert abs(metrics.roc_auc(np.exp(3.0 * scores), truth).auc - base) <= 1e-12
        assert abs(metrics.roc_auc(scores ** 3, truth).auc - base) <= 1e-12

    def test_label_flip_complements(self):
        rng = np.random.default_rng(12)
        scores = np.round(rng.random(300), 2)
        truth = rng.integers(0, 2, 300)
        base = metrics.roc_auc(scores, truth).auc
        assert abs(metrics.roc_auc(scores, truth, positive_class=0).auc - (1.0 - base)) <= 1e-12
        assert abs(metrics.roc_auc(-scores, truth).auc - (1.0 - base)) <= 1e-12

    def test_curve_is_monotone_between_corners(self):
        rng = np.random.default_rng(13)
        scores = np.round(rng.random(250), 1)
        truth = rng.integers(0, 2, 250)
        points = np.array(metrics.roc_auc(scores, truth).points)
        assert tuple(points[0]) == (0.0, 0.0)
        assert tuple(points[-1]) == (1.0, 1.0)
        assert np.all(np.diff(points, axis=0) >= 0.0)

    def test_one_class_only(self):
        with pytest.raises(OneClassOnlyError):
            metrics.roc_auc([0.1, 0.2], [1, 1])

    def test_roc_file(self, tmp_path):
        curve = metrics.roc_auc([0.9, 0.4, 0.8, 0.2, 0.4], [1, 1, 0, 0, 0])
        path = str(tmp_path / "roc" / "cell.txt")
        metrics.write_roc(curve, path)
        assert metrics.read_roc(path) == curve
