import logging

import numpy as np
import pytest

from classifiers import LEARNER_KINDS, AdaBoost, DecisionTree, LearnerSpec, RandomForest, train
from core import N_FEATURES, LabeledData
from conftest import ConstantClassifier
from dataio import Scenario, apply_scenario
from errors import EmptyClassError, LearnerSpecError


def accuracy(model, data):
    return float(np.mean(np.argmax(model.predict_scores(data.features), axis=1) == data.labels))


class TestLearnerSpec:
    def test_name_lists_overrides(self):
        assert LearnerSpec("knn", {"k": 3}).name == "knn(k=3)"
        assert LearnerSpec("naive_bayes").name == "naive_bayes"

    def test_resolved_fills_defaults(self):
        params = LearnerSpec("random_forest", {"n_trees": 4}).resolved()
        assert params["n_trees"] == 4
        assert params["max_features"] == "sqrt"

    def test_from_mapping_round_trip(self):
        spec = LearnerSpec.from_mapping({"kind": "decision_tree", "max_depth": 3})
        assert spec.to_mapping() == {"kind": "decision_tree", "max_depth": 3}

    @pytest.mark.parametrize("kind,params", [
        ("svm", {}),
        ("knn", {"depth": 2}),
        ("knn", {"k": 0}),
        ("knn", {"k": 2.5}),
        ("decision_tree", {"max_depth": True}),
        ("random_forest", {"max_features": "log2"}),
        ("random_forest", {"bootstrap": "yes"}),
        ("naive_bayes", {"var_smoothing": 0}),
    ])
    def test_rejects_invalid(self, kind, params):
        with pytest.raises(LearnerSpecError):
            LearnerSpec(kind, params)


class TestTraining:
    @pytest.mark.parametrize("kind", LEARNER_KINDS)
    def test_scores_are_normalized(self, kind, separable_data):
        model = train(LearnerSpec(kind), separable_data)
        scores = model.predict_scores(separable_data.features)
        assert scores.shape == (len(separable_data), 2)
        assert np.all(scores >= 0.0)
        np.testing.assert_allclose(scores.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("kind", LEARNER_KINDS)
    def test_learns_separable_classes(self, kind, separable_data):
        assert accuracy(train(LearnerSpec(kind), separable_data), separable_data) >= 0.95

    @pytest.mark.parametrize("kind", LEARNER_KINDS)
    def test_training_is_deterministic(self, kind, small_cohort):
        data = apply_scenario(small_cohort, Scenario.NODR_VS_DR)
        first = train(LearnerSpec(kind), data).predict_scores(data.features)
        second = train(LearnerSpec(kind), data).predict_scores(data.features)
        np.testing.assert_array_equal(first, second)

    def test_missing_class(self):
        data = LabeledData(np.zeros((4, N_FEATURES)), [0, 0, 0, 0])
        with pytest.raises(EmptyClassError):
            train(LearnerSpec("knn"), data)

    def test_knn_clamps_k(self, caplog):
        data = LabeledData(np.arange(3 * N_FEATURES, dtype=float).reshape(3, N_FEATURES), [0, 1, 1])
        with caplog.at_level(logging.WARNING):
            model = train(LearnerSpec("knn", {"k": 10}), data)
        assert model.k == 3
        assert "exceeds" in caplog.text

    @pytest.mark.parametrize("kind", ["decision_tree", "random_forest", "adaboost"])
    def test_constant_features_give_the_prior(self, kind, caplog):
        data = LabeledData(np.ones((8, N_FEATURES)), [0, 0, 0, 1, 1, 1, 1, 1])
        with caplog.at_level(logging.WARNING):
            model = train(LearnerSpec(kind), data)
        assert "prior-only" in caplog.text
        np.testing.assert_allclose(model.predict_scores(data.features[:2]), [[3 / 8, 5 / 8]] * 2)


def on_one_feature(values, labels=None):
    features = np.zeros((len(values), N_FEATURES))
    features[:, 5] = values
    return features if labels is None else LabeledData(features, labels)


class TestScoreExamples:
    def test_one_neighbour_recalls_training_points(self):
        data = on_one_feature([0.0, 1.0, 2.0, 3.0, 4.0, 5.0], [0, 1, 0, 1, 1, 0])
        scores = train(LearnerSpec("knn", {"k": 1}), data).predict_scores(data.features)
        np.testing.assert_array_equal(scores[np.arange(len(data)), data.labels], 1.0)

    def test_three_neighbours_voting_two_to_one(self):
        data = on_one_feature([0.0, 1.0, 2.0, 10.0, 11.0], [0, 0, 1, 1, 1])
        model = train(LearnerSpec("knn", {"k": 3}), data)
        np.testing.assert_allclose(model.predict_scores(on_one_feature([0.9])), [[2 / 3, 1 / 3]])

    def test_naive_bayes_is_even_between_symmetric_points(self):
        model = train(LearnerSpec("naive_bayes"), on_one_feature([0.0, 2.0], [0, 1]))
        np.testing.assert_allclose(model.predict_scores(on_one_feature([1.0])), [[0.5, 0.5]])

    def test_forest_averages_disagreeing_trees(self):
        forest = RandomForest("forest", 2, [ConstantClassifier([1.0, 0.0]), ConstantClassifier([0.0, 1.0])])
        np.testing.assert_array_equal(forest.predict_scores(on_one_feature([0.0, 3.0])), [[0.5, 0.5]] * 2)

    def test_adaboost_scores_are_alpha_shares(self):
        stumps = [ConstantClassifier([1.0, 0.0]), ConstantClassifier([0.0, 1.0]), ConstantClassifier([0.2, 0.8])]
        model = AdaBoost("boost", 2, stumps, [1.0, 0.5, 0.25], np.array([0.5, 0.5]))
        np.testing.assert_allclose(model.predict_scores(on_one_feature([0.0])), [[1.0 / 1.75, 0.75 / 1.75]])


class TestTrees:
    def test_depth_limit(self, small_cohort):
        data = apply_scenario(small_cohort, Scenario.NODR_VS_DR)
        tree = train(LearnerSpec("decision_tree", {"max_depth": 2}), data)
        assert isinstance(tree, DecisionTree)
        assert tree.depth <= 2
        assert tree.n_nodes <= 7

    def test_unlimited_tree_fits_distinct_points(self, small_cohort):
        data = apply_scenario(small_cohort, Scenario.NODR_VS_DR)
        assert accuracy(train(LearnerSpec("decision_tree"), data), data) == 1.0

    def test_threshold_is_a_midpoint(self):
        features = np.zeros((4, N_FEATURES))
        features[:, 5] = [1.0, 2.0, 4.0, 6.0]
        tree = train(LearnerSpec("decision_tree"), LabeledData(features, [0, 0, 1, 1]))
        probe = np.zeros((2, N_FEATURES))
        probe[:, 5] = [2.9, 3.1]
        np.testing.assert_array_equal(np.argmax(tree.predict_scores(probe), axis=1), [0, 1])

    @pytest.mark.parametrize("n_trees", [1, 3])
    def test_forest_without_randomness_is_one_tree(self, separable_data, n_trees):
        params = {"n_trees": n_trees, "bootstrap": False, "max_features": None}
        forest = train(LearnerSpec("random_forest", params), separable_data)
        tree = train(LearnerSpec("decision_tree"), separable_data)
        assert isinstance(forest, RandomForest)
        np.testing.assert_allclose(forest.predict_scores(separable_data.features),
                                   tree.predict_scores(separable_data.features))

    def test_forest_seed_changes_trees(self, small_cohort):
        data = apply_scenario(small_cohort, Scenario.NODR_VS_DR)
        a = train(LearnerSpec("random_forest", {"seed": 1}), data).predict_scores(data.features)
        b = train(LearnerSpec("random_forest", {"seed": 2}), data).predict_scores(data.features)
        assert not np.array_equal(a, b)

    def test_adaboost_stops_on_a_perfect_stump(self, separable_data):
        model = train(LearnerSpec("adaboost", {"n_rounds": 10}), separable_data)
        assert isinstance(model, AdaBoost)
        assert len(model.stumps) == 1
        assert accuracy(model, separable_data) == 1.0
