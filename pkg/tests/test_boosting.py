"""Two-stage boosting: configs, the fit loop, selections, and importances."""

import numpy as np
import pytest

from bouts.boosting import (
    BoostConfig,
    BoutsModel,
    feature_importances,
    fit,
    fit_single_task,
    task_specific_features,
    universal_features,
)
from bouts.data import MultitaskDataset, SplitAssignment, TaskDataset
from bouts.errors import DataError
from bouts.multitask import MultitaskTree
from bouts.trees import Tree, TreeParams

STUMPS = TreeParams(max_depth=1, min_samples_leaf=1, min_gain=1e-7)


def make_dataset(Xs, ys, feature_names=None):
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(Xs[0].shape[1])]
    tasks = [
        TaskDataset(
            name=f"task{t}",
            feature_names=list(feature_names),
            X=np.asarray(X, dtype=float),
            y=np.asarray(y, dtype=float),
            sample_ids=[f"task{t}-{i}" for i in range(len(y))],
        )
        for t, (X, y) in enumerate(zip(Xs, ys))
    ]
    return MultitaskDataset(tasks=tasks, candidate_features=list(feature_names))


def all_train_split(dataset):
    T = dataset.n_tasks
    return SplitAssignment(
        seed=0,
        train=[np.arange(t.n_samples) for t in dataset.tasks],
        val=[np.array([], dtype=np.intp) for _ in range(T)],
        test=[np.array([], dtype=np.intp) for _ in range(T)],
    )


def bit_design(n_features, reps=2):
    """All 0/1 combinations of n_features, repeated; balanced and orthogonal."""
    rows = 1 << n_features
    idx = np.arange(rows * reps) % rows
    return np.column_stack([(idx >> j) & 1 for j in range(n_features)]).astype(float)


class TestBoostConfig:
    def test_rejects_bad_rounds(self):
        with pytest.raises(ValueError, match=">= 0"):
            BoostConfig(rounds_universal=-1)
        with pytest.raises(ValueError, match="at least one boosting round"):
            BoostConfig(rounds_universal=0, rounds_task=0)

    def test_rejects_bad_learning_rate(self):
        for beta in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError, match="learning_rate"):
                BoostConfig(learning_rate=beta)

    def test_rejects_negative_penalties(self):
        with pytest.raises(ValueError, match="lambda_u"):
            BoostConfig(lambda_u=-0.5)
        with pytest.raises(ValueError, match="lambda_task"):
            BoostConfig(lambda_task=[0.1, -0.1])

    def test_per_task_penalty_lookup(self):
        cfg = BoostConfig(lambda_task=[0.1, 0.2])
        assert cfg.lambda_for_task(1, 2) == 0.2
        with pytest.raises(ValueError, match="2 entries for 3 tasks"):
            cfg.lambda_for_task(0, 3)
        assert BoostConfig(lambda_task=0.3).lambda_for_task(5, 9) == 0.3

    def test_dict_round_trip(self):
        cfg = BoostConfig(
            rounds_universal=7,
            rounds_task=3,
            learning_rate=0.2,
            lambda_u=1.5,
            lambda_task=[0.1, 0.2],
            tree=TreeParams(max_depth=2, min_samples_leaf=3, min_gain=1e-6),
        )
        clone = BoostConfig.from_dict(cfg.to_dict())
        assert clone.to_dict() == cfg.to_dict()


class TestFitSingleTask:
    def test_zero_rounds(self):
        X = np.zeros((4, 1))
        trees, used, history = fit_single_task(X, np.ones(4), 0, 0.1, used={3})
        assert trees == [] and history == [] and used == {3}

    def test_stump_round_updates_residuals(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        trees, used, history = fit_single_task(X, y, 1, 0.1, params=STUMPS)
        assert len(trees) == 1 and used == {0}
        # Residuals [0, 0, .9, .9] after subtracting 0.1 * {0, 1} leaves.
        assert history == [pytest.approx(np.mean([0, 0, 0.81, 0.81]))]

    def test_constant_target_fits_intercept_stumps(self):
        X = np.array([[1.0], [2.0]])
        trees, used, history = fit_single_task(X, np.full(2, 5.0), 3, 0.1, params=STUMPS)
        assert [t.is_stump_leaf for t in trees] == [True, True, True]
        assert used == set()
        assert [t.value[0] for t in trees] == pytest.approx([5.0, 4.5, 4.05])

    def test_zero_target_stops_immediately(self):
        X = np.array([[1.0], [2.0]])
        trees, used, history = fit_single_task(X, np.zeros(2), 50, 0.1, params=STUMPS)
        assert trees == [] and history == []

    def test_mse_history_is_monotone(self):
        rng = np.random.default_rng(21)
        X = rng.normal(size=(80, 4))
        y = np.sin(2 * X[:, 0]) + X[:, 1] ** 2 + 0.1 * rng.normal(size=80)
        _, _, history = fit_single_task(X, y, 40, 0.1, params=TreeParams(min_samples_leaf=3))
        assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))

    def test_on_round_residual_replay(self):
        rng = np.random.default_rng(22)
        X = rng.normal(size=(50, 3))
        y = X[:, 0] + 0.5 * rng.normal(size=50)
        seen = []
        trees, _, _ = fit_single_task(
            X, y, 10, 0.3, params=STUMPS, on_round=lambda b, r: seen.append((b, r))
        )
        assert [b for b, _ in seen] == list(range(1, len(trees) + 1))
        replay = y.astype(float).copy()
        for (b, captured), tree in zip(seen, trees):
            replay -= 0.3 * tree.predict(X)
            np.testing.assert_allclose(captured, replay, atol=1e-12)

    def test_penalty_excludes_weak_feature_once_strong_exists(self):
        X = bit_design(2, reps=8)
        y = 2.0 * X[:, 0] + 0.1 * X[:, 1]
        y = y - y.mean()
        # Gains: f0 starts at 1.0 and decays; f1 never exceeds 0.0025.
        trees, used, _ = fit_single_task(X, y, 60, 0.1, lam=0.5, params=STUMPS)
        assert used == {0}
        _, used_free, _ = fit_single_task(X, y, 60, 0.1, lam=0.0, params=STUMPS)
        assert used_free == {0, 1}


class TestFit:
    def two_task_dataset(self):
        X = bit_design(3, reps=2)
        y0 = 2.0 * X[:, 0] + 1.0 * X[:, 1]
        y1 = 2.0 * X[:, 0] + 1.0 * X[:, 2]
        ys = [y - y.mean() for y in (y0, y1)]
        return make_dataset([X, X], ys)

    def test_universal_and_task_specific_recovery(self):
        data = self.two_task_dataset()
        cfg = BoostConfig(
            rounds_universal=100,
            rounds_task=100,
            learning_rate=0.1,
            lambda_u=0.5,
            lambda_task=0.01,
            tree=TreeParams(max_depth=3, min_samples_leaf=2, min_gain=1e-7),
        )
        model = fit(data, all_train_split(data), cfg)
        assert universal_features(model) == ["f0"]
        assert task_specific_features(model, 0) == ["f1"]
        assert task_specific_features(model, 1) == ["f2"]
        # The sets are disjoint by construction of the definitions.
        for t in range(2):
            assert not set(task_specific_features(model, t)) & set(universal_features(model))

    def test_stage_mse_histories_monotone_per_task(self):
        data = self.two_task_dataset()
        cfg = BoostConfig(rounds_universal=30, rounds_task=30, learning_rate=0.2,
                          tree=TreeParams(min_samples_leaf=2))
        model = fit(data, all_train_split(data), cfg)
        uni = np.asarray(model.universal_mse)
        assert uni.shape[1] == 2
        for col in uni.T:
            assert all(b <= a + 1e-12 for a, b in zip(col, col[1:]))
        for hist in model.task_mse:
            assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))

    def test_predictions_match_residual_stream(self):
        data = self.two_task_dataset()
        cfg = BoostConfig(rounds_universal=20, rounds_task=20, learning_rate=0.1,
                          tree=TreeParams(min_samples_leaf=2))
        last = {}

        def on_round(stage, info, res):
            if stage == "universal":
                for t, r in enumerate(res):
                    last[t] = r
            else:
                last[info[0]] = res

        model = fit(data, all_train_split(data), cfg, on_round=on_round)
        for t, task in enumerate(data.tasks):
            final = task.y - model.predict(t, task.X)
            np.testing.assert_allclose(final, last[t], atol=1e-10)

    def test_no_universal_stage_equals_independent_boosting(self):
        rng = np.random.default_rng(23)
        Xs = [rng.normal(size=(60, 4)) for _ in range(2)]
        ys = [np.sin(X[:, 0]) + 0.3 * X[:, 2] for X in Xs]
        ys = [y - y.mean() for y in ys]
        data = make_dataset(Xs, ys)
        params = TreeParams(max_depth=2, min_samples_leaf=3)
        cfg = BoostConfig(rounds_universal=0, rounds_task=25, learning_rate=0.1,
                          lambda_task=0.05, tree=params)
        model = fit(data, all_train_split(data), cfg)
        assert model.universal_trees == []
        for t in range(2):
            solo, _, _ = fit_single_task(Xs[t], ys[t], 25, 0.1, lam=0.05, params=params)
            assert len(solo) == len(model.task_trees[t])
            for a, b in zip(solo, model.task_trees[t]):
                assert a.to_dict() == b.to_dict()

    def test_single_task_universal_stage_matches_plain_boosting(self):
        rng = np.random.default_rng(24)
        X = rng.normal(size=(70, 4))
        y = X[:, 1] - 0.5 * X[:, 3] + 0.1 * rng.normal(size=70)
        y = y - y.mean()
        params = TreeParams(max_depth=3, min_samples_leaf=3)
        data = make_dataset([X], [y])
        cfg = BoostConfig(rounds_universal=20, rounds_task=0, learning_rate=0.1,
                          lambda_u=0.2, tree=params)
        model = fit(data, all_train_split(data), cfg)
        solo, _, _ = fit_single_task(X, y, 20, 0.1, lam=0.2, params=params)
        assert len(model.universal_trees) == len(solo)
        for mtree, tree in zip(model.universal_trees, solo):
            assert mtree.task_tree(0).to_dict() == tree.to_dict()

    def test_empty_training_partition_rejected(self):
        data = self.two_task_dataset()
        split = all_train_split(data)
        split.train[1] = np.array([], dtype=np.intp)
        with pytest.raises(DataError, match="empty training partition"):
            fit(data, split, BoostConfig())

    def test_predict_validates_width(self):
        data = self.two_task_dataset()
        cfg = BoostConfig(rounds_universal=2, rounds_task=0,
                          tree=TreeParams(min_samples_leaf=2))
        model = fit(data, all_train_split(data), cfg)
        with pytest.raises(DataError, match="feature columns"):
            model.predict(0, np.zeros((4, 7)))

    def test_model_dict_round_trip(self):
        data = self.two_task_dataset()
        cfg = BoostConfig(rounds_universal=10, rounds_task=10, learning_rate=0.1,
                          lambda_u=0.5, lambda_task=0.01,
                          tree=TreeParams(min_samples_leaf=2))
        model = fit(data, all_train_split(data), cfg)
        clone = BoutsModel.from_dict(model.to_dict())
        assert clone.feature_names == model.feature_names
        assert clone.universal_feature_indices == model.universal_feature_indices
        for t, task in enumerate(data.tasks):
            np.testing.assert_array_equal(clone.predict(t, task.X), model.predict(t, task.X))


def hand_built_model():
    """One universal stump on f0 (gains 3, 1) plus a task-0 stump on f1 (gain 1)."""
    mtree = MultitaskTree.from_dict(
        {
            "n_tasks": 2,
            "nodes": [
                {
                    "feature": 0,
                    "thresholds": [0.5, 0.5],
                    "left": 1,
                    "right": 2,
                    "gains": [3.0, 1.0],
                    "penalized_gains": [3.0, 1.0],
                },
                {"values": [0.0, 0.0]},
                {"values": [1.0, 1.0]},
            ],
        }
    )
    stump = Tree.from_dict(
        {
            "nodes": [
                {"feature": 1, "threshold": 0.5, "left": 1, "right": 2,
                 "gain": 1.0, "penalized_gain": 1.0},
                {"value": 0.0},
                {"value": 1.0},
            ]
        }
    )
    return BoutsModel(
        config=BoostConfig(),
        feature_names=["f0", "f1"],
        task_names=["task0", "task1"],
        universal_trees=[mtree],
        task_trees=[[stump], []],
        f0=[0.0, 0.0],
    )


class TestFeatureImportances:
    def test_exact_shares(self):
        model = hand_built_model()
        # Task 0 totals: f0 -> 3.0, f1 -> 1.0.
        assert feature_importances(model, 0) == {"f0": 0.75, "f1": 0.25}
        assert feature_importances(model, 1) == {"f0": 1.0}

    def test_shares_sum_to_one_on_fitted_model(self):
        rng = np.random.default_rng(25)
        X = rng.normal(size=(60, 5))
        y = X[:, 0] + X[:, 3] ** 2
        y = y - y.mean()
        data = make_dataset([X], [y])
        cfg = BoostConfig(rounds_universal=10, rounds_task=10,
                          tree=TreeParams(min_samples_leaf=3))
        model = fit(data, all_train_split(data), cfg)
        imp = feature_importances(model, 0)
        assert imp
        assert sum(imp.values()) == pytest.approx(1.0)
        assert all(v > 0 for v in imp.values())

    def test_empty_when_no_splits(self):
        model = hand_built_model()
        model.universal_trees = []
        model.task_trees = [[], []]
        assert feature_importances(model, 0) == {}
