import warnings
from dataclasses import replace

import numpy as np
import pytest

from socialgaze.data_model import DataError
from socialgaze.measures import compute_measures
from socialgaze.predict import (GAZE_FEATURES, EvalReport, FeatureMatrix, ModelSpec, SchemaError,
                                ablation, bootstrap_evaluate, build_feature_matrix, fit,
                                format_ablation, impute_duration, normalize, predict, prepare)
from socialgaze.predict.models import (GradientBoosting, Lasso, MLP, RegressionTree, lasso_path_max,
                                       mlp_forward, mlp_loss_grad)
from socialgaze.synth import SynthConfig, generate_cohort

NAMES = ("mutual_gaze_ratio", "mutual_gaze_duration", "level_of_functioning", "ados_social_affect")


def toy(rng, n=40, p=3, noise=0.1):
    X = rng.normal(size=(n, p))
    y = 2.5 + X @ np.linspace(0.4, -0.2, p) + rng.normal(scale=noise, size=n)
    return X, y


class TestModelSpec:
    def test_defaults_merged(self):
        assert ModelSpec("RF").hyperparameters["n_trees"] == 200
        assert ModelSpec("GBT", {"n_trees": 5}).hyperparameters["learning_rate"] == 0.1

    @pytest.mark.parametrize("kind,hp", [("RF", {"n_trees": 0}), ("GBT", {"learning_rate": 1.5}),
                                         ("Lasso", {"lam": -1}), ("SVR", {"C": 0}),
                                         ("MLP", {"hidden": 2.5}), ("RF", {"depth": 3}),
                                         ("KNN", {})])
    def test_invalid(self, kind, hp):
        with pytest.raises(ValueError):
            ModelSpec(kind, hp)


class TestFit:
    def test_stump_predicts_mean(self, rng):
        X, y = toy(rng)
        m = fit(ModelSpec("RF", {"n_trees": 1, "max_depth": 0, "bootstrap": False}), X, y)
        np.testing.assert_allclose(predict(m, rng.normal(size=(7, 3))), y.mean(), rtol=1e-14)

    def test_lasso_lambda_max_kills_everything(self, rng):
        X, y = toy(rng)
        lam = lasso_path_max(X, y)
        m = fit(ModelSpec("Lasso", {"lam": lam * 1.0000001}), X, y)
        assert np.all(m.coef_ == 0.0)
        assert m.intercept_ == pytest.approx(y.mean(), abs=1e-12)
        # just below the kill point something survives
        assert np.any(fit(ModelSpec("Lasso", {"lam": lam * 0.99}), X, y).coef_ != 0.0)

    def test_lasso_zero_penalty_is_ols(self, rng):
        X, y = toy(rng, n=25, p=4, noise=0.5)
        m = fit(ModelSpec("Lasso", {"lam": 0.0}), X, y)
        A = np.column_stack([np.ones(len(y)), X])
        ols = np.linalg.solve(A.T @ A, A.T @ y)
        np.testing.assert_allclose(np.r_[m.intercept_, m.coef_], ols, atol=1e-6)

    def test_lasso_objective_monotone(self, rng):
        X, y = toy(rng, p=4, noise=1.0)
        m = Lasso(lam=0.05).fit(X, y)
        assert len(m.objective_) > 1
        assert np.all(np.diff(m.objective_) <= 1e-14)

    def test_lasso_selects_from_grid(self, rng):
        X, y = toy(rng)
        m = fit(ModelSpec("Lasso"), X, y, seed=3)
        assert m.lam_ in Lasso().grid(X, y)

    @pytest.mark.parametrize("kind", ["RF", "GBT", "MLP", "SVR", "Lasso"])
    def test_deep_models_beat_mean_in_sample(self, rng, kind):
        X, y = toy(rng, noise=0.3)
        hp = {"RF": {"max_depth": None, "min_leaf": 1}, "MLP": {"epochs": 500, "lr": 0.05}}.get(kind, {})
        pred = predict(fit(ModelSpec(kind, hp), X, y, seed=1), X)
        assert np.mean(np.abs(pred - y)) < np.mean(np.abs(y - y.mean()))

    @pytest.mark.parametrize("kind", ["RF", "GBT", "MLP", "SVR", "Lasso"])
    def test_constant_target(self, rng, kind):
        X = rng.normal(size=(20, 3))
        y = np.full(20, 2.5)
        pred = predict(fit(ModelSpec(kind), X, y), rng.normal(size=(6, 3)))
        np.testing.assert_allclose(pred, 2.5, atol=1e-9)

    def test_schema_mismatch(self, rng):
        X, y = toy(rng)
        m = fit(ModelSpec("Lasso", {"lam": 0.1}), X, y)
        with pytest.raises(SchemaError):
            predict(m, X[:, :2])

    def test_clip(self, rng):
        X, y = toy(rng)
        m = fit(ModelSpec("Lasso", {"lam": 0.0}), X, y * 10)
        out = predict(m, X, clip=(1.0, 4.0))
        assert out.min() >= 1.0 and out.max() <= 4.0

    def test_gbt_single_full_step_equals_tree(self, rng):
        X, y = toy(rng)
        gbt = GradientBoosting(n_trees=1, max_depth=3, learning_rate=1.0, min_leaf=2).fit(X, y)
        tree = RegressionTree(max_depth=3, min_leaf=2).fit(X, y)
        Xt = rng.normal(size=(30, 3))
        np.testing.assert_allclose(gbt.predict(Xt), tree.predict(Xt), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("kind", ["RF", "GBT", "MLP", "SVR", "Lasso"])
    def test_seed_determinism(self, rng, kind):
        X, y = toy(rng)
        a = predict(fit(ModelSpec(kind), X, y, seed=9), X)
        b = predict(fit(ModelSpec(kind), X, y, seed=9), X)
        assert np.array_equal(a, b)


class TestMLP:
    def test_gradient_matches_finite_differences(self, rng):
        X, y = toy(rng, n=12, p=4)
        params = MLP(hidden=5).init_params(4, y, rng)
        params = (params[0], rng.normal(size=5) * 0.3, rng.normal(size=5), params[3])
        _, grads = mlp_loss_grad(params, X, y)
        h = 1e-6
        worst = 0.0
        for k in range(4):
            base = np.atleast_1d(np.array(params[k], dtype=np.float64))
            g = np.atleast_1d(grads[k]).ravel()
            for j in range(base.size):
                plus, minus = base.copy().ravel(), base.copy().ravel()
                plus[j] += h
                minus[j] -= h
                p_plus = list(params)
                p_minus = list(params)
                shape = np.shape(params[k])
                p_plus[k] = plus.reshape(shape) if shape else float(plus[0])
                p_minus[k] = minus.reshape(shape) if shape else float(minus[0])
                fd = (mlp_loss_grad(p_plus, X, y)[0] - mlp_loss_grad(p_minus, X, y)[0]) / (2 * h)
                worst = max(worst, abs(fd - g[j]) / max(abs(fd), abs(g[j]), 1e-8))
        assert worst < 1e-4

    def test_loss_decreases_early(self, rng):
        X = rng.normal(size=(30, 2))
        y = 2.0 + np.where(X[:, 0] > 0, 1.0, -1.0)
        m = MLP(hidden=8, lr=0.05, epochs=10).fit(X, y, rng)
        assert np.all(np.diff(m.losses_) < 0)

    def test_forward_shape(self, rng):
        params = MLP(hidden=3).init_params(2, np.ones(4), rng)
        assert mlp_forward(params, np.ones((4, 2)))[0].shape == (4,)


def _fm(X, y, names=NAMES):
    return FeatureMatrix(np.asarray(X, float), np.asarray(y, float), names)


class TestPreparation:
    def test_impute_one_missing(self):
        X = [[0.1, 40, 1, 10], [0.2, 50, 2, 12], [0.3, np.nan, 3, 9]]
        out = impute_duration(_fm(X, [1, 2, 3]))
        assert out.column("mutual_gaze_duration")[2] == 45.0
        assert out.imputed.tolist() == [False, False, True]

    def test_impute_none_missing(self):
        X = [[0.1, 40, 1, 10], [0.2, 50, 2, 12]]
        data = _fm(X, [1, 2])
        assert np.array_equal(impute_duration(data).X, data.X)

    def test_impute_all_missing(self):
        X = [[0.1, np.nan, 1, 10], [0.2, np.nan, 2, 12]]
        with pytest.warns(UserWarning):
            out = impute_duration(_fm(X, [1, 2]))
        assert "mutual_gaze_duration" not in out.feature_names

    def test_normalize_idempotent(self, rng):
        data = normalize(_fm(rng.normal(3, 2, size=(30, 4)), rng.normal(size=30)))
        np.testing.assert_allclose(data.X.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(data.X.std(axis=0), 1, atol=1e-12)
        np.testing.assert_allclose(normalize(data).X, data.X, atol=1e-12)

    def test_normalize_rejects_nan(self):
        with pytest.raises(DataError):
            normalize(_fm([[0.1, np.nan, 1, 10]], [1]))

    def test_build_requires_target(self):
        synth = generate_cohort(6, seed=0, session_cfg=SynthConfig(duration_s=4))
        profiles = {k: replace(p, svb_score=None) for k, p in synth.cohort.profiles.items()}
        with pytest.raises(DataError):
            build_feature_matrix(compute_measures(synth.cohort), profiles)


def _cohort_features(link, seed, n=28):
    synth = generate_cohort(n, link=link, seed=seed, session_cfg=SynthConfig(duration_s=60))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return prepare(build_feature_matrix(compute_measures(synth.cohort), synth.cohort.profiles))


class TestBootstrap:
    def test_b1_deterministic(self, rng):
        data = normalize(_fm(rng.normal(size=(20, 4)), rng.uniform(1, 4, 20)))
        for kind in ("RF", "MLP", "Lasso"):
            a = bootstrap_evaluate(ModelSpec(kind), data, B=1, seed=5)
            assert a == bootstrap_evaluate(ModelSpec(kind), data, B=1, seed=5)

    def test_noiseless_linear_lasso(self, rng):
        X = rng.normal(size=(40, 4))
        y = 2.5 + 0.3 * X[:, 0] - 0.2 * X[:, 2]
        rep = bootstrap_evaluate(ModelSpec("Lasso", {"lam": 1e-8}), normalize(_fm(X, y)), B=50)
        assert rep.r2 > 0.95

    def test_mean_model_r2_near_zero(self, rng):
        X = rng.normal(size=(200, 4))
        y = rng.uniform(1, 4, 200)
        spec = ModelSpec("RF", {"n_trees": 1, "max_depth": 0, "bootstrap": False})
        rep = bootstrap_evaluate(spec, normalize(_fm(X, y)), B=50)
        assert abs(rep.r2) < 0.05
        assert rep.mae <= rep.rmse

    def test_thread_count_irrelevant(self, rng):
        data = normalize(_fm(rng.normal(size=(20, 4)), rng.uniform(1, 4, 20)))
        spec = ModelSpec("RF", {"n_trees": 10})
        assert bootstrap_evaluate(spec, data, 16, 2) == bootstrap_evaluate(spec, data, 16, 2, n_jobs=4)

    def test_too_few_rows(self, rng):
        with pytest.raises(DataError):
            bootstrap_evaluate(ModelSpec("RF"), _fm(rng.normal(size=(3, 4)), [1, 2, 3]), B=2)


class TestAblation:
    def test_ten_reports_and_table(self):
        data = _cohort_features("GazeInformative", 0)
        specs = {"RF": ModelSpec("RF", {"n_trees": 20}), "MLP": ModelSpec("MLP", {"epochs": 200}),
                 "SVR": ModelSpec("SVR", {"n_steps": 200}), "GBT": ModelSpec("GBT", {"n_trees": 20})}
        reports = ablation(data, B=10, seed=1, specs=specs)
        assert len(reports) == 10
        assert all(isinstance(r, EvalReport) and r.mae <= r.rmse and r.r2 <= 1 for r in reports)
        assert {r.setting for r in reports} == {"WithGaze", "ProfileOnly"}
        table = format_ablation(reports).splitlines()
        assert table[0] == "model,setting,mae,rmse,r2,B,seed" and len(table) == 11

    def test_informative_gaze_helps_rf(self):
        data = _cohort_features("GazeInformative", 2)
        spec = ModelSpec("RF", {"n_trees": 50})
        w = bootstrap_evaluate(spec, data, 100, 0, "WithGaze")
        p = bootstrap_evaluate(spec, data.drop(GAZE_FEATURES), 100, 0, "ProfileOnly")
        assert w.mae < p.mae

    def test_uninformative_gaze_is_neutral(self, rng):
        n = 60
        lof = rng.integers(1, 4, n).astype(float)
        ados = rng.normal(16, 5, n)
        y = np.clip(np.round(2 * (1 + 0.75 * (lof - 1) + rng.normal(0, 0.25, n))) / 2, 1, 4)
        X = np.column_stack([rng.uniform(0.05, 0.45, n), rng.uniform(30, 90, n), lof, ados])
        data = normalize(_fm(X, y))
        spec = ModelSpec("RF", {"n_trees": 50})
        w = bootstrap_evaluate(spec, data, 100, 0, "WithGaze")
        p = bootstrap_evaluate(spec, data.drop(GAZE_FEATURES), 100, 0, "ProfileOnly")
        assert abs(w.mae - p.mae) < 2 * max(w.mae_se, p.mae_se)
