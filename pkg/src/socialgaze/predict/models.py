"""Small-sample regressors: random forest, gradient boosting, Lasso, linear
SVR and a one-hidden-layer MLP.

All models share ``fit(X, y, rng)`` / ``predict(X)`` and are fully
determined by the generator handed to ``fit``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels

KINDS = ("RF", "Lasso", "SVR", "GBT", "MLP")

DEFAULTS: dict[str, dict] = {
    "RF": {"n_trees": 200, "max_depth": 4, "max_features": "sqrt", "min_leaf": 2,
           "bootstrap": True},
    "Lasso": {"lam": None, "n_grid": 20, "grid_ratio": 1e-3, "inner_resamples": 10,
              "max_iter": 10000, "tol": 1e-10},
    "SVR": {"C": 1.0, "epsilon": 0.1, "n_steps": 2000, "lr": 0.01},
    "GBT": {"n_trees": 100, "max_depth": 2, "learning_rate": 0.1, "min_leaf": 2},
    "MLP": {"hidden": 16, "lr": 0.01, "epochs": 2000},
}


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        merged = {**DEFAULTS[self.kind], **self.hyperparameters}
        _validate(self.kind, merged)
        object.__setattr__(self, "hyperparameters", merged)


def _validate(kind, hp):
    def positive_int(name, minimum=1):
        if int(hp[name]) != hp[name] or hp[name] < minimum:
            raise ValueError(f"{kind}.{name} must be an integer >= {minimum}")

    if kind in ("RF", "GBT"):
        positive_int("n_trees")
        positive_int("min_leaf")
        if hp["max_depth"] is not None and hp["max_depth"] < 0:
            raise ValueError(f"{kind}.max_depth must be >= 0 or null")
    if kind == "RF" and not (hp["max_features"] in ("sqrt", "all")
                             or (isinstance(hp["max_features"], int) and hp["max_features"] >= 1)):
        raise ValueError("RF.max_features must be 'sqrt', 'all' or a positive int")
    if kind == "GBT" and not 0 < hp["learning_rate"] <= 1:
        raise ValueError("GBT.learning_rate must be in (0, 1]")
    if kind == "Lasso":
        if hp["lam"] is not None and hp["lam"] < 0:
            raise ValueError("Lasso.lam must be >= 0")
        positive_int("n_grid")
        positive_int("inner_resamples")
        if not 0 < hp["grid_ratio"] < 1:
            raise ValueError("Lasso.grid_ratio must be in (0, 1)")
    if kind == "SVR":
        if hp["C"] <= 0 or hp["epsilon"] < 0 or hp["lr"] <= 0:
            raise ValueError("SVR needs C > 0, epsilon >= 0, lr > 0")
        positive_int("n_steps")
    if kind == "MLP":
        positive_int("hidden")
        positive_int("epochs")
        if hp["lr"] <= 0:
            raise ValueError("MLP.lr must be positive")


class _Model:
    n_features: int = -1

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaError(f"expected {self.n_features} features, got shape {X.shape}")
        return X


def _depth(d):
    return -1 if d is None else int(d)


class RegressionTree(_Model):
    def __init__(self, max_depth=None, min_leaf=1, n_sub=None):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.n_sub = n_sub

    def fit(self, X, y, rng=None, sample=None):
        X = np.asarray(X, dtype=np.float64)
        n, p = X.shape
        self.n_features = p
        sample = np.arange(n) if sample is None else np.asarray(sample)
        n_sub = p if self.n_sub is None else min(self.n_sub, p)
        cap = kernels.max_tree_nodes(sample.size, _depth(self.max_depth))
        keys = (rng.random((cap, p)) if n_sub < p else np.zeros((cap, p)))
        self.tree_ = kernels.build_tree(X, y, sample, _depth(self.max_depth),
                                        self.min_leaf, n_sub, keys)
        return self

    def predict(self, X):
        return kernels.tree_predict(self._check(X), self.tree_)


class RandomForest(_Model):
    def __init__(self, n_trees=200, max_depth=4, max_features="sqrt", min_leaf=2, bootstrap=True):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_leaf = min_leaf
        self.bootstrap = bootstrap

    def fit(self, X, y, rng):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n, p = X.shape
        self.n_features = p
        if self.max_features == "sqrt":
            n_sub = max(1, int(math.sqrt(p)))
        elif self.max_features == "all":
            n_sub = p
        else:
            n_sub = min(p, int(self.max_features))
        self.trees_ = []
        for _ in range(self.n_trees):
            sample = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = RegressionTree(self.max_depth, self.min_leaf, n_sub)
            self.trees_.append(tree.fit(X, y, rng, sample))
        return self

    def predict(self, X):
        X = self._check(X)
        return np.mean([t.predict(X) for t in self.trees_], axis=0)


class GradientBoosting(_Model):
    """Least-squares boosting of shallow trees from a constant start."""

    def __init__(self, n_trees=100, max_depth=2, learning_rate=0.1, min_leaf=2):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_leaf = min_leaf

    def fit(self, X, y, rng=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.n_features = X.shape[1]
        self.init_ = float(y.mean())
        f = np.full(y.shape, self.init_)
        self.trees_ = []
        for _ in range(self.n_trees):
            tree = RegressionTree(self.max_depth, self.min_leaf).fit(X, y - f)
            f = f + self.learning_rate * tree.predict(X)
            self.trees_.append(tree)
        return self

    def predict(self, X):
        X = self._check(X)
        out = np.full(X.shape[0], self.init_)
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(X)
        return out


def lasso_path_max(X, y) -> float:
    """Smallest penalty that zeroes every coefficient (centred data)."""
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    return float(np.max(np.abs(Xc.T @ yc)) / X.shape[0]) if X.shape[1] else 0.0


class Lasso(_Model):
    """L1-penalised least squares, objective (1/2n)|y - b0 - Xb|^2 + lam |b|_1.

    With ``lam=None`` the penalty is picked from a log grid below
    ``lasso_path_max`` by pooled out-of-bag squared error over
    ``inner_resamples`` bootstrap draws of the training rows.
    """

    def __init__(self, lam=None, n_grid=20, grid_ratio=1e-3, inner_resamples=10,
                 max_iter=10000, tol=1e-10):
        self.lam = lam
        self.n_grid = n_grid
        self.grid_ratio = grid_ratio
        self.inner_resamples = inner_resamples
        self.max_iter = max_iter
        self.tol = tol

    def _solve(self, X, y, lam, beta=None):
        mx, my = X.mean(axis=0), y.mean()
        if X.shape[1] and lam >= lasso_path_max(X, y):
            # zero is optimal here; skip CD so rounding cannot leave a 1e-17 residue
            return np.zeros(X.shape[1]), my, np.array([0.5 * np.mean((y - my) ** 2)])
        beta, objective = kernels.lasso_cd(X - mx, y - my, lam, beta, self.max_iter, self.tol)
        return beta, my - mx @ beta, objective

    def grid(self, X, y):
        top = lasso_path_max(X, y)
        if top == 0.0:
            return np.zeros(1)
        return top * self.grid_ratio ** (np.arange(self.n_grid) / max(self.n_grid - 1, 1))

    def select_lambda(self, X, y, rng):
        grid = self.grid(X, y)
        if grid.size == 1:
            return float(grid[0])
        n = X.shape[0]
        sse = np.zeros(grid.size)
        for _ in range(self.inner_resamples):
            idx = rng.integers(0, n, n)
            oob = np.setdiff1d(np.arange(n), idx)
            if oob.size == 0:
                continue
            beta = None
            for k, lam in enumerate(grid):
                beta, b0, _ = self._solve(X[idx], y[idx], lam, beta)
                resid = y[oob] - (b0 + X[oob] @ beta)
                sse[k] += resid @ resid
        return float(grid[int(np.argmin(sse))])

    def fit(self, X, y, rng=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.n_features = X.shape[1]
        lam = self.lam
        if lam is None:
            lam = self.select_lambda(X, y, rng if rng is not None else np.random.default_rng(0))
        self.lam_ = float(lam)
        self.coef_, self.intercept_, self.objective_ = self._solve(X, y, self.lam_)
        return self

    def predict(self, X):
        return self.intercept_ + self._check(X) @ self.coef_


class LinearSVR(_Model):
    """Linear epsilon-insensitive SVR fitted by subgradient descent."""

    def __init__(self, C=1.0, epsilon=0.1, n_steps=2000, lr=0.01):
        self.C = C
        self.epsilon = epsilon
        self.n_steps = n_steps
        self.lr = lr

    def fit(self, X, y, rng=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.n_features = X.shape[1]
        self.coef_, self.intercept_, self.objective_ = kernels.svr_subgradient(
            X, y, self.C, self.epsilon, self.lr, self.n_steps,
            np.zeros(X.shape[1]), float(np.median(y)))
        return self

    def predict(self, X):
        return self.intercept_ + self._check(X) @ self.coef_


def mlp_forward(params, X):
    W1, b1, w2, b2 = params
    A = np.tanh(X @ W1 + b1)
    return A @ w2 + b2, A


def mlp_loss_grad(params, X, y):
    """Loss ``(1/2n) sum (f - y)^2`` and its gradient w.r.t. ``(W1, b1, w2, b2)``."""
    W1, b1, w2, b2 = params
    f, A = mlp_forward(params, X)
    r = f - y
    n = X.shape[0]
    d = r / n
    da = np.outer(d, w2) * (1.0 - A * A)
    grads = (X.T @ da, da.sum(axis=0), A.T @ d, float(d.sum()))
    return float(r @ r / (2.0 * n)), grads


class MLP(_Model):
    def __init__(self, hidden=16, lr=0.01, epochs=2000):
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs

    def init_params(self, p, y, rng):
        # zero output weights start the net at the mean; a constant target then stays exact
        W1 = rng.normal(0.0, 1.0 / math.sqrt(max(p, 1)), size=(p, self.hidden))
        return W1, np.zeros(self.hidden), np.zeros(self.hidden), float(np.mean(y))

    def fit(self, X, y, rng):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.n_features = X.shape[1]
        W1, b1, w2, b2 = self.init_params(X.shape[1], y, rng)
        W1, b1, w2, b2, self.losses_ = kernels.mlp_train(X, y, W1, b1, w2, b2,
                                                         self.lr, self.epochs)
        self.params_ = (W1, b1, w2, float(b2))
        return self

    def predict(self, X):
        return mlp_forward(self.params_, self._check(X))[0]


_CLASSES = {"RF": RandomForest, "GBT": GradientBoosting, "Lasso": Lasso,
            "SVR": LinearSVR, "MLP": MLP}


def fit(spec: ModelSpec, X, y, seed: int = 0):
    """Fit the model described by ``spec``; deterministic in ``seed``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise SchemaError("X must be 2-d with one row per target")
    if X.shape[0] < 2:
        raise ValueError("need at least two rows to fit")
    model = _CLASSES[spec.kind](**spec.hyperparameters)
    return model.fit(X, y, np.random.default_rng(seed))


def predict(model, X, clip: tuple[float, float] | None = None) -> np.ndarray:
    out = np.asarray(model.predict(X), dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite prediction")
    if clip is not None:
        out = np.clip(out, clip[0], clip[1])
    return out
