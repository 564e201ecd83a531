"""Estimators of the conditional mean f* and the diagonal covariance root Q*.

Mean estimators: OLS with intercept, feasible weighted least squares (FWLS)
and k-nearest-neighbour averaging. Covariance estimators regress squared
residuals on the covariates, either parametrically (log-linear) or with a
kNN average, and are floored so that every prediction is strictly positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .datagen import truth_mean, truth_scale
from .errors import DegenerateResiduals
from .linalg_lp import least_squares

DELTA_FLOOR = 1e-12   # floor inside log(r^2)
DELTA_REL = 1e-6      # delta_min = DELTA_REL * median |residual|

MEAN_KINDS = ("ols", "fwls", "knn")
COV_KINDS = ("parametric", "knn_diag")


def default_k(n, d_x):
    """ceil(n^(2/(2+d_x))), capped at n."""
    return int(min(n, max(1, math.ceil(n ** (2.0 / (2.0 + d_x)) - 1e-9))))


def _as_batch(x, d_x):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    return np.atleast_2d(x.reshape(-1, d_x)), single


def _with_intercept(x):
    return np.column_stack([np.ones(x.shape[0]), x])


def knn_indices(train, query, k, max_block=2_000_000):
    """Indices of the ``k`` nearest training rows for each query row.

    Euclidean distance; equal distances are resolved in favour of the smaller
    training index. Rows of the result are sorted ascending.
    """
    train = np.asarray(train, dtype=float)
    query = np.asarray(query, dtype=float)
    n, d = train.shape
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    out = np.empty((query.shape[0], k), dtype=np.intp)
    step = max(1, max_block // (n * d))
    for start in range(0, query.shape[0], step):
        q = query[start:start + step]
        D = np.zeros((q.shape[0], n))
        for j in range(d):
            D += (q[:, j, None] - train[None, :, j]) ** 2
        if k == n:
            idx = np.broadcast_to(np.arange(n), D.shape).copy()
        else:
            idx = np.argpartition(D, k - 1, axis=1)[:, :k]
            kth = np.take_along_axis(D, idx, axis=1).max(axis=1)
            n_less = (D < kth[:, None]).sum(axis=1)
            n_eq = (D == kth[:, None]).sum(axis=1)
            for r in np.flatnonzero(n_less + n_eq > k):
                below = np.flatnonzero(D[r] < kth[r])
                at = np.flatnonzero(D[r] == kth[r])[: k - below.size]
                idx[r] = np.concatenate([below, at])
        out[start:start + step] = np.sort(idx, axis=1)
    return out


# --- mean estimators -------------------------------------------------------

@dataclass(frozen=True)
class LinearMean:
    """Affine model; ``coef`` rows are (intercept, slopes...) per output column."""

    kind: str
    coef: np.ndarray  # (d_x + 1, d_y)

    @property
    def d_x(self):
        return self.coef.shape[0] - 1

    def predict(self, x):
        X, single = _as_batch(x, self.d_x)
        out = self.coef[0] + X @ self.coef[1:]
        return out[0] if single else out

    def to_dict(self):
        return {"kind": self.kind, "coef": self.coef.tolist()}


@dataclass(frozen=True, eq=False)
class KnnMean:
    k: int
    x_train: np.ndarray
    y_train: np.ndarray
    fitted: np.ndarray  # in-sample predictions

    kind = "knn"

    @property
    def d_x(self):
        return self.x_train.shape[1]

    def predict(self, x):
        X, single = _as_batch(x, self.d_x)
        if X.shape == self.x_train.shape and np.array_equal(X, self.x_train):
            out = self.fitted
        else:
            out = self.y_train[knn_indices(self.x_train, X, self.k)].mean(axis=1)
        return out[0] if single else out

    def to_dict(self):
        return {"kind": "knn", "k": self.k, "x_train": self.x_train.tolist(),
                "y_train": self.y_train.tolist()}


@dataclass(frozen=True)
class TruthMean:
    """Oracle estimator returning f*; a test hook for synthetic audits."""

    spec: object
    kind = "truth"

    def predict(self, x):
        X, single = _as_batch(x, self.spec.d_x)
        out = truth_mean(self.spec, X)
        return out[0] if single else out

    def to_dict(self):
        return {"kind": "truth"}


def _fit_knn_mean(x, y, k):
    k = default_k(x.shape[0], x.shape[1]) if k is None else int(k)
    fitted = y[knn_indices(x, x, k)].mean(axis=1)
    return KnnMean(k=k, x_train=x, y_train=y, fitted=fitted)


def fit_mean(data, kind="ols", k=None, cov_kind="parametric"):
    """Fit a mean estimator.

    ``kind="fwls"`` runs OLS, fits a ``cov_kind`` covariance estimator on the
    OLS residuals and reweights with it.
    """
    if kind == "ols":
        return LinearMean("ols", least_squares(_with_intercept(data.x), data.y))
    if kind == "knn":
        return _fit_knn_mean(data.x, data.y, k)
    if kind == "fwls":
        ols = fit_mean(data, "ols")
        return refit_fwls(data, fit_cov(data, ols, cov_kind, k=k))
    raise ValueError(f"unknown mean estimator {kind!r}")


def refit_fwls(data, cov):
    """Weighted least squares per output column with weights 1/q_j(x^i)^2."""
    X = _with_intercept(data.x)
    w = 1.0 / cov.predict_scale(data.x)  # sqrt of the weights
    coef = np.empty((X.shape[1], data.d_y))
    for j in range(data.d_y):
        coef[:, j] = least_squares(X * w[:, j, None], data.y[:, j] * w[:, j])
    return LinearMean("fwls", coef)


# --- covariance estimators -------------------------------------------------

def _delta_min(resid):
    med = np.median(np.abs(resid), axis=0)
    return DELTA_REL * np.where(med > 0, med, 1.0)


@dataclass(frozen=True)
class ParametricCov:
    """q_j(x)^2 = scale_j * exp(intercept_j + slope_j . g(x)), floored at delta_min.

    ``features`` selects g: ``identity`` (log-linear) or ``log`` (log-log).
    """

    intercept: np.ndarray  # (d_y,)
    slope: np.ndarray      # (d_y, d_x)
    scale: np.ndarray      # (d_y,)
    delta_min: np.ndarray  # (d_y,)
    features: str = "identity"

    kind = "parametric"

    @property
    def d_x(self):
        return self.slope.shape[1]

    def _features(self, X):
        return np.log(X) if self.features == "log" else X

    def predict_scale(self, x):
        X, single = _as_batch(x, self.d_x)
        q = np.sqrt(self.scale * np.exp(self.intercept + self._features(X) @ self.slope.T))
        out = np.maximum(q, self.delta_min)
        return out[0] if single else out

    def to_dict(self):
        return {"kind": "parametric", "intercept": self.intercept.tolist(),
                "slope": self.slope.tolist(), "scale": self.scale.tolist(),
                "delta_min": self.delta_min.tolist(), "features": self.features}


@dataclass(frozen=True, eq=False)
class KnnCov:
    k: int
    x_train: np.ndarray
    sq_resid: np.ndarray   # (n, d_y)
    delta_min: np.ndarray  # (d_y,)
    fitted: np.ndarray     # in-sample predicted scales

    kind = "knn_diag"

    @property
    def d_x(self):
        return self.x_train.shape[1]

    def _scale(self, idx):
        return np.sqrt(np.maximum(self.sq_resid[idx].mean(axis=1), self.delta_min**2))

    def predict_scale(self, x):
        X, single = _as_batch(x, self.d_x)
        if X.shape == self.x_train.shape and np.array_equal(X, self.x_train):
            out = self.fitted
        else:
            out = self._scale(knn_indices(self.x_train, X, self.k))
        return out[0] if single else out

    def to_dict(self):
        return {"kind": "knn_diag", "k": self.k, "x_train": self.x_train.tolist(),
                "sq_resid": self.sq_resid.tolist(), "delta_min": self.delta_min.tolist()}


@dataclass(frozen=True)
class TruthCov:
    spec: object
    kind = "truth"

    def predict_scale(self, x):
        X, single = _as_batch(x, self.spec.d_x)
        out = truth_scale(self.spec, X)
        return out[0] if single else out

    def to_dict(self):
        return {"kind": "truth"}


def fit_cov(data, mean, kind="parametric", k=None, slope=True, features="identity"):
    """Fit a diagonal covariance-root estimator on the residuals of ``mean``.

    ``parametric`` regresses log(max(r^2, DELTA_FLOOR)) on the covariates by
    OLS, then rescales each component so the standardized residuals have unit
    sample second moment. ``slope=False`` fits the intercept only.
    ``knn_diag`` averages squared residuals over the k nearest covariates.
    """
    resid = data.y - mean.predict(data.x)
    delta_min = _delta_min(resid)
    sq = resid**2
    if kind == "parametric":
        if np.any(np.all(sq <= DELTA_FLOOR, axis=0)):
            raise DegenerateResiduals("all residuals of some component are below the floor")
        feats = np.log(data.x) if features == "log" else data.x
        design = _with_intercept(feats) if slope else np.ones((data.n, 1))
        beta = least_squares(design, np.log(np.maximum(sq, DELTA_FLOOR)))
        intercept = beta[0]
        slopes = beta[1:].T if slope else np.zeros((data.d_y, data.d_x))
        base = np.exp(design @ beta)
        scale = np.mean(sq / base, axis=0)
        return ParametricCov(intercept=intercept, slope=slopes, scale=scale,
                             delta_min=delta_min, features=features)
    if kind == "knn_diag":
        k = default_k(data.n, data.d_x) if k is None else int(k)
        idx = knn_indices(data.x, data.x, k)
        cov = KnnCov(k=k, x_train=data.x, sq_resid=sq, delta_min=delta_min,
                     fitted=np.empty(0))
        object.__setattr__(cov, "fitted", cov._scale(idx))
        return cov
    raise ValueError(f"unknown covariance estimator {kind!r}")


@dataclass(frozen=True)
class ModelPair:
    mean: object
    cov: object

    def predict_mean(self, x):
        return self.mean.predict(x)

    def predict_scale(self, x):
        return self.cov.predict_scale(x)

    def to_json(self):
        return json.dumps({"mean": self.mean.to_dict(), "cov": self.cov.to_dict()})


def fit_models(data, mean_kind="ols", cov_kind="parametric", k_mean=None, k_cov=None,
               features="identity"):
    """Fit a ModelPair. For FWLS the covariance is refit on the FWLS residuals."""
    if mean_kind == "fwls":
        ols = fit_mean(data, "ols")
        first = fit_cov(data, ols, cov_kind, k=k_cov, features=features)
        mean = refit_fwls(data, first)
    else:
        mean = fit_mean(data, mean_kind, k=k_mean)
    return ModelPair(mean, fit_cov(data, mean, cov_kind, k=k_cov, features=features))


def truth_models(spec):
    return ModelPair(TruthMean(spec), TruthCov(spec))


def predict_mean(est, x):
    return est.predict(x)


def predict_cov(est, x):
    """Diagonal matrix Q-hat(x) for a single covariate vector."""
    return np.diag(est.predict_scale(np.asarray(x, dtype=float).reshape(-1)))


def model_pair_from_json(text):
    doc = json.loads(text)
    m, c = doc["mean"], doc["cov"]
    arr = np.asarray
    if m["kind"] in ("ols", "fwls"):
        mean = LinearMean(m["kind"], arr(m["coef"], dtype=float))
    elif m["kind"] == "knn":
        mean = _fit_knn_mean(arr(m["x_train"], dtype=float), arr(m["y_train"], dtype=float),
                             m["k"])
    else:
        raise ValueError(f"cannot deserialize mean estimator {m['kind']!r}")
    if c["kind"] == "parametric":
        cov = ParametricCov(arr(c["intercept"], dtype=float), arr(c["slope"], dtype=float),
                            arr(c["scale"], dtype=float), arr(c["delta_min"], dtype=float),
                            c.get("features", "identity"))
    elif c["kind"] == "knn_diag":
        x = arr(c["x_train"], dtype=float)
        cov = KnnCov(k=c["k"], x_train=x, sq_resid=arr(c["sq_resid"], dtype=float),
                     delta_min=arr(c["delta_min"], dtype=float), fitted=np.empty(0))
        object.__setattr__(cov, "fitted", cov._scale(knn_indices(x, x, cov.k)))
    else:
        raise ValueError(f"cannot deserialize covariance estimator {c['kind']!r}")
    return ModelPair(mean, cov)
