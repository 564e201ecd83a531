"""Synthetic data from Y = f*(X) + Q*(X) eps with known ground truth.

f* is affine. Q* is diagonal with one of the parametric variance forms::

    constant      q_j(x)^2 = values_j^2
    linear_scale  q_j(x)^2 = sigma_j^2 (1 + theta_j.x)^2
    log_linear    q_j(x)^2 = exp(sigma_j + theta_j.x)
    log_log       q_j(x)^2 = exp(sigma_j + theta_j.log(x)),   x > 0

Errors have zero mean and identity covariance.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError, DomainError, InvalidSpec

VARIANCE_KINDS = ("constant", "linear_scale", "log_linear", "log_log")
ERROR_KINDS = ("standard_normal", "uniform", "scaled_student_t")
COVARIATE_KINDS = ("uniform_box", "standard_normal")


def make_rng(seed, *stream):
    """Generator for the stream ``(seed, *stream)``; streams are independent."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


@dataclass(frozen=True)
class TruthSpec:
    d_x: int
    d_y: int
    intercept: np.ndarray           # (d_y,)
    coef: np.ndarray                # (d_y, d_x)
    variance: str = "constant"
    sigma: np.ndarray = None        # (d_y,); for "constant" the scale values
    theta: np.ndarray = None        # (d_y, d_x)
    errors: str = "standard_normal"
    df: float = 5.0                 # student-t degrees of freedom
    covariates: str = "uniform_box"
    lo: np.ndarray = None           # (d_x,)
    hi: np.ndarray = None           # (d_x,)

    def __post_init__(self):
        d_x, d_y = int(self.d_x), int(self.d_y)
        if d_x < 1 or d_y < 1:
            raise InvalidSpec("d_x and d_y must be positive")

        def arr(value, shape, default):
            a = np.array(default if value is None else value, dtype=float)
            try:
                a = np.broadcast_to(a, shape).copy()
            except ValueError:
                raise InvalidSpec(f"expected shape {shape}, got {np.shape(value)}") from None
            a.setflags(write=False)
            return a

        object.__setattr__(self, "intercept", arr(self.intercept, (d_y,), 0.0))
        object.__setattr__(self, "coef", arr(self.coef, (d_y, d_x), 0.0))
        default_sigma = 1.0 if self.variance in ("constant", "linear_scale") else 0.0
        object.__setattr__(self, "sigma", arr(self.sigma, (d_y,), default_sigma))
        object.__setattr__(self, "theta", arr(self.theta, (d_y, d_x), 0.0))
        object.__setattr__(self, "lo", arr(self.lo, (d_x,), 0.0))
        object.__setattr__(self, "hi", arr(self.hi, (d_x,), 1.0))

        if self.variance not in VARIANCE_KINDS:
            raise InvalidSpec(f"unknown variance model {self.variance!r}")
        if self.errors not in ERROR_KINDS:
            raise InvalidSpec(f"unknown error distribution {self.errors!r}")
        if self.covariates not in COVARIATE_KINDS:
            raise InvalidSpec(f"unknown covariate distribution {self.covariates!r}")
        if self.errors == "scaled_student_t" and not self.df > 4:
            raise InvalidSpec("student-t errors need df > 4")
        if not all(np.isfinite(a).all() for a in (self.intercept, self.coef, self.sigma, self.theta)):
            raise InvalidSpec("model parameters must be finite")
        if self.covariates == "uniform_box":
            if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))
                    and np.all(self.lo < self.hi)):
                raise InvalidSpec("uniform_box needs finite lo < hi")
        self._check_positivity()

    def _check_positivity(self):
        v = self.variance
        if v in ("constant", "linear_scale") and np.any(self.sigma == 0):
            raise InvalidSpec("zero scale gives a singular Q*")
        if v == "log_log":
            if self.covariates != "uniform_box" or np.any(self.lo <= 0):
                raise InvalidSpec("log_log variance needs covariates supported in x > 0")
        if v == "linear_scale":
            if self.covariates == "standard_normal":
                if np.any(self.theta != 0):
                    raise InvalidSpec("linear_scale with unbounded covariates crosses zero")
            else:
                # 1 + theta.x is affine, so the sign over the box is set by its corners
                corners = np.array(list(itertools.product(*zip(self.lo, self.hi))))
                vals = 1.0 + corners @ self.theta.T
                same_sign = np.all(vals > 0, axis=0) | np.all(vals < 0, axis=0)
                if not np.all(same_sign):
                    raise InvalidSpec("linear_scale variance vanishes inside the covariate box")
        probe = sample_covariates(self, 1000, make_rng(0, 0xC0FFEE))
        q = truth_scale(self, probe)
        if not (np.all(np.isfinite(q)) and np.all(q > 0)):
            raise InvalidSpec("variance model is not positive on sampled covariates")


def sample_covariates(spec, n, rng):
    if spec.covariates == "uniform_box":
        return spec.lo + (spec.hi - spec.lo) * rng.random((n, spec.d_x))
    return rng.standard_normal((n, spec.d_x))


def sample_errors(spec, n, rng):
    shape = (n, spec.d_y)
    if spec.errors == "standard_normal":
        return rng.standard_normal(shape)
    if spec.errors == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)
    nu = spec.df
    return rng.standard_t(nu, size=shape) * np.sqrt((nu - 2.0) / nu)


def truth_mean(spec, x):
    """f*(x) for a single point (d_x,) or a batch (m, d_x)."""
    x = np.asarray(x, dtype=float)
    return spec.intercept + x @ spec.coef.T


def truth_scale(spec, x):
    """Diagonal of Q*(x), same batching as :func:`truth_mean`."""
    x = np.asarray(x, dtype=float)
    v = spec.variance
    if v == "constant":
        return np.abs(spec.sigma) * np.ones(x.shape[:-1] + (spec.d_y,))
    if v == "linear_scale":
        return np.abs(spec.sigma * (1.0 + x @ spec.theta.T))
    if v == "log_linear":
        return np.exp(0.5 * (spec.sigma + x @ spec.theta.T))
    if np.any(x <= 0):
        raise DomainError("log_log variance is undefined for x <= 0")
    return np.exp(0.5 * (spec.sigma + np.log(x) @ spec.theta.T))


def eval_truth(spec, x):
    """Return ``(f*(x), Q*(x))`` with Q*(x) as a diagonal matrix."""
    x = np.asarray(x, dtype=float).reshape(spec.d_x)
    return truth_mean(spec, x), np.diag(truth_scale(spec, x))


@dataclass(frozen=True)
class Truth:
    f: np.ndarray    # f*(x^i), (n, d_y)
    q: np.ndarray    # diagonal of Q*(x^i), (n, d_y)
    eps: np.ndarray  # true errors, (n, d_y)


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    truth: Optional[Truth] = field(default=None, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.shape[0] != y.shape[0]:
            raise ValueError("x and y must have the same number of rows")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d_x(self):
        return self.x.shape[1]

    @property
    def d_y(self):
        return self.y.shape[1]


def sample(spec, n, seed, stream=()):
    """Draw ``n`` i.i.d. rows; reproducible given ``(spec, n, seed, stream)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = make_rng(seed, *stream)
    x = sample_covariates(spec, n, rng)
    eps = sample_errors(spec, n, rng)
    f = truth_mean(spec, x)
    q = truth_scale(spec, x)
    y = f + q * eps
    return Dataset(x=x, y=y, truth=Truth(f=f, q=q, eps=eps))


# --- CSV import/export -----------------------------------------------------

def _fmt(v):
    return repr(float(v))


def write_dataset(data, path):
    """Write ``x1..xdx,y1..ydy`` CSV; when truth is known also ``<stem>.truth.csv``."""
    path = Path(path)
    header = [f"x{j + 1}" for j in range(data.d_x)] + [f"y{j + 1}" for j in range(data.d_y)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for xi, yi in zip(data.x, data.y):
            w.writerow([_fmt(v) for v in (*xi, *yi)])
    if data.truth is not None:
        t = data.truth
        d = data.d_y
        header = ([f"f{j + 1}" for j in range(d)] + [f"q{j + 1}" for j in range(d)]
                  + [f"eps{j + 1}" for j in range(d)])
        with open(truth_path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in np.hstack([t.f, t.q, t.eps]):
                w.writerow([_fmt(v) for v in row])


def truth_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".truth.csv")


def _read_numeric_csv(path, prefixes):
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: line 1: empty file")
    header = [h.strip() for h in rows[0]]
    groups = {p: [h for h in header if h.rstrip("0123456789") == p] for p in prefixes}
    for p, cols in groups.items():
        expected = [f"{p}{j + 1}" for j in range(len(cols))]
        if not cols or cols != expected:
            raise DataError(f"{path}: line 1: header must contain {p}1..{p}k columns")
    if sum(len(c) for c in groups.values()) != len(header):
        raise DataError(f"{path}: line 1: unexpected columns in header {header}")
    values = np.empty((len(rows) - 1, len(header)))
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values[lineno - 2] = [float(v) for v in row]
        except ValueError:
            raise DataError(f"{path}: line {lineno}: non-numeric field") from None
        if not np.all(np.isfinite(values[lineno - 2])):
            raise DataError(f"{path}: line {lineno}: non-finite value")
    if values.shape[0] == 0:
        raise DataError(f"{path}: line 2: no data rows")
    out = {}
    for p in prefixes:
        idx = [header.index(h) for h in groups[p]]
        out[p] = values[:, idx]
    return out


def read_dataset(path, with_truth=True):
    cols = _read_numeric_csv(path, ("x", "y"))
    truth = None
    tp = truth_path(path)
    if with_truth and tp.exists():
        t = _read_numeric_csv(tp, ("f", "q", "eps"))
        if t["f"].shape != cols["y"].shape:
            raise DataError(f"{tp}: line 1: truth sidecar does not match the dataset shape")
        truth = Truth(f=t["f"], q=t["q"], eps=t["eps"])
    return Dataset(x=cols["x"], y=cols["y"], truth=truth)


def read_scenarios(path):
    """Scenario rows from a CSV with y1..yk columns (x columns, if any, are ignored)."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    has_x = any(h.strip().rstrip("0123456789") == "x" for h in header)
    return _read_numeric_csv(path, ("x", "y") if has_x else ("y",))["y"]
