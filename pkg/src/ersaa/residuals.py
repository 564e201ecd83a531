"""Standardized residuals, scenario sets and deviation diagnostics.

All covariance roots are diagonal, so matrix operator norms reduce to the
largest absolute diagonal entry and inverses are elementwise reciprocals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import truth_mean, truth_scale
from .errors import TruthUnavailable

ER_SAA = "er_saa"
FI_SAA = "fi_saa"


@dataclass(frozen=True)
class SupportBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("box bounds differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("support box must satisfy lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unbounded(cls, d_y):
        return cls(np.full(d_y, -np.inf), np.full(d_y, np.inf))

    def project(self, points):
        return np.clip(points, self.lower, self.upper)

    def contains(self, points):
        points = np.asarray(points)
        return np.all((points >= self.lower) & (points <= self.upper), axis=-1)


@dataclass(frozen=True)
class ScenarioSet:
    points: np.ndarray   # (n, d_y)
    weights: np.ndarray  # (n,)
    provenance: str = ER_SAA

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.size != pts.shape[0]:
            raise ValueError("one weight per scenario is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("scenario weights must form a probability vector")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points, provenance=ER_SAA):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]), provenance)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d_y(self):
        return self.points.shape[1]


def standardized_residuals(data, models):
    """eps-hat^i = Q-hat(x^i)^{-1} (y^i - f-hat(x^i)), row per observation."""
    return (data.y - models.predict_mean(data.x)) / models.predict_scale(data.x)


def build_er_scenarios(models, residuals, x_new, box=None):
    """Scenarios proj_Y(f-hat(x) + Q-hat(x) eps-hat^i) with uniform weights."""
    raw = models.predict_mean(x_new) + models.predict_scale(x_new) * residuals
    pts = raw if box is None else box.project(raw)
    return ScenarioSet.uniform(pts, ER_SAA)


def build_fi_scenarios(spec, true_eps, x_new):
    """Full-information scenarios f*(x) + Q*(x) eps^i (no projection)."""
    if spec is None or true_eps is None:
        raise TruthUnavailable("full-information scenarios need the true model and errors")
    x_new = np.asarray(x_new, dtype=float).reshape(spec.d_x)
    eps = np.asarray(true_eps, dtype=float).reshape(-1, spec.d_y)
    return ScenarioSet.uniform(truth_mean(spec, x_new) + truth_scale(spec, x_new) * eps, FI_SAA)


def _rms(v):
    return float(np.sqrt(np.mean(np.square(v))))


@dataclass(frozen=True)
class DeviationReport:
    mean_dev: float
    rms_dev: float
    bound6_terms: tuple
    bound7_terms: tuple
    sup_inv_Qhat: float
    lemma1_lhs: float
    lemma1_rhs: float
    projected_dev: float = 0.0   # mean || proj(ER point) - FI point ||
    # the supremum over the covariate space is taken over the training
    # covariates plus the query point only
    sup_is_sample_max: bool = field(default=True)

    @property
    def bound6(self):
        return float(sum(self.bound6_terms))

    @property
    def bound7(self):
        return float(sum(self.bound7_terms))

    @property
    def bound6_slack(self):
        return self.bound6 - self.mean_dev

    @property
    def bound7_slack(self):
        return self.bound7 - self.mean_dev

    @property
    def lemma1_slack(self):
        return self.lemma1_rhs - self.lemma1_lhs


def deviation_report(models, data, spec, x_new, box=None):
    """Deviation terms between ER and FI scenarios and both upper bounds.

    The deviation of sample i is the unprojected ER point minus the FI point.
    Bound terms follow the two mean-deviation inequalities term by term.
    """
    if data.truth is None or spec is None:
        raise TruthUnavailable("deviation diagnostics need synthetic ground truth")
    x_new = np.asarray(x_new, dtype=float).reshape(data.d_x)
    t = data.truth
    f_hat_x = models.predict_mean(x_new)
    q_hat_x = models.predict_scale(x_new)
    f_x = truth_mean(spec, x_new)
    q_x = truth_scale(spec, x_new)
    f_hat = models.predict_mean(data.x)
    q_hat = models.predict_scale(data.x)
    f_star, q_star, eps = t.f, t.q, t.eps

    eps_hat = (data.y - f_hat) / q_hat
    er_raw = f_hat_x + q_hat_x * eps_hat
    fi = f_x + q_x * eps
    dev = np.linalg.norm(er_raw - fi, axis=1)
    er = er_raw if box is None else box.project(er_raw)
    projected = np.linalg.norm(er - fi, axis=1)

    eps_norm = np.linalg.norm(eps, axis=1)
    f_err = np.linalg.norm(f_star - f_hat, axis=1)
    inv_hat = np.max(np.abs(1.0 / q_hat), axis=1)
    inv_star = np.max(np.abs(1.0 / q_star), axis=1)
    inv_diff = np.max(np.abs(1.0 / q_hat - 1.0 / q_star), axis=1)
    q_diff = np.max(np.abs(q_star - q_hat), axis=1)
    q_star_norm = np.max(np.abs(q_star), axis=1)

    norm_qhat_x = float(np.max(np.abs(q_hat_x)))
    t1 = float(np.linalg.norm(f_hat_x - f_x))
    t2 = float(np.max(np.abs(q_hat_x - q_x))) * float(np.mean(eps_norm))
    t3 = (norm_qhat_x * _rms(inv_diff) * float(np.mean(q_star_norm**4)) ** 0.25
          * float(np.mean(eps_norm**4)) ** 0.25)
    t4 = norm_qhat_x * _rms(inv_hat) * _rms(f_err)

    sup_inv = float(max(inv_hat.max(), np.max(1.0 / np.abs(q_hat_x))))
    t3_alt = norm_qhat_x * sup_inv * _rms(q_diff) * _rms(eps_norm)
    t4_alt = norm_qhat_x * sup_inv * float(np.mean(f_err))

    return DeviationReport(
        mean_dev=float(np.mean(dev)),
        rms_dev=_rms(dev),
        bound6_terms=(t1, t2, t3, t4),
        bound7_terms=(t1, t2, t3_alt, t4_alt),
        sup_inv_Qhat=sup_inv,
        lemma1_lhs=_rms(inv_hat),
        lemma1_rhs=_rms(inv_diff) + _rms(inv_star),
        projected_dev=float(np.mean(projected)),
    )
