"""Cost structures c(z, y), SAA solves over scenario sets, and true-value oracles."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .datagen import make_rng, sample_errors, truth_mean, truth_scale
from .errors import (InvalidSpec, RecourseInfeasible, SaaInfeasible, SaaUnbounded,
                     TruthUnavailable, Unsupported)
from .linalg_lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, solve_lp
from .residuals import FI_SAA, ScenarioSet

MAX_TWO_STAGE_SCENARIOS = 500


def _vec(v, n=None):
    a = np.asarray(v, dtype=float).reshape(-1)
    if n is not None:
        a = np.broadcast_to(a, (n,)).copy()
    return a


@dataclass(frozen=True)
class NewsvendorProblem:
    """Independent products with holding cost h and backorder cost b.

    c(z, y) = sum_j h_j (z_j - y_j)^+ + b_j (y_j - z_j)^+  over the box [z_lo, z_hi].
    """

    h: np.ndarray
    b: np.ndarray
    z_lo: Optional[np.ndarray] = None
    z_hi: Optional[np.ndarray] = None

    kind = "newsvendor"

    def __post_init__(self):
        h = _vec(self.h)
        b = _vec(self.b, h.size)
        lo = _vec(-np.inf if self.z_lo is None else self.z_lo, h.size)
        hi = _vec(np.inf if self.z_hi is None else self.z_hi, h.size)
        if np.any(h <= 0) or np.any(b <= 0):
            raise InvalidSpec("newsvendor costs must be positive")
        if np.any(lo > hi):
            raise InvalidSpec("newsvendor box must satisfy z_lo <= z_hi")
        for name, v in (("h", h), ("b", b), ("z_lo", lo), ("z_hi", hi)):
            object.__setattr__(self, name, v)

    @property
    def d_y(self):
        return self.h.size

    @property
    def d_z(self):
        return self.h.size

    @property
    def critical_ratio(self):
        return self.b / (self.b + self.h)

    @property
    def lipschitz(self):
        """Euclidean Lipschitz constant of y -> c(z, y), uniform in z."""
        return float(np.linalg.norm(np.maximum(self.h, self.b)))

    def costs(self, z, points):
        """c(z, y^i) for every row of ``points``."""
        diff = np.asarray(points, dtype=float) - np.asarray(z, dtype=float)
        return (self.b * np.maximum(diff, 0.0) + self.h * np.maximum(-diff, 0.0)).sum(axis=-1)

    def contains(self, z, tol=1e-9):
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.z_lo - tol) and np.all(z <= self.z_hi + tol))

    def to_dict(self):
        return {"kind": "newsvendor", "h": self.h.tolist(), "b": self.b.tolist(),
                "z_lo": _json_bounds(self.z_lo), "z_hi": _json_bounds(self.z_hi)}


@dataclass(frozen=True)
class TwoStageLP:
    """c(z, y) = c1.z + min{ d.w : W w = H y + h0 - T z, w >= 0 },
    first stage Z = {z >= 0 : A z <= b_A}."""

    c1: np.ndarray
    A: np.ndarray
    b_A: np.ndarray
    d: np.ndarray
    W: np.ndarray
    T: np.ndarray
    H: np.ndarray
    h0: np.ndarray
    lipschitz_bound: Optional[float] = None
    certificate_samples: int = 32

    kind = "two_stage_lp"

    def __post_init__(self):
        c1 = _vec(self.c1)
        d = _vec(self.d)
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        m2 = W.shape[0]
        A = np.asarray(self.A, dtype=float).reshape(-1, c1.size)
        b_A = _vec(self.b_A)
        T = np.asarray(self.T, dtype=float).reshape(m2, c1.size)
        H = np.asarray(self.H, dtype=float).reshape(m2, -1)
        h0 = _vec(0.0 if self.h0 is None else self.h0, m2)
        if W.shape[1] != d.size or A.shape[0] != b_A.size:
            raise InvalidSpec("two-stage LP dimensions are inconsistent")
        for name, v in (("c1", c1), ("d", d), ("W", W), ("A", A), ("b_A", b_A), ("T", T),
                        ("H", H), ("h0", h0)):
            object.__setattr__(self, name, v)
        self._certify_complete_recourse()
        if self.lipschitz_bound is None:
            object.__setattr__(self, "lipschitz_bound", self._dual_vertex_lipschitz())

    def _certify_complete_recourse(self):
        rng = make_rng(0, 0x5EC0)
        scale = 1.0 + float(np.max(np.abs(self.H), initial=0.0)) + float(np.max(np.abs(self.h0)))
        for _ in range(self.certificate_samples):
            v = rng.standard_normal(self.W.shape[0]) * scale
            status = solve_lp(LinearProgram(self.d, self.W, v)).status
            if status != OPTIMAL:
                raise InvalidSpec(f"recourse LP is {status} for a sampled right-hand side; "
                                  "complete recourse is required")

    def _dual_vertex_lipschitz(self, max_bases=20000):
        # Q(v) = max{pi.v : W'pi <= d} is Lipschitz with constant max ||H'pi||
        # over the (bounded) dual vertices
        m, p = self.W.shape
        best = 0.0
        for count, cols in enumerate(itertools.combinations(range(p), m)):
            if count >= max_bases:
                raise InvalidSpec("too many dual bases; pass lipschitz_bound explicitly")
            B = self.W[:, cols].T
            if abs(np.linalg.det(B)) < 1e-12:
                continue
            pi = np.linalg.solve(B, self.d[list(cols)])
            if np.all(self.W.T @ pi <= self.d + 1e-9):
                best = max(best, float(np.linalg.norm(self.H.T @ pi)))
        return best

    @property
    def d_z(self):
        return self.c1.size

    @property
    def d_y(self):
        return self.H.shape[1]

    @property
    def lipschitz(self):
        return float(self.lipschitz_bound)

    def recourse_value(self, z, y):
        rhs = self.H @ np.asarray(y, dtype=float) + self.h0 - self.T @ np.asarray(z, dtype=float)
        sol = solve_lp(LinearProgram(self.d, self.W, rhs))
        if sol.status != OPTIMAL:
            raise RecourseInfeasible(f"recourse LP {sol.status} at y={np.asarray(y).tolist()}")
        return sol.value

    def costs(self, z, points):
        first = float(self.c1 @ np.asarray(z, dtype=float))
        return np.array([first + self.recourse_value(z, y) for y in np.atleast_2d(points)])

    def contains(self, z, tol=1e-8):
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= -tol) and np.all(self.A @ z <= self.b_A + tol))

    def to_dict(self):
        return {"kind": "two_stage_lp", "c1": self.c1.tolist(), "A": self.A.tolist(),
                "b_A": self.b_A.tolist(), "d": self.d.tolist(), "W": self.W.tolist(),
                "T": self.T.tolist(), "H": self.H.tolist(), "h0": self.h0.tolist(),
                "lipschitz_bound": self.lipschitz_bound}


def _json_bounds(v):
    return [None if not np.isfinite(x) else float(x) for x in v]


def _from_json_bounds(v, default):
    if v is None:
        return None
    return [default if x is None else x for x in v]


def problem_from_dict(doc):
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind == "newsvendor":
        return NewsvendorProblem(h=doc["h"], b=doc["b"],
                                 z_lo=_from_json_bounds(doc.get("z_lo"), -np.inf),
                                 z_hi=_from_json_bounds(doc.get("z_hi"), np.inf))
    if kind == "two_stage_lp":
        return TwoStageLP(c1=doc["c1"], A=doc["A"], b_A=doc["b_A"], d=doc["d"], W=doc["W"],
                          T=doc["T"], H=doc["H"], h0=doc.get("h0"),
                          lipschitz_bound=doc.get("lipschitz_bound"))
    raise InvalidSpec(f"unknown problem kind {kind!r}")


def load_problem(path):
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


@dataclass(frozen=True)
class SaaSolution:
    z_hat: np.ndarray
    value: float
    status: str = OPTIMAL


def weighted_lower_quantile(values, weights, tau):
    """Smallest v among ``values`` with cumulative weight of {<= v} at least tau."""
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(weights[order])
    i = int(np.searchsorted(cw, tau - 1e-12, side="left"))
    return float(values[order[min(i, len(order) - 1)]])


def evaluate_cost(problem, z, scenarios):
    """Scenario-weighted average of c(z, y^i)."""
    return float(scenarios.weights @ problem.costs(z, scenarios.points))


def _solve_newsvendor(problem, scenarios):
    z = np.empty(problem.d_y)
    for j in range(problem.d_y):
        q = weighted_lower_quantile(scenarios.points[:, j], scenarios.weights,
                                    problem.critical_ratio[j])
        z[j] = min(max(q, problem.z_lo[j]), problem.z_hi[j])
    return SaaSolution(z, evaluate_cost(problem, z, scenarios))


def extensive_form(problem, scenarios):
    """Extensive-form LP over variables (z, first-stage slacks, w^1..w^n)."""
    n = scenarios.n
    dz, mA = problem.d_z, problem.A.shape[0]
    m2, p = problem.W.shape
    nvar = dz + mA + n * p
    c = np.zeros(nvar)
    c[:dz] = problem.c1
    A = np.zeros((mA + n * m2, nvar))
    b = np.zeros(mA + n * m2)
    A[:mA, :dz] = problem.A
    A[:mA, dz:dz + mA] = np.eye(mA)
    b[:mA] = problem.b_A
    for i, (y, p_i) in enumerate(zip(scenarios.points, scenarios.weights)):
        rows = slice(mA + i * m2, mA + (i + 1) * m2)
        cols = slice(dz + mA + i * p, dz + mA + (i + 1) * p)
        c[cols] = p_i * problem.d
        A[rows, :dz] = problem.T
        A[rows, cols] = problem.W
        b[rows] = problem.H @ y + problem.h0
    return LinearProgram(c, A, b)


def _solve_two_stage(problem, scenarios):
    if scenarios.n > MAX_TWO_STAGE_SCENARIOS:
        raise Unsupported(f"two-stage SAA is limited to {MAX_TWO_STAGE_SCENARIOS} scenarios")
    sol = solve_lp(extensive_form(problem, scenarios))
    if sol.status == INFEASIBLE:
        raise SaaInfeasible("extensive form is infeasible")
    if sol.status == UNBOUNDED:
        raise SaaUnbounded("extensive form is unbounded")
    return SaaSolution(sol.x[:problem.d_z].copy(), sol.value)


def solve_saa(problem, scenarios):
    """Minimize the scenario-weighted cost over the feasible set.

    Newsvendor: per-product smallest weighted critical-ratio quantile, clamped
    to the box. Two-stage LP: extensive form solved by the simplex method.
    """
    if scenarios.d_y != problem.d_y:
        raise ValueError(f"scenario dimension {scenarios.d_y} != problem d_y {problem.d_y}")
    if isinstance(problem, NewsvendorProblem):
        return _solve_newsvendor(problem, scenarios)
    return _solve_two_stage(problem, scenarios)


def newsvendor_as_two_stage(problem):
    """Equivalent TwoStageLP (requires a finite box with z_lo >= 0).

    Recourse w = (u, o, v) with u - o = y - z (plus a slack for the upper box).
    """
    if not (np.all(np.isfinite(problem.z_hi)) and np.all(problem.z_lo >= 0)):
        raise Unsupported("LP reformulation needs a finite box with z_lo >= 0")
    d = problem.d_y
    # first stage: z <= z_hi and -z <= -z_lo
    A = np.vstack([np.eye(d), -np.eye(d)])
    b_A = np.concatenate([problem.z_hi, -problem.z_lo])
    W = np.hstack([np.eye(d), -np.eye(d)])
    cost = np.concatenate([problem.b, problem.h])
    return TwoStageLP(c1=np.zeros(d), A=A, b_A=b_A, d=cost, W=W, T=np.eye(d), H=np.eye(d),
                      h0=np.zeros(d), lipschitz_bound=problem.lipschitz)


def _fi_oracle_scenarios(spec, x_new, m_oracle, oracle_seed):
    if spec is None:
        raise TruthUnavailable("true value needs the data-generating model")
    x_new = np.asarray(x_new, dtype=float).reshape(spec.d_x)
    eps = sample_errors(spec, m_oracle, make_rng(oracle_seed, 0x0AC1E))
    pts = truth_mean(spec, x_new) + truth_scale(spec, x_new) * eps
    return ScenarioSet.uniform(pts, FI_SAA)


@dataclass(frozen=True)
class TrueValue:
    value: float
    z: np.ndarray
    stderr: float
    scenarios: ScenarioSet


def true_value(problem, spec, x_new, m_oracle=100_000, oracle_seed=0):
    """Monte Carlo estimate of v*(x) and z*(x) from ``m_oracle`` fresh FI scenarios."""
    sc = _fi_oracle_scenarios(spec, x_new, m_oracle, oracle_seed)
    sol = solve_saa(problem, sc)
    c = problem.costs(sol.z_hat, sc.points)
    return TrueValue(sol.value, sol.z_hat, float(c.std(ddof=1) / np.sqrt(c.size))
                     if c.size > 1 else 0.0, sc)


def error_quantile(spec, tau):
    """tau-quantile of a single (unit-variance) error component."""
    if spec.errors == "standard_normal":
        return float(stats.norm.ppf(tau))
    if spec.errors == "uniform":
        r = np.sqrt(3.0)
        return float(-r + 2 * r * tau)
    nu = spec.df
    return float(stats.t.ppf(tau, nu) * np.sqrt((nu - 2.0) / nu))


def newsvendor_true_solution(problem, spec, x_new):
    """Analytic z*(x): the critical-ratio quantile of f*(x) + Q*(x) eps, clamped."""
    x_new = np.asarray(x_new, dtype=float).reshape(spec.d_x)
    f, q = truth_mean(spec, x_new), truth_scale(spec, x_new)
    z = np.array([f[j] + q[j] * error_quantile(spec, problem.critical_ratio[j])
                  for j in range(problem.d_y)])
    return np.clip(z, problem.z_lo, problem.z_hi)
