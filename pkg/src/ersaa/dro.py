"""Residuals-based DRO over a chi-square ball of scenario reweightings.

The ambiguity set around the uniform center with radius rho is

    {q in simplex : (1/n) sum_i (n q_i - 1)^2 <= rho}

which is the Euclidean ball ||q - 1/n|| <= sqrt(rho / n) intersected with
the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Unsupported
from .residuals import ScenarioSet
from .stochprog import NewsvendorProblem, solve_saa

GOLDEN_TOL = 1e-8
CD_SWEEPS = 50


@dataclass(frozen=True)
class AmbiguitySet:
    center: ScenarioSet
    radius: float
    divergence: str = "chi_square"

    def __post_init__(self):
        if self.divergence != "chi_square":
            raise Unsupported(f"divergence {self.divergence!r} is not implemented")
        if not self.radius >= 0:
            raise ValueError("radius must be nonnegative")
        n = self.center.n
        if np.max(np.abs(self.center.weights - 1.0 / n)) > 1e-12:
            raise Unsupported("chi-square ball requires a uniformly weighted center")

    def divergence_of(self, q):
        n = self.center.n
        return float(np.mean((n * np.asarray(q) - 1.0) ** 2))

    def contains(self, q, tol=1e-8):
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= -tol) and abs(q.sum() - 1) <= tol
                    and self.divergence_of(q) <= self.radius + tol)


@dataclass(frozen=True)
class DroSolution:
    z_hat: np.ndarray
    worst_value: float
    worst_weights: np.ndarray


def chi2_worst_case(costs, rho):
    """Maximize q.costs over the chi-square ball; returns (value, q).

    The maximizer is supported on the k largest costs for some k, with
    q_i = 1/k + t (c_i - mean_k) on the support and the ball constraint
    active, which fixes t. Every admissible k is scanned and the best
    feasible candidate kept.
    """
    c = np.asarray(costs, dtype=float).reshape(-1)
    n = c.size
    u = np.full(n, 1.0 / n)
    if rho <= 0 or n == 1 or np.all(c == c[0]):
        return float(u @ c), u
    r2 = rho / n

    order = np.argsort(-c, kind="stable")
    cs = c[order]
    d = cs - cs[0]
    k = np.arange(1, n + 1)
    mean = np.cumsum(d) / k
    var = np.maximum(np.cumsum(d * d) - k * mean**2, 0.0)
    gap = r2 - (1.0 / k - 1.0 / n)
    scale = float(np.max(np.abs(d)))
    flat = var <= (1e-13 * scale) ** 2 * k
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(flat, 0.0, np.sqrt(np.maximum(gap, 0.0) / var))
        q_last = 1.0 / k + t * (d - mean)
        nxt = np.append(d[1:], -np.inf)
        q_next = 1.0 / k + t * (nxt - mean)
    # a flat support is admissible only as the whole tie group at the top
    ok = (gap >= -1e-15) & np.where(flat, nxt < d, (q_last >= -1e-15) & (q_next <= 1e-15))

    best, best_q = -np.inf, u
    for kk in np.flatnonzero(ok) + 1:
        top = d[:kk]
        m = top.mean()
        v = float(np.sum((top - m) ** 2))
        tt = 0.0 if flat[kk - 1] else np.sqrt(max(gap[kk - 1], 0.0) / v)
        q = np.zeros(n)
        q[order[:kk]] = np.maximum(1.0 / kk + tt * (top - m), 0.0)
        q /= q.sum()
        val = float(q @ c)
        if val > best:
            best, best_q = val, q
    return best, best_q


def worst_case_expectation(amb, costs):
    """Exact sup over the ambiguity set of the q-weighted cost; (value, weights)."""
    costs = np.asarray(costs, dtype=float).reshape(-1)
    if costs.size != amb.center.n:
        raise ValueError("one cost per scenario is required")
    return chi2_worst_case(costs, amb.radius)


def worst_case_cost(problem, z, amb):
    """Worst-case expected cost of a fixed decision (any problem type)."""
    return worst_case_expectation(amb, problem.costs(z, amb.center.points))


def _golden(f, a, b, tol=GOLDEN_TOL):
    if b - a <= tol:
        x = 0.5 * (a + b)
        return x, f(x)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    # convexity: the minimum is at the bracket midpoint or an endpoint checked so far
    cands = [(fc, c), (fd, d)]
    x = 0.5 * (a + b)
    cands.append((f(x), x))
    fx, x = min(cands)
    return x, fx


def solve_dro_newsvendor(problem, amb):
    """min_z sup_q sum_i q_i c(z, y^i) for a newsvendor problem.

    Golden-section search when d_y = 1, cyclic coordinate descent with a
    golden-section line search per coordinate otherwise.
    """
    if not isinstance(problem, NewsvendorProblem):
        raise Unsupported("DRO outer minimization is implemented for the newsvendor only")
    sc = amb.center
    if sc.d_y != problem.d_y:
        raise ValueError("scenario dimension does not match the problem")
    if amb.radius == 0:
        sol = solve_saa(problem, sc)
        return DroSolution(sol.z_hat, sol.value, sc.weights.copy())

    pts = sc.points
    lo = np.clip(pts.min(axis=0), problem.z_lo, problem.z_hi)
    hi = np.clip(pts.max(axis=0), problem.z_lo, problem.z_hi)

    def objective(z):
        return worst_case_expectation(amb, problem.costs(z, pts))[0]

    z = solve_saa(problem, sc).z_hat.copy()
    sweeps = 1 if problem.d_y == 1 else CD_SWEEPS
    for _ in range(sweeps):
        prev = z.copy()
        for j in range(problem.d_y):
            def along(t, j=j):
                trial = z.copy()
                trial[j] = t
                return objective(trial)
            z[j], _ = _golden(along, lo[j], hi[j])
        if problem.d_y > 1 and np.max(np.abs(z - prev)) <= GOLDEN_TOL:
            break
    value, weights = worst_case_expectation(amb, problem.costs(z, pts))
    return DroSolution(z, value, weights)
