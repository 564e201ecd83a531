"""Dense least squares and a two-phase simplex LP solver (Bland's rule).

Everything here works on small dense numpy arrays. The LP solver handles
standard form only::

    minimize    c @ x
    subject to  A @ x == b,  x >= 0
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalBreakdown, RankDeficient

RANK_TOL = 1e-10
PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


def cholesky(gram, rank_tol=RANK_TOL):
    """Lower Cholesky factor of a symmetric PSD matrix.

    Raises RankDeficient when a pivot falls below ``rank_tol`` times the
    largest diagonal entry of ``gram``.
    """
    gram = np.asarray(gram, dtype=float)
    p = gram.shape[0]
    scale = max(float(np.max(np.abs(np.diag(gram)))) if p else 0.0, np.finfo(float).tiny)
    L = np.zeros_like(gram)
    for j in range(p):
        pivot = gram[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > rank_tol * scale:
            raise RankDeficient(f"Gram pivot {pivot:.3e} at column {j} below tolerance")
        L[j, j] = np.sqrt(pivot)
        if j + 1 < p:
            L[j + 1:, j] = (gram[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _cho_solve(L, rhs):
    # forward then back substitution, rhs may be 2-D
    p = L.shape[0]
    y = np.array(rhs, dtype=float, copy=True)
    for i in range(p):
        y[i] = (y[i] - L[i, :i] @ y[:i]) / L[i, i]
    for i in reversed(range(p)):
        y[i] = (y[i] - L[i + 1:, i] @ y[i + 1:]) / L[i, i]
    return y


def least_squares(design, targets, rank_tol=RANK_TOL):
    """Least-squares coefficients for each column of ``targets``.

    Solves the normal equations ``X'X beta = X'Y`` with a Cholesky
    factorization. A 1-D ``targets`` returns a 1-D coefficient vector.
    """
    X = np.asarray(design, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if X.ndim != 2:
        raise ValueError("design must be a 2-D array")
    if Y.shape[0] != X.shape[0]:
        raise ValueError(f"targets have {Y.shape[0]} rows, design has {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("least_squares inputs must be finite")
    L = cholesky(X.T @ X, rank_tol=rank_tol)
    return _cho_solve(L, X.T @ Y)


@dataclass(frozen=True)
class LinearProgram:
    """Standard-form LP: minimize c @ x subject to A @ x == b, x >= 0."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.ndim != 2:
            A = A.reshape(len(b), -1)
        if A.shape != (b.size, c.size):
            raise ValueError(f"constraint matrix shape {A.shape} does not match "
                             f"({b.size}, {c.size})")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("LP data must be finite")
        for name, arr in (("c", c), ("A", A), ("b", b)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class LpSolution:
    status: str
    x: Optional[np.ndarray] = None
    value: Optional[float] = None
    iterations: int = 0


class _Tableau:
    """Dense simplex tableau; the last row holds reduced costs and -objective."""

    def __init__(self, T, basis, pivot_tol, cost_tol):
        self.T = T
        self.basis = basis
        self.pivot_tol = pivot_tol
        self.cost_tol = cost_tol
        self.iterations = 0

    def pivot(self, row, col):
        T = self.T
        piv = T[row, col]
        if abs(piv) < self.pivot_tol:
            raise NumericalBreakdown(f"pivot {piv:.3e} below tolerance")
        T[row] /= piv
        factor = T[:, col].copy()
        factor[row] = 0.0
        T -= np.outer(factor, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col
        self.iterations += 1

    def entering(self, ncols):
        # Bland: lowest-index column with negative reduced cost
        neg = np.flatnonzero(self.T[-1, :ncols] < -self.cost_tol)
        return int(neg[0]) if neg.size else -1

    def leaving(self, col):
        T = self.T
        column = T[:-1, col]
        rows = np.flatnonzero(column > self.pivot_tol)
        if rows.size == 0:
            return -1
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
        # Bland: among tied rows, the basic variable with the lowest index leaves
        return int(tied[np.argmin(np.asarray(self.basis)[tied])])

    def run(self, ncols, max_iter):
        while True:
            col = self.entering(ncols)
            if col < 0:
                return OPTIMAL
            row = self.leaving(col)
            if row < 0:
                return UNBOUNDED
            self.pivot(row, col)
            if self.iterations > max_iter:
                raise NumericalBreakdown(f"simplex exceeded {max_iter} pivots")


def solve_lp(lp, pivot_tol=PIVOT_TOL, feas_tol=FEAS_TOL, max_iter=None):
    """Two-phase tableau simplex with Bland's anti-cycling rule.

    Returns an LpSolution whose status is ``optimal``, ``infeasible`` or
    ``unbounded``. The pivoting sequence is fully deterministic, so the same
    input always yields the same vertex.
    """
    c, A, b = lp.c, lp.A, lp.b
    m, N = A.shape
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    cost_tol = pivot_tol

    if m == 0:
        if np.any(c < -cost_tol):
            return LpSolution(UNBOUNDED)
        return LpSolution(OPTIMAL, np.zeros(N), 0.0)

    sign = np.where(b < 0, -1.0, 1.0)
    As = A * sign[:, None]
    bs = b * sign

    # phase 1: artificial basis, minimize the sum of artificials
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = As
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = bs
    T[-1, :N] = -As.sum(axis=0)
    T[-1, -1] = -bs.sum()
    tab = _Tableau(T, list(range(N, N + m)), pivot_tol, cost_tol)
    tab.run(N, max_iter)

    scale = 1.0 + float(np.max(np.abs(b)))
    if -tab.T[-1, -1] > feas_tol * scale:
        return LpSolution(INFEASIBLE, iterations=tab.iterations)

    # drive zero-level artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if tab.basis[r] >= N:
            cand = np.flatnonzero(np.abs(tab.T[r, :N]) > pivot_tol)
            if cand.size == 0:
                continue
            tab.pivot(r, int(cand[0]))
        keep.append(r)
    rows = keep + [m]
    T2 = np.hstack([tab.T[rows, :N], tab.T[rows, -1:]])
    basis = [tab.basis[r] for r in keep]

    # phase 2
    cb = c[basis]
    T2[-1, :N] = c - cb @ T2[:-1, :N]
    T2[-1, -1] = -cb @ T2[:-1, -1]
    tab2 = _Tableau(T2, basis, pivot_tol, cost_tol)
    tab2.iterations = tab.iterations
    status = tab2.run(N, max_iter)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=tab2.iterations)

    # refine the basic solution against the original data
    x = np.zeros(N)
    B = As[keep][:, tab2.basis]
    try:
        xb = np.linalg.solve(B, bs[keep])
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdown("final basis is singular") from exc
    x[tab2.basis] = xb
    if np.any(x < -feas_tol * scale):
        raise NumericalBreakdown("basic solution violates nonnegativity")
    x = np.maximum(x, 0.0)
    if np.max(np.abs(A @ x - b), initial=0.0) > feas_tol * scale:
        raise NumericalBreakdown("basic solution violates equality constraints")
    return LpSolution(OPTIMAL, x, float(c @ x), tab2.iterations)
