"""Monte Carlo experiments: consistency curves, rate slopes, bound audits, tails.

Each replication ``(n, rep)`` draws its data from the RNG stream
``(seed, n, rep)``, so rows are reproducible in isolation and the report
does not depend on execution order or thread count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import datagen
from .errors import BoundViolation, ErSaaError, InsufficientData
from .linalg_lp import least_squares
from .regression import fit_models, truth_models
from .residuals import (SupportBox, build_er_scenarios, build_fi_scenarios, deviation_report,
                        standardized_residuals)
from .stochprog import (NewsvendorProblem, evaluate_cost, newsvendor_true_solution, solve_saa,
                        true_value)

log = logging.getLogger(__name__)

ROW_FIELDS = ("n", "rep", "status", "mean_dev", "rms_dev", "bound6_slack", "bound7_slack",
              "v_er", "v_fi", "v_true", "abs_gap", "g_at_zhat", "dist_to_opt", "seed",
              "lemma1_slack")
METRICS = ("mean_dev", "rms_dev", "bound6_slack", "bound7_slack", "lemma1_slack", "v_er",
           "v_fi", "abs_gap", "g_at_zhat", "dist_to_opt")
SLACK_FIELDS = ("bound6_slack", "bound7_slack", "lemma1_slack")
SLACK_TOL = 1e-9
WILSON_Z = 1.959963984540054


@dataclass(frozen=True)
class ExperimentConfig:
    truth: datagen.TruthSpec
    problem: object
    x: np.ndarray
    n_grid: tuple
    replications: int
    seed: int = 0
    mean_kind: str = "ols"
    cov_kind: str = "parametric"
    k_mean: Optional[int] = None
    k_cov: Optional[int] = None
    features: str = "identity"
    m_oracle: int = 100_000
    kappa: tuple = ()
    support: Optional[SupportBox] = None
    output: Optional[str] = None

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValueError("n grid must be strictly increasing positive integers")
        if self.replications < 1:
            raise ValueError("at least one replication is required")
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(self.truth.d_x))
        object.__setattr__(self, "kappa", tuple(float(k) for k in self.kappa))
        if self.problem.d_y != self.truth.d_y:
            raise ValueError("problem and truth disagree on d_y")


@dataclass(frozen=True)
class Oracle:
    v_true: float
    stderr: float
    z_true: np.ndarray          # Monte Carlo minimizer
    z_analytic: Optional[np.ndarray]
    scenarios: object


def build_oracle(config):
    tv = true_value(config.problem, config.truth, config.x, config.m_oracle,
                    oracle_seed=config.seed)
    z_star = None
    if isinstance(config.problem, NewsvendorProblem):
        z_star = newsvendor_true_solution(config.problem, config.truth, config.x)
    return Oracle(tv.value, tv.stderr, tv.z, z_star, tv.scenarios)


def _fit(config, data):
    if config.mean_kind == "truth" and config.cov_kind == "truth":
        return truth_models(config.truth)
    return fit_models(data, config.mean_kind, config.cov_kind, k_mean=config.k_mean,
                      k_cov=config.k_cov, features=config.features)


def run_replication(config, n, rep, oracle=None):
    """One end-to-end pass: sample, fit, build scenarios, solve, audit.

    Module errors are recorded in the ``status`` field instead of raised.
    """
    if oracle is None:
        oracle = build_oracle(config)
    row = {f: math.nan for f in ROW_FIELDS}
    row.update(n=int(n), rep=int(rep), seed=int(config.seed), v_true=oracle.v_true, z_er=None)
    try:
        data = datagen.sample(config.truth, n, config.seed, stream=(n, rep))
        models = _fit(config, data)
        resid = standardized_residuals(data, models)
        er = build_er_scenarios(models, resid, config.x, config.support)
        er_sol = solve_saa(config.problem, er)
        fi = build_fi_scenarios(config.truth, data.truth.eps, config.x)
        fi_sol = solve_saa(config.problem, fi)
        dev = deviation_report(models, data, config.truth, config.x, config.support)
        g = evaluate_cost(config.problem, er_sol.z_hat, oracle.scenarios)
    except ErSaaError as exc:
        row["status"] = f"failed:{type(exc).__name__}"
        log.warning("replication n=%d rep=%d failed: %s", n, rep, exc)
        return row
    row.update(
        status="ok",
        mean_dev=dev.mean_dev,
        rms_dev=dev.rms_dev,
        bound6_slack=dev.bound6_slack,
        bound7_slack=dev.bound7_slack,
        lemma1_slack=dev.lemma1_slack,
        v_er=er_sol.value,
        v_fi=fi_sol.value,
        abs_gap=abs(er_sol.value - oracle.v_true),
        g_at_zhat=g,
        z_er=er_sol.z_hat,
    )
    if oracle.z_analytic is not None:
        row["dist_to_opt"] = float(np.linalg.norm(er_sol.z_hat - oracle.z_analytic))
    return row


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list
    oracle: Oracle
    aggregates: list = field(default_factory=list)

    def ok_rows(self, n=None):
        return [r for r in self.rows if r["status"] == "ok" and (n is None or r["n"] == n)]

    @property
    def failed(self):
        return [r for r in self.rows if r["status"] != "ok"]

    def values(self, metric, n):
        return np.array([r.get(metric, math.nan) for r in self.ok_rows(n)], dtype=float)

    def replication_mean(self, metric, n):
        v = self.values(metric, n)
        v = v[np.isfinite(v)]
        return float(v.mean()) if v.size else math.nan


def aggregate(report):
    """(n, metric, mean, stderr) over successful replications."""
    out = []
    for n in report.config.n_grid:
        for m in METRICS:
            v = report.values(m, n)
            v = v[np.isfinite(v)]
            if v.size == 0:
                continue
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else math.nan
            out.append((n, m, float(v.mean()), se))
    return out


def run_experiment(config, threads=1, oracle=None):
    if oracle is None:
        oracle = build_oracle(config)
    tasks = [(n, r) for n in config.n_grid for r in range(config.replications)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda t: run_replication(config, t[0], t[1], oracle), tasks))
    else:
        rows = [run_replication(config, n, r, oracle) for n, r in tasks]
    rows.sort(key=lambda r: (r["n"], r["rep"]))
    report = ExperimentReport(config, rows, oracle)
    report.aggregates = aggregate(report)
    return report


@dataclass(frozen=True)
class RateFit:
    metric: str
    slope: float
    stderr: float
    intercept: float


def fit_loglog(ns, means, metric="metric"):
    """OLS slope of log(mean) against log(n), with its classical standard error."""
    ns = np.asarray(ns, dtype=float)
    means = np.asarray(means, dtype=float)
    X = np.column_stack([np.ones(ns.size), np.log(ns)])
    y = np.log(means)
    beta = least_squares(X, y)
    resid = y - X @ beta
    dof = ns.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else math.nan
    sxx = float(np.sum((X[:, 1] - X[:, 1].mean()) ** 2))
    return RateFit(metric, float(beta[1]), math.sqrt(s2 / sxx), float(beta[0]))


def estimate_rate(report, metric="mean_dev", min_points=4, min_reps=10):
    """Fitted log-log slope of the replication-mean ``metric`` against n."""
    ns, means = [], []
    for n in report.config.n_grid:
        v = report.values(metric, n)
        v = v[np.isfinite(v)]
        if v.size < min_reps:
            continue
        m = float(v.mean())
        if m <= 0:
            raise InsufficientData(f"{metric} has a nonpositive mean at n={n}")
        ns.append(n)
        means.append(m)
    if len(ns) < min_points:
        raise InsufficientData(f"{metric}: need {min_points} grid points with >= {min_reps} "
                               f"replications, have {len(ns)}")
    return fit_loglog(ns, means, metric)


@dataclass(frozen=True)
class TailRow:
    n: int
    kappa: float
    exceed: int
    total: int
    freq: float
    ci_lo: float
    ci_hi: float


def wilson_interval(k, total, z=WILSON_Z):
    if total == 0:
        return math.nan, math.nan
    p = k / total
    den = 1 + z * z / total
    mid = (p + z * z / (2 * total)) / den
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / den
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == total else min(1.0, mid + half)
    return lo, hi


def estimate_tails(report, kappas, metric="mean_dev", min_reps=100):
    """Per-n frequency of ``metric > kappa`` with Wilson 95% intervals."""
    out = []
    for n in report.config.n_grid:
        v = report.values(metric, n)
        v = v[np.isfinite(v)]
        if v.size < min_reps:
            raise InsufficientData(f"tail estimates need >= {min_reps} replications at n={n}")
        for kappa in kappas:
            k = int(np.sum(v > kappa))
            lo, hi = wilson_interval(k, v.size)
            out.append(TailRow(n, float(kappa), k, int(v.size), k / v.size, lo, hi))
    return out


@dataclass(frozen=True)
class AuditResult:
    passed: bool
    worst_slack: float
    worst_field: str
    worst_row: Optional[dict]
    checked: int


def audit_bounds(rows, tol=SLACK_TOL):
    """Check every bound slack in ``rows`` (a report or a list of row dicts).

    Raises BoundViolation naming the offending row when any slack < -tol.
    """
    if isinstance(rows, ExperimentReport):
        rows = rows.rows
    rows = [r for r in rows if r["status"] == "ok"]
    if not rows:
        raise InsufficientData("no completed replications to audit")
    worst, worst_field, worst_row = math.inf, "", None
    for r in rows:
        for f in SLACK_FIELDS:
            s = float(r[f])
            if math.isnan(s):  # an uncomputable slack counts as a violation
                raise BoundViolation(f"{f} is NaN at n={r['n']} rep={r['rep']}", row=r)
            if s < worst:
                worst, worst_field, worst_row = s, f, r
    result = AuditResult(worst >= -tol, worst, worst_field, worst_row, len(rows))
    if not result.passed:
        raise BoundViolation(f"{worst_field} = {worst!r} at n={worst_row['n']} "
                             f"rep={worst_row['rep']}", row=worst_row)
    return result


def _lln_moments(t):
    return np.array([np.mean(np.max(t.q, axis=1) ** 4),
                     np.mean(np.max(1.0 / t.q, axis=1) ** 2),
                     np.mean(np.sum(t.eps**2, axis=1) ** 2)])


def lln_sanity(truth, n, seed, reps=20, m_ref=1_000_000):
    """Replication-mean relative errors of the weak-LLN sample moments.

    Moments: mean ||Q*(x)||^4, mean ||Q*(x)^{-1}||^2 and mean ||eps||^4,
    each compared with a reference expectation from ``m_ref`` separate draws.
    """
    ref = _lln_moments(datagen.sample(truth, m_ref, seed, stream=(0xEEF,)).truth)
    errs = [np.abs(_lln_moments(datagen.sample(truth, n, seed, stream=(0x11, n, r)).truth) - ref)
            / ref for r in range(reps)]
    return np.mean(errs, axis=0)


# --- output ------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def rows_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([_cell(r[f]) for f in ROW_FIELDS])
    return buf.getvalue()


def aggregates_csv(aggs):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n", "metric", "mean", "stderr"))
    for n, m, mean, se in aggs:
        w.writerow([n, m, _cell(mean), _cell(se)])
    return buf.getvalue()


def slopes_csv(fits):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("metric", "slope", "stderr"))
    for f in fits:
        w.writerow([f.metric, _cell(f.slope), _cell(f.stderr)])
    return buf.getvalue()


def rate_fits(report, metrics=("mean_dev", "rms_dev", "abs_gap", "dist_to_opt")):
    fits = []
    for m in metrics:
        try:
            fits.append(estimate_rate(report, m))
        except InsufficientData:
            continue
    return fits


def summary_text(report, fits, audit, tails):
    cfg = report.config
    lines = [f"experiment: n_grid={list(cfg.n_grid)} R={cfg.replications} seed={cfg.seed} "
             f"estimators={cfg.mean_kind}/{cfg.cov_kind}",
             f"v_true={report.oracle.v_true!r} (oracle stderr {report.oracle.stderr!r}, "
             f"m={cfg.m_oracle})",
             f"rows: {len(report.rows)} total, {len(report.failed)} failed", "", "rate slopes:"]
    if fits:
        lines += [f"  {f.metric:<12} {f.slope: .4f} +/- {f.stderr:.4f}" for f in fits]
    else:
        lines.append("  insufficient data (need >= 4 grid points and >= 10 replications)")
    lines += ["", "bound audit:"]
    if isinstance(audit, AuditResult):
        lines.append(f"  PASS  worst slack {audit.worst_slack!r} ({audit.worst_field}) "
                     f"over {audit.checked} rows")
    else:
        lines.append(f"  FAIL  {audit}")
    lines += ["", "tail frequencies:"]
    if isinstance(tails, list) and tails:
        lines.append("  n        kappa      freq    [wilson 95%]")
        lines += [f"  {t.n:<8} {t.kappa:<10.4g} {t.freq:<7.3f} [{t.ci_lo:.3f}, {t.ci_hi:.3f}]"
                  for t in tails]
    else:
        lines.append(f"  {tails or 'no thresholds configured'}")
    return "\n".join(lines) + "\n"


def write_report(report, outdir):
    """Write rows.csv, aggregate.csv, slopes.csv and summary.txt; returns the audit.

    The audit outcome is an AuditResult on success or the BoundViolation.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fits = rate_fits(report)
    try:
        audit = audit_bounds(report)
    except (BoundViolation, InsufficientData) as exc:
        audit = exc
    tails = None
    if report.config.kappa:
        try:
            tails = estimate_tails(report, report.config.kappa)
        except InsufficientData as exc:
            tails = str(exc)
    (outdir / "rows.csv").write_text(rows_csv(report.rows))
    (outdir / "aggregate.csv").write_text(aggregates_csv(report.aggregates))
    (outdir / "slopes.csv").write_text(slopes_csv(fits))
    (outdir / "summary.txt").write_text(summary_text(report, fits, audit, tails))
    return audit
