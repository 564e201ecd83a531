import math

import numpy as np
import pytest

from ersaa.datagen import TruthSpec
from ersaa.errors import BoundViolation, InsufficientData
from ersaa.harness import (ExperimentConfig, ExperimentReport, aggregate, audit_bounds,
                           build_oracle, estimate_rate, estimate_tails, fit_loglog, lln_sanity,
                           rows_csv, run_experiment, run_replication, wilson_interval,
                           write_report)
from ersaa.stochprog import NewsvendorProblem

LOGLIN = TruthSpec(d_x=2, d_y=1, intercept=[2.0], coef=[[1.0, -1.0]], variance="log_linear",
                   sigma=[-1.0], theta=[[1.0, 0.5]])
NV = NewsvendorProblem(h=[1.0], b=[1.0])


def config(**kw):
    base = dict(truth=LOGLIN, problem=NV, x=[0.5, 0.5], n_grid=(100, 200), replications=2,
                seed=7, m_oracle=20_000)
    base.update(kw)
    return ExperimentConfig(**base)


def fake_report(values, n_grid, metric="mean_dev"):
    """Report whose rows carry prescribed metric values (one list per n)."""
    cfg = config(n_grid=tuple(n_grid), replications=max(len(v) for v in values))
    rows = []
    for n, vals in zip(n_grid, values):
        for r, v in enumerate(vals):
            rows.append({"n": n, "rep": r, "status": "ok", metric: v})
    return ExperimentReport(cfg, rows, oracle=None)


def test_config_validation():
    with pytest.raises(ValueError):
        config(n_grid=(200, 100))
    with pytest.raises(ValueError):
        config(replications=0)
    with pytest.raises(ValueError):
        config(problem=NewsvendorProblem(h=[1, 1], b=[1, 1]))


def test_replication_is_deterministic():
    cfg = config()
    oracle = build_oracle(cfg)
    a = rows_csv([run_replication(cfg, 400, 0, oracle)])
    b = rows_csv([run_replication(cfg, 400, 0, build_oracle(cfg))])
    assert a == b
    assert "ok" in a


def test_truth_forced_estimators():
    cfg = config(mean_kind="truth", cov_kind="truth")
    row = run_replication(cfg, 300, 1)
    assert row["status"] == "ok"
    assert row["mean_dev"] <= 1e-12  # residual round trip is exact up to rounding
    assert abs(row["v_er"] - row["v_fi"]) <= 1e-12
    # every bound term vanishes, so both sides are 0 up to rounding
    assert abs(row["bound6_slack"]) <= 1e-12 and abs(row["bound7_slack"]) <= 1e-12


def test_noiseless_limit():
    spec = TruthSpec(d_x=2, d_y=1, intercept=[2.0], coef=[[1.0, -1.0]], sigma=[1e-6])
    cfg = config(truth=spec)
    row = run_replication(cfg, 200, 0)
    assert row["mean_dev"] < 1e-5
    assert abs(row["v_er"] - row["v_true"]) < 1e-5
    assert row["dist_to_opt"] < 1e-5


def test_failed_rows_recorded_not_raised():
    # n=2 gives a rank deficient OLS fit with intercept and two covariates
    cfg = config(n_grid=(2, 100), replications=2)
    rep = run_experiment(cfg)
    failed = rep.failed
    assert len(failed) == 2 and all(r["status"].startswith("failed:") for r in failed)
    assert all(r["n"] == 2 for r in failed)
    assert {a[0] for a in rep.aggregates} == {100}


def test_threads_do_not_change_rows():
    cfg = config(n_grid=(50, 100, 150), replications=3)
    oracle = build_oracle(cfg)
    serial = rows_csv(run_experiment(cfg, threads=1, oracle=oracle).rows)
    threaded = rows_csv(run_experiment(cfg, threads=3, oracle=oracle).rows)
    assert serial == threaded


def test_aggregate_matches_numpy():
    rep = fake_report([[1.0, 2.0, 4.0], [3.0, 3.0, 3.0]], (10, 20))
    aggs = {(n, m): (mean, se) for n, m, mean, se in aggregate(rep)}
    mean, se = aggs[(10, "mean_dev")]
    assert mean == pytest.approx(7 / 3)
    assert se == pytest.approx(np.std([1, 2, 4], ddof=1) / np.sqrt(3))
    assert aggs[(20, "mean_dev")] == (3.0, 0.0)


def test_rate_exact_power_law():
    ns = [100, 200, 400, 800, 1600]
    rep = fake_report([[3.0 * n ** -0.5] * 10 for n in ns], ns)
    fit = estimate_rate(rep)
    assert abs(fit.slope + 0.5) < 1e-12
    assert fit.stderr < 1e-12


def test_rate_constant_metric():
    ns = [100, 200, 400, 800]
    fit = estimate_rate(fake_report([[2.5] * 10 for _ in ns], ns))
    assert abs(fit.slope) < 1e-12


def test_rate_stderr_matches_classical_formula():
    ns = np.array([10, 20, 40, 80, 160.0])
    means = np.exp(1.0 - 0.4 * np.log(ns) + np.array([0.1, -0.05, 0.02, -0.08, 0.01]))
    fit = fit_loglog(ns, means)
    x, y = np.log(ns), np.log(means)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (icpt + slope * x)
    se = np.sqrt(resid @ resid / 3 / np.sum((x - x.mean()) ** 2))
    assert fit.slope == pytest.approx(slope, abs=1e-12)
    assert fit.stderr == pytest.approx(se, rel=1e-10)


def test_rate_needs_enough_data():
    ns = [100, 200, 400]
    with pytest.raises(InsufficientData):
        estimate_rate(fake_report([[1.0] * 10 for _ in ns], ns))
    ns = [100, 200, 400, 800]
    with pytest.raises(InsufficientData):
        estimate_rate(fake_report([[1.0] * 9 for _ in ns], ns))


def test_tails_extremes():
    rng = np.random.default_rng(0)
    rep = fake_report([list(rng.uniform(0.1, 1, 100)), list(rng.uniform(0.1, 1, 100))], (10, 20))
    zero = estimate_tails(rep, [0.0])
    assert [t.freq for t in zero] == [1.0, 1.0]
    inf = estimate_tails(rep, [math.inf])
    assert [t.freq for t in inf] == [0.0, 0.0]
    assert all(t.ci_lo <= t.freq <= t.ci_hi for t in zero + inf)
    with pytest.raises(InsufficientData):
        estimate_tails(fake_report([[1.0] * 99], (10,)), [0.0])


def test_wilson_interval_reference_values():
    # reference: Wilson score interval for 5/20 at 95%
    lo, hi = wilson_interval(5, 20)
    assert lo == pytest.approx(0.11186, abs=1e-5)
    assert hi == pytest.approx(0.46870, abs=1e-5)
    lo, hi = wilson_interval(0, 50)
    assert lo == 0.0 and hi == pytest.approx(0.07135, abs=1e-5)


def test_audit_passes_on_completed_run_and_flags_corruption():
    cfg = config(n_grid=(60, 120), replications=3)
    rep = run_experiment(cfg)
    result = audit_bounds(rep)
    assert result.passed and result.checked == 6 and result.worst_slack >= -1e-9
    bad = [dict(r) for r in rep.rows]
    bad[4]["mean_dev"] += 1e3
    bad[4]["bound6_slack"] -= 1e3
    with pytest.raises(BoundViolation) as info:
        audit_bounds(bad)
    assert info.value.row["rep"] == bad[4]["rep"] and info.value.row["n"] == bad[4]["n"]


def test_audit_treats_nan_slack_as_violation():
    row = {"n": 1, "rep": 0, "status": "ok", "bound6_slack": 1.0, "bound7_slack": math.nan,
           "lemma1_slack": 1.0}
    with pytest.raises(BoundViolation):
        audit_bounds([row])


def test_write_report_files(tmp_path):
    cfg = config(n_grid=(50, 100), replications=2, kappa=(0.1,))
    rep = run_experiment(cfg)
    audit = write_report(rep, tmp_path)
    assert audit.passed
    rows = (tmp_path / "rows.csv").read_text().splitlines()
    assert rows[0].startswith("n,rep,status,mean_dev,rms_dev,bound6_slack,bound7_slack,v_er,"
                              "v_fi,v_true,abs_gap,g_at_zhat,dist_to_opt,seed")
    assert len(rows) == 5
    assert (tmp_path / "aggregate.csv").read_text().startswith("n,metric,mean,stderr\n")
    assert (tmp_path / "slopes.csv").read_text().startswith("metric,slope,stderr\n")
    summary = (tmp_path / "summary.txt").read_text()
    assert "PASS" in summary and "insufficient" in summary.lower()


def test_weak_lln_moments():
    small = lln_sanity(LOGLIN, 100, seed=3, reps=20, m_ref=400_000)
    large = lln_sanity(LOGLIN, 12800, seed=3, reps=20, m_ref=400_000)
    assert np.all(large < 10 * small)
    assert np.all(large < small)


def test_value_gap_shrinks_with_n():
    cfg = config(n_grid=(100, 3200), replications=10, m_oracle=200_000)
    rep = run_experiment(cfg)
    assert rep.replication_mean("abs_gap", 3200) < rep.replication_mean("abs_gap", 100)
