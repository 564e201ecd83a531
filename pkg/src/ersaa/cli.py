"""Command-line front end: ``ersaa generate|fit|solve|experiment``.

Exit codes: 0 success, 1 config or usage error, 2 data error,
3 bound-audit violation, 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import datagen, errors, harness
from .config import (ConfigError, build_experiment, build_problem, build_support, build_truth,
                     estimator_options, load_config, query_point)
from .dro import AmbiguitySet, solve_dro_newsvendor
from .regression import fit_models, truth_models
from .residuals import ScenarioSet, build_er_scenarios, standardized_residuals
from .stochprog import solve_saa

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_AUDIT, EXIT_SOLVER = 0, 1, 2, 3, 4

_EXIT_FOR = (
    (ConfigError, EXIT_CONFIG),
    (errors.InvalidSpec, EXIT_CONFIG),
    (errors.DataError, EXIT_DATA),
    (errors.DomainError, EXIT_DATA),
    (errors.TruthUnavailable, EXIT_DATA),
    (errors.InsufficientData, EXIT_DATA),
    (errors.BoundViolation, EXIT_AUDIT),
    (errors.ErSaaError, EXIT_SOLVER),
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage mistakes are configuration errors, keeping 2 for bad data
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("n must be at least 1")
    return v


def _rho(text):
    key, sep, val = text.partition("=")
    if key != "rho" or not sep:
        raise argparse.ArgumentTypeError("expected rho=<value>")
    try:
        rho = float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad radius {val!r}") from None
    if not rho >= 0:
        raise argparse.ArgumentTypeError("rho must be nonnegative")
    return rho


def _vector(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fit(doc, data):
    est = estimator_options(doc)
    if est["mean_kind"] == "truth" or est["cov_kind"] == "truth":
        if not (est["mean_kind"] == est["cov_kind"] == "truth"):
            raise ConfigError("the truth hook must be set for both mean and cov")
        return truth_models(build_truth(doc))
    if data.n < 2:
        raise errors.InsufficientData("fitting needs at least two observations")
    return fit_models(data, **est)


def _load_data(path, scenarios_only=False):
    try:
        if scenarios_only:
            return datagen.read_scenarios(path)
        return datagen.read_dataset(path, with_truth=False)
    except FileNotFoundError:
        raise errors.DataError(f"dataset {path} not found") from None


def cmd_generate(args, doc):
    spec = build_truth(doc)
    n = args.n if args.n is not None else doc.get("n")
    if n is None:
        raise ConfigError("sample size missing: give --n or 'n' in the config")
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    out = args.out or doc.get("output")
    if not out:
        raise ConfigError("output path missing: give --out or 'output' in the config")
    data = datagen.sample(spec, n, seed)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    datagen.write_dataset(data, out)
    print(f"wrote {n} rows to {out} (truth: {datagen.truth_path(out)})")
    return EXIT_OK


def cmd_fit(args, doc):
    data = _load_data(args.data)
    models = _fit(doc, data)
    text = models.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote fitted models to {args.out}")
    else:
        print(text)
    return EXIT_OK


def _result_text(result, fmt):
    if fmt == "json":
        return json.dumps(result, indent=2)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    z = result["z_hat"]
    w.writerow([f"z{j + 1}" for j in range(len(z))] + ["value", "scenarios", "method"])
    w.writerow([repr(v) for v in z] + [repr(result["value"]), result["scenarios"],
                                        result["method"]])
    return buf.getvalue().rstrip("\n")


def cmd_solve(args, doc):
    problem = build_problem(doc)
    if args.scenarios:
        # the file's y columns are the scenarios themselves
        sc = ScenarioSet.uniform(_load_data(args.data, scenarios_only=True))
    else:
        data = _load_data(args.data)
        x = np.asarray(args.x, dtype=float) if args.x is not None else query_point(doc)
        if x.size != data.d_x:
            raise ConfigError(f"query point has {x.size} entries, dataset has d_x={data.d_x}")
        models = _fit(doc, data)
        resid = standardized_residuals(data, models)
        sc = build_er_scenarios(models, resid, x, build_support(doc, data.d_y))
    if sc.d_y != problem.d_y:
        raise ConfigError(f"problem expects d_y={problem.d_y}, scenarios have {sc.d_y}")
    if not args.dro:  # a zero radius is plain SAA, reported identically
        sol = solve_saa(problem, sc)
        z, value, method = sol.z_hat, sol.value, "saa"
    else:
        dro = solve_dro_newsvendor(problem, AmbiguitySet(sc, args.dro))
        z, value, method = dro.z_hat, dro.worst_value, f"dro_chi_square(rho={args.dro!r})"
    result = {"z_hat": [float(v) for v in np.atleast_1d(z)], "value": float(value),
              "scenarios": int(sc.n), "method": method}
    print(f"z_hat: {' '.join(repr(v) for v in result['z_hat'])}")
    print(f"value: {result['value']!r}")
    print(f"scenarios: {result['scenarios']}")
    text = _result_text(result, args.format)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        return None if np.isnan(v) else float(v)
    return v


def _write_json_outputs(report, outdir):
    fits = harness.rate_fits(report)
    rows = [{k: _json_value(r[k]) for k in harness.ROW_FIELDS} for r in report.rows]
    (outdir / "rows.json").write_text(json.dumps(rows, indent=1) + "\n")
    aggs = [{"n": n, "metric": m, "mean": mean, "stderr": _json_value(se)}
            for n, m, mean, se in report.aggregates]
    (outdir / "aggregate.json").write_text(json.dumps(aggs, indent=1) + "\n")
    slopes = [{"metric": f.metric, "slope": f.slope, "stderr": f.stderr} for f in fits]
    (outdir / "slopes.json").write_text(json.dumps(slopes, indent=1) + "\n")


def cmd_experiment(args, doc):
    cfg = build_experiment(doc, seed=args.seed, output=args.out)
    outdir = Path(cfg.output or "ersaa-out")
    report = harness.run_experiment(cfg, threads=args.threads)
    audit = harness.write_report(report, outdir)
    if args.format == "json":
        _write_json_outputs(report, outdir)
    sys.stdout.write((outdir / "summary.txt").read_text())
    print(f"outputs in {outdir}")
    if isinstance(audit, errors.BoundViolation):
        raise audit
    if isinstance(audit, errors.InsufficientData):
        raise errors.SaaInfeasible(f"no replication completed: {audit}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="ersaa", description="Residuals-based SAA and DRO with a Monte Carlo harness.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a synthetic dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--n", type=_positive_int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit mean and covariance estimators")
    f.add_argument("--config", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("solve", help="build scenarios at x and solve ER-SAA or ER-DRO")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--x", type=_vector, help="query point, overrides the config")
    s.add_argument("--scenarios", action="store_true",
                   help="use the dataset's y rows directly as scenarios")
    s.add_argument("--dro", type=_rho, metavar="rho=<value>",
                   help="chi-square ball radius for the robust variant")
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="run the Monte Carlo harness")
    e.add_argument("--config", required=True)
    e.add_argument("--threads", type=_positive_int, default=1)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = load_config(args.config)
        return args.func(args, doc)
    except errors.ErSaaError as exc:
        code = next(c for cls, c in _EXIT_FOR if isinstance(exc, cls))
        print(f"ersaa: error: {exc}", file=sys.stderr)
        return code
    except ValueError as exc:
        print(f"ersaa: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ersaa: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
