"""Command-line front end: ``hteffects <subcommand> [flags]``.

Subcommands
    simulate    draw a synthetic dataset and write it with a truth sidecar
    screen      rank features by a LASSO path against an auxiliary target
    fit         estimate the ATE with one or all estimators, JSON report
    importance  permutation importance of a CATE surrogate over bootstrap
    evaluate    nested cross-validation of the outcome-model classes
    report      merge earlier outputs into a summary and plot-ready CSVs

Exit codes: 0 success, 1 usage, 2 data or schema problem, 3 numerical
failure. Failures print one ``TAG: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import pipeline
from .data import ColumnRoles, ingest_csv
from .errors import HteError, NumericalError, UsageError
from .heterogeneity import importance_over_bootstrap, subgroup_contrast
from .inference import bootstrap_effect, nested_cv_evaluate
from .pipeline import META_ESTIMATORS, SCHEMA_VERSION, build_config, canonical_json, read_config_file
from .rng import derive_seed
from .screening import screen_top_k
from .synthetic import DgpSpec, generate, naive_bias


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--input")
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--outdir")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    p.add_argument("--outcome")
    p.add_argument("--treatment")
    p.add_argument("--features", help="comma-separated feature columns (default: all others)")
    p.add_argument("--no-standardize", dest="standardize", action="store_const", const=False)


def _flag(p, name, **kw):
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), **kw)


def build_parser():
    parser = _Parser(prog="hteffects", description="Heterogeneous treatment effect estimation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    _common(p)
    _flag(p, "dgp")
    _flag(p, "n", type=int)
    _flag(p, "d", type=int)
    _flag(p, "noise-sd", type=float)
    _flag(p, "selection", type=float)

    p = sub.add_parser("screen", help="LASSO-path feature screening")
    _common(p)
    _flag(p, "target", help="auxiliary target column")
    _flag(p, "k", type=int, help="number of features wanted")
    _flag(p, "n-lambdas", type=int)

    for name, text in (("fit", "estimate treatment effects"),
                       ("importance", "permutation importance and subgroup contrasts")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _flag(p, "estimator")
        _flag(p, "bootstrap", type=int, help="bootstrap replicates S")
        _flag(p, "ci-level", type=float)
        _flag(p, "epsilon", type=float, help="propensity clipping bound")
        _flag(p, "fixed-propensity", action="store_const", const=True)
        _flag(p, "paper-faithful", action="store_const", const=True)
        _flag(p, "cv-folds", type=int)
        if name == "fit":
            _flag(p, "export-draws", action="store_const", const=True)
        else:
            _flag(p, "subgroup", help="comma-separated features for split contrasts")
            _flag(p, "subgroup-rule", choices=("median", "binary"))
            _flag(p, "importance-repeats", type=int)
            _flag(p, "top", type=int)

    p = sub.add_parser("evaluate", help="nested CV of outcome-model classes")
    _common(p)
    _flag(p, "cv-folds", type=int)

    p = sub.add_parser("report", help="merge earlier outputs")
    _common(p)
    return parser


def resolve(args):
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    file_values = read_config_file(args.config) if args.config else {}
    return build_config(file_values, flags)


def _outdir(cfg):
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    path.write_text(canonical_json(obj, indent=2) + "\n", encoding="utf-8")


def _write_csv(path, rows, header):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in row.items()})


def _load(cfg, features=None):
    if not cfg.input:
        raise UsageError("--input is required")
    roles = ColumnRoles(cfg.outcome, cfg.treatment, tuple(features or cfg.feature_list()))
    return ingest_csv(cfg.input, roles)


def _frame(ds):
    frame = pd.DataFrame(ds.x, columns=ds.feature_names)
    frame.insert(0, "t", ds.t.astype(int))
    frame.insert(0, "y", ds.y)
    return frame


def cmd_simulate(cfg):
    spec = DgpSpec(cfg.dgp, cfg.n, cfg.d, cfg.noise_sd, cfg.selection, cfg.seed)
    ds, truth = generate(spec)
    out = _outdir(cfg)
    _frame(ds).to_csv(out / "dataset.csv", index=False, float_format="%.17g")
    pd.DataFrame({"unit": np.arange(ds.n), "tau": truth.tau, "rho": truth.rho, "mu0": truth.mu0}
                 ).to_csv(out / "truth.csv", index=False, float_format="%.17g")
    _write_json(out / "simulate.json", {
        "schema_version": SCHEMA_VERSION, "command": "simulate", "seed": cfg.seed,
        "dgp": spec.name, "N": ds.n, "features": ds.feature_names,
        "ATE": truth.ate, "population_ATE": truth.population_ate,
        "naive_bias": naive_bias(spec), "config": cfg.embedded(), "config_hash": cfg.digest(),
    })


def cmd_screen(cfg):
    if not cfg.target:
        raise UsageError("screen needs --target, the auxiliary outcome column")
    header = pd.read_csv(cfg.input, nrows=0).columns if Path(cfg.input).exists() else []
    features = cfg.feature_list() or [
        c for c in header if c not in (cfg.outcome, cfg.treatment, cfg.target)
    ]
    if cfg.target in features:
        raise UsageError("the auxiliary target cannot also be a feature")
    ds = _load(cfg, features)
    aux = _load(cfg, [cfg.target])
    result = screen_top_k(ds.x, aux.x[:, 0], min(cfg.k, ds.d), cfg.n_lambdas, names=ds.feature_names)
    out = _outdir(cfg)
    _write_csv(out / "screening.csv", result.rows(), ["rank", "column", "coefficient"])
    _frame(ds.select_features(result.indices)).to_csv(out / "screened.csv", index=False,
                                                      float_format="%.17g")
    _write_json(out / "screen.json", {
        "schema_version": SCHEMA_VERSION, "command": "screen", "seed": cfg.seed,
        "target": cfg.target, "target_k": cfg.k, "achieved_k": result.achieved_k,
        "lambda": result.lam, "selected": [r["column"] for r in result.rows()],
        "config": cfg.embedded(), "config_hash": cfg.digest(),
    })


def cmd_fit(cfg):
    ds = _load(cfg)
    report, estimates = pipeline.fit_report(ds, cfg)
    out = _outdir(cfg)
    _write_json(out / "fit_report.json", report)
    for est in estimates:
        lo, hi = np.quantile(est.cate_draws, [(1 - cfg.ci_level) / 2, (1 + cfg.ci_level) / 2], axis=0)
        rows = [{"unit": i, "cate": m, "low": a, "high": b}
                for i, (m, a, b) in enumerate(zip(est.cate_draws.mean(axis=0), lo, hi))]
        _write_csv(out / f"cate_{est.estimator}.csv", rows, ["unit", "cate", "low", "high"])
        if cfg.export_draws:
            s, i = np.indices(est.cate_draws.shape)
            pd.DataFrame({"sweep": s.ravel(), "unit": i.ravel(), "tau": est.cate_draws.ravel()}
                         ).to_csv(out / f"draws_{est.estimator}.csv", index=False,
                                  float_format="%.17g")


def cmd_importance(cfg):
    name = "t-gbr" if cfg.estimator == "all" else cfg.estimator
    if name not in META_ESTIMATORS:
        raise UsageError(f"importance needs a meta-learner estimator ({', '.join(META_ESTIMATORS)})")
    start = time.perf_counter()
    ds, notes = pipeline.prepare(_load(cfg), cfg)
    propensity = pipeline.fitted_propensity(ds, cfg) if cfg.fixed_propensity else None
    est = pipeline.meta_estimator(name, cfg, propensity)
    seed = derive_seed(cfg.seed, f"fit/{name}")
    boot = bootstrap_effect(ds, est, cfg.bootstrap, cfg.ci_level, seed, cfg.n_jobs)
    imp = importance_over_bootstrap(ds, est, cfg.bootstrap, seed, bootstrap=boot,
                                    k=cfg.cv_folds, n_repeats=cfg.importance_repeats)
    out = _outdir(cfg)
    _write_csv(out / "importance.csv", imp.rows(), ["feature", "mean", "std", "rank"])
    contrasts = [subgroup_contrast(ds, boot, f, cfg.subgroup_rule).as_dict()
                 for f in cfg.subgroup.split(",") if f.strip()]
    _write_json(out / "importance_top.json", {
        "schema_version": SCHEMA_VERSION, "command": "importance", "seed": cfg.seed,
        "estimator": name, "N": ds.n, "ATE": boot.ate, "CI": [boot.ci_low, boot.ci_high],
        "replicates": imp.n_replicates, **imp.top_with_residual(cfg.top),
        "subgroups": contrasts, "standardization_notes": list(notes),
        "config": cfg.embedded(), "config_hash": cfg.digest(),
        "runtime": time.perf_counter() - start,
    })


def cmd_evaluate(cfg):
    ds, _ = pipeline.prepare(_load(cfg), cfg)
    rep = nested_cv_evaluate(ds, inner_k=cfg.cv_folds, seed=derive_seed(cfg.seed, "evaluate"))
    out = _outdir(cfg)
    rows = rep.rows()
    _write_csv(out / "nested_cv.csv", rows, ["learner", "arm", "metric", "mean", "std"])
    _write_json(out / "nested_cv.json", {
        "schema_version": SCHEMA_VERSION, "command": "evaluate", "seed": cfg.seed,
        "outer_repeats": rep.outer_repeats, "inner_k": rep.inner_k, "split": rep.split,
        "rows": rows, "config": cfg.embedded(), "config_hash": cfg.digest(),
    })


def cmd_report(cfg):
    """Merge JSON outputs found in ``--input`` (a directory of earlier runs)."""
    src = Path(cfg.input or cfg.outdir)
    if not src.is_dir():
        raise UsageError(f"report needs --input pointing at an output directory, got {src}")
    parts = {}
    for name in ("simulate", "screen", "fit_report", "importance_top", "nested_cv"):
        path = src / f"{name}.json"
        if path.exists():
            parts[name] = json.loads(path.read_text(encoding="utf-8"))
    if not parts:
        raise UsageError(f"no earlier outputs in {src}")
    out = _outdir(cfg)
    rows = []
    fit = parts.get("fit_report")
    if fit:
        n = fit["data"]["N"]
        ref = fit["reference"]
        rows.append({"method": "ols-no-controls", "N": n, "ATE": ref["difference_in_means"],
                     "ci_low": "", "ci_high": ""})
        rows.append({"method": "ols-with-controls", "N": n, "ATE": ref["ols_with_controls"],
                     "ci_low": "", "ci_high": ""})
        for e in fit["estimates"]:
            rows.append({"method": e["estimator"], "N": e["N"], "ATE": e["ATE"],
                         "ci_low": e["CI"][0], "ci_high": e["CI"][1]})
        _write_csv(out / "ate_comparison.csv", rows, ["method", "N", "ATE", "ci_low", "ci_high"])
    imp = parts.get("importance_top")
    if imp:
        bars = [{"feature": r["feature"], "share": r["share"]} for r in imp["top"]]
        bars.append({"feature": "residual", "share": imp["residual"]["share"]})
        _write_csv(out / "importance_shares.csv", bars, ["feature", "share"])
    summary = {"schema_version": SCHEMA_VERSION, "command": "report", "sources": sorted(parts),
               "ate_comparison": rows, **{k: pipeline.strip_runtime(v) for k, v in parts.items()}}
    if "simulate" in parts:
        summary["truth_ATE"] = parts["simulate"]["ATE"]
    _write_json(out / "summary.json", summary)


COMMANDS = {
    "simulate": cmd_simulate,
    "screen": cmd_screen,
    "fit": cmd_fit,
    "importance": cmd_importance,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def run(argv=None):
    """Execute one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        COMMANDS[args.command](cfg)
    except HteError as err:
        print(f"{err.tag}: {str(err).splitlines()[0] if str(err) else err.tag}", file=sys.stderr)
        return err.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as err:
        failure = NumericalError(str(err))
        print(f"{failure.tag}: {err}", file=sys.stderr)
        return failure.exit_code
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
