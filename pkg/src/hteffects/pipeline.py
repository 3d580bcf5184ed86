"""Estimator dispatch and report assembly shared by the command line and scripts.

A :class:`RunConfig` is a flat bag of settings. Values come from the
dataclass defaults, then an optional ``key = value`` file, then explicit
command-line flags. Reports are plain dicts ready for JSON; every number in
them depends only on the data and the resolved config, so re-running with
the embedded config reproduces a report apart from its ``runtime`` fields.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .bayes import BcfConfig, HlmConfig, fit_bcf, fit_gp, fit_hlm
from .data import overlap_diagnostic, standardize
from .errors import UsageError
from .inference import DrEstimator, TLearnerEstimator, bootstrap_effect, reference_estimators
from .meta import fit_propensity
from .rng import derive_seed

SCHEMA_VERSION = 1
META_ESTIMATORS = ("t-lasso", "t-ridge", "t-gbr", "dr-lasso", "dr-ridge", "dr-gbr")
BAYES_ESTIMATORS = ("hlm", "gp", "bcf")
ESTIMATORS = META_ESTIMATORS + BAYES_ESTIMATORS
PAPER_HLM_BURN_IN = 30_000

# settings that never change any reported number stay out of the embedded config
_VOLATILE = ("input", "outdir", "threads", "config", "export_draws")


@dataclass(frozen=True)
class RunConfig:
    input: str = ""
    outdir: str = "out"
    config: str = ""
    threads: int = 0
    seed: int = 0
    outcome: str = "y"
    treatment: str = "t"
    features: str = ""
    standardize: bool = True
    # fit
    estimator: str = "all"
    bootstrap: int = 100
    ci_level: float = 0.95
    epsilon: float = 0.01
    fixed_propensity: bool = False
    paper_faithful: bool = False
    export_draws: bool = False
    cv_folds: int = 5
    hlm_burn_in: int = 2000
    hlm_kept: int = 1000
    gp_starts: int = 3
    gp_draws: int = 100
    bcf_trees_prognostic: int = 200
    bcf_trees_treatment: int = 50
    bcf_burn_in: int = 500
    bcf_kept: int = 2000
    # importance
    importance_repeats: int = 1
    subgroup: str = ""
    subgroup_rule: str = "median"
    top: int = 10
    # screen
    target: str = ""
    k: int = 100
    n_lambdas: int = 100
    # simulate
    dgp: str = "DGP-CONST"
    n: int = 2000
    d: int = 5
    noise_sd: float = 1.0
    selection: float = 1.0

    def validate(self):
        names = self.estimators()
        for name in names:
            if name not in ESTIMATORS:
                raise UsageError(f"unknown estimator {name!r}; choose from "
                                 f"{', '.join(ESTIMATORS + ('all',))}")
        if not 0 < self.ci_level < 1:
            raise UsageError("ci_level must lie in (0, 1)")
        if not 0 < self.epsilon < 0.5:
            raise UsageError("epsilon must lie in (0, 0.5)")
        if self.bootstrap < 2:
            raise UsageError("bootstrap needs at least two replicates")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")
        return self

    def estimators(self):
        if self.estimator == "all":
            return ESTIMATORS
        return tuple(e.strip() for e in self.estimator.split(",") if e.strip())

    def feature_list(self):
        return tuple(f.strip() for f in self.features.split(",") if f.strip())

    def resolved(self):
        """Apply presets: ``paper_faithful`` lengthens the HLM burn-in."""
        if self.paper_faithful and self.hlm_burn_in < PAPER_HLM_BURN_IN:
            return replace(self, hlm_burn_in=PAPER_HLM_BURN_IN)
        return self

    def embedded(self):
        """The settings recorded in reports (paths and thread counts dropped)."""
        return {k: v for k, v in sorted(asdict(self).items()) if k not in _VOLATILE}

    def digest(self):
        return config_hash(self.embedded())

    @property
    def n_jobs(self):
        return -1 if self.threads <= 0 else self.threads


def _coerce(kind, value, key):
    if isinstance(value, str):
        text = value.strip()
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise UsageError(f"config key {key!r}: expected a boolean, got {value!r}")
        try:
            return kind(text)
        except ValueError:
            raise UsageError(f"config key {key!r}: cannot read {value!r} as {kind.__name__}") from None
    return kind(value)


_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Dashes in keys become underscores."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def build_config(file_values=None, flag_values=None):
    """Merge defaults, file values and flags (later wins) into a validated config."""
    merged = {}
    for source in (file_values or {}, flag_values or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in _TYPES:
                raise UsageError(f"unknown config key {key!r}")
            merged[key] = _coerce(_TYPES[key], value, key)
    return RunConfig(**merged).resolved().validate()


def config_hash(obj):
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def canonical_json(obj, indent=None):
    return json.dumps(_clean(obj), sort_keys=True, indent=indent, allow_nan=True)


def data_digest(ds):
    h = hashlib.sha256()
    for a in (ds.y, ds.t, ds.x):
        h.update(np.ascontiguousarray(a).tobytes())
    h.update(",".join(ds.feature_names).encode("utf-8"))
    return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class EffectEstimate:
    """One estimator's output in a common shape (draws are ``S x n`` CATEs)."""

    estimator: str
    n: int
    ate: float
    ci: tuple
    ci_level: float
    method: str
    cate_draws: np.ndarray
    seed: int
    runtime: float
    diagnostics: dict

    def as_dict(self, config_digest):
        return {
            "estimator": self.estimator,
            "N": self.n,
            "ATE": self.ate,
            "CI": list(self.ci),
            "ci_level": self.ci_level,
            "method": self.method,
            "draws": int(self.cate_draws.shape[0]),
            "seed": self.seed,
            "runtime": self.runtime,
            "config_hash": config_digest,
            "diagnostics": self.diagnostics,
        }


def prepare(ds, cfg):
    """Standardize features when configured; returns ``(dataset, notes)``."""
    if not cfg.standardize:
        return ds, ()
    out, params = standardize(ds)
    return out, params.warnings


def fitted_propensity(ds, cfg):
    return fit_propensity(ds, k=cfg.cv_folds, epsilon=cfg.epsilon,
                          seed=derive_seed(cfg.seed, "propensity"))


def meta_estimator(name, cfg, propensity=None):
    kind, learner = name.split("-", 1)
    if kind == "t":
        return TLearnerEstimator(learner, cfg.cv_folds)
    return DrEstimator(learner, cfg.cv_folds, epsilon=cfg.epsilon,
                       propensity=propensity if cfg.fixed_propensity else None)


def estimate(ds, name, cfg, propensity=None):
    """Run one named estimator on a prepared dataset."""
    seed = derive_seed(cfg.seed, f"fit/{name}")
    start = time.perf_counter()
    if name in META_ESTIMATORS:
        if name.startswith("dr-") and cfg.fixed_propensity and propensity is None:
            propensity = fitted_propensity(ds, cfg)
        est = meta_estimator(name, cfg, propensity)
        boot = bootstrap_effect(ds, est, cfg.bootstrap, cfg.ci_level, seed, cfg.n_jobs)
        draws = boot.cate_draws
        ate, ci, method = boot.ate, (boot.ci_low, boot.ci_high), "bootstrap"
        diagnostics = {"redraws": boot.redraws}
    else:
        propensity = propensity or fitted_propensity(ds, cfg)
        if name == "hlm":
            post = fit_hlm(ds, propensity, HlmConfig(cfg.hlm_burn_in, cfg.hlm_kept), seed)
        elif name == "gp":
            _, post = fit_gp(ds, propensity, n_starts=cfg.gp_starts, n_draws=cfg.gp_draws, seed=seed)
        elif name == "bcf":
            config = BcfConfig(trees_prognostic=cfg.bcf_trees_prognostic,
                               trees_treatment=cfg.bcf_trees_treatment,
                               burn_in=cfg.bcf_burn_in, kept=cfg.bcf_kept)
            post = fit_bcf(ds, propensity, config, seed)
        else:
            raise UsageError(f"unknown estimator {name!r}")
        draws = post.tau_draws
        ate, ci, method = post.ate, post.interval(cfg.ci_level), "posterior"
        diagnostics = dict(post.diagnostics, converged=post.converged)
    return EffectEstimate(name, ds.n, float(ate), tuple(float(c) for c in ci), cfg.ci_level,
                          method, draws, seed, time.perf_counter() - start, diagnostics)


def fit_report(ds, cfg, names=None):
    """Fit every requested estimator and assemble the combined report.

    Returns ``(report, estimates)``.
    """
    names = names or cfg.estimators()
    start = time.perf_counter()
    prepared, notes = prepare(ds, cfg)
    propensity = fitted_propensity(prepared, cfg)
    overlap = overlap_diagnostic(prepared, propensity, cfg.epsilon)
    dim, ols = reference_estimators(ds)
    estimates = []
    for name in names:
        shared = propensity if (name in BAYES_ESTIMATORS or cfg.fixed_propensity) else None
        estimates.append(estimate(prepared, name, cfg, shared))
    digest = cfg.digest()
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "seed": cfg.seed,
        "config": cfg.embedded(),
        "config_hash": digest,
        "data": {"N": ds.n, "n_treated": int(ds.t.sum()), "n_control": int(ds.n - ds.t.sum()),
                 "features": ds.feature_names, "sha256": data_digest(ds),
                 "standardization_notes": list(notes)},
        "propensity": {"lam": propensity.lam, "holdout_auc": propensity.holdout_auc,
                       "epsilon": cfg.epsilon},
        "overlap": {"n_outside": overlap.n_outside, "violated": overlap.violated,
                    "quantiles": overlap.quantiles},
        "reference": {"difference_in_means": dim, "ols_with_controls": ols},
        "estimates": [e.as_dict(digest) for e in estimates],
        "runtime": time.perf_counter() - start,
    }
    return report, estimates


def strip_runtime(obj):
    """Copy of a report with every ``runtime`` field removed."""
    if isinstance(obj, dict):
        return {k: strip_runtime(v) for k, v in obj.items() if k != "runtime"}
    if isinstance(obj, list):
        return [strip_runtime(v) for v in obj]
    return obj
