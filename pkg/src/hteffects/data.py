"""Dataset representation, CSV ingestion, standardization and overlap checks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ContractError, IngestionError, SchemaError

CONTINUOUS = "continuous"
BINARY = "binary"
CATEGORICAL = "categorical"
MISSING_INDICATOR = "missing_indicator"
KINDS = (CONTINUOUS, BINARY, CATEGORICAL, MISSING_INDICATOR)

MISSING_TOKENS = ["", "NA"]


@dataclass(frozen=True)
class Column:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r} for {self.name!r}")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome ``y``, binary treatment ``t`` and feature matrix ``x``.

    Arrays are copied and made read-only on construction, so a dataset can be
    shared freely between workers.
    """

    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    schema: tuple = ()

    def __post_init__(self):
        y = _frozen(self.y)
        t = _frozen(self.t)
        x = _frozen(self.x)
        if x.ndim == 1:
            x = _frozen(x.reshape(-1, 1))
        if y.ndim != 1 or t.ndim != 1 or x.ndim != 2:
            raise ContractError("y and t must be vectors and x a matrix")
        n = y.shape[0]
        if n < 1 or t.shape[0] != n or x.shape[0] != n:
            raise ContractError(
                f"row counts differ: y={y.shape[0]}, t={t.shape[0]}, x={x.shape[0]}"
            )
        if not np.all((t == 0) | (t == 1)):
            raise SchemaError("treatment must be exactly 0 or 1", tag="SCHEMA_TREATMENT")
        if not np.all(np.isfinite(x)):
            raise SchemaError("feature matrix contains non-finite values")
        schema = tuple(self.schema)
        if not schema:
            schema = tuple(Column(f"x{j + 1}", CONTINUOUS) for j in range(x.shape[1]))
        if len(schema) != x.shape[1]:
            raise ContractError(f"schema has {len(schema)} columns, x has {x.shape[1]}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "schema", schema)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    @property
    def feature_names(self):
        return [c.name for c in self.schema]

    @property
    def treated(self):
        return self.t == 1

    @property
    def control(self):
        return self.t == 0

    def arm_sizes(self):
        n1 = int(self.t.sum())
        return self.n - n1, n1

    def require_both_arms(self, minimum=1):
        n0, n1 = self.arm_sizes()
        if min(n0, n1) < minimum:
            raise ContractError(
                f"each arm needs at least {minimum} rows (control={n0}, treated={n1})",
                tag="ARM_SIZE",
            )

    def column_index(self, feature):
        if isinstance(feature, (int, np.integer)):
            if not 0 <= feature < self.d:
                raise ContractError(f"feature index {feature} out of range")
            return int(feature)
        try:
            return self.feature_names.index(feature)
        except ValueError:
            raise ContractError(f"no feature named {feature!r}") from None

    def take(self, rows):
        """Row subset (with repetition allowed, as in bootstrap resamples)."""
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.t[rows], self.x[rows], self.schema)

    def with_features(self, x, schema=None):
        return Dataset(self.y, self.t, x, self.schema if schema is None else schema)

    def select_features(self, indices):
        indices = list(indices)
        return Dataset(self.y, self.t, self.x[:, indices], [self.schema[j] for j in indices])


@dataclass(frozen=True)
class ColumnRoles:
    """Which CSV columns play which role.

    ``features`` defaults to every column that is neither outcome nor
    treatment. ``kinds`` maps feature names to a declared kind; undeclared
    columns are ``binary`` if every observed value is 0 or 1 and
    ``continuous`` otherwise.
    """

    outcome: str = "y"
    treatment: str = "t"
    features: tuple = ()
    kinds: dict = field(default_factory=dict)


def _infer_kind(values):
    observed = values[~np.isnan(values)]
    if observed.size and np.all((observed == 0) | (observed == 1)):
        return BINARY
    return CONTINUOUS


def ingest_csv(path, roles=None):
    """Read a CSV into a :class:`Dataset`.

    Missing feature cells (empty or ``NA``) are set to zero and a binary
    ``<name>_missing`` indicator column is appended for every feature that had
    at least one missing cell. Indicator columns follow the original features
    in feature order; row order is preserved.
    """
    roles = roles or ColumnRoles()
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}", tag="INGEST_MISSING_FILE")
    try:
        frame = pd.read_csv(
            path, keep_default_na=False, na_values=MISSING_TOKENS, encoding="utf-8"
        )
    except pd.errors.EmptyDataError:
        raise IngestionError(f"{path} is empty", tag="INGEST_EMPTY") from None
    if frame.shape[0] == 0:
        raise IngestionError(f"{path} has a header but no rows", tag="INGEST_EMPTY")

    for role, name in (("OUTCOME", roles.outcome), ("TREATMENT", roles.treatment)):
        if name not in frame.columns:
            raise SchemaError(f"{role.lower()} column {name!r} not found", tag=f"SCHEMA_{role}")
    features = list(roles.features) or [
        c for c in frame.columns if c not in (roles.outcome, roles.treatment)
    ]
    if not features:
        raise SchemaError("at least one feature column is required", tag="SCHEMA_FEATURE")
    for name in features:
        if name not in frame.columns:
            raise SchemaError(f"feature column {name!r} not found", tag="SCHEMA_FEATURE")

    def numeric(name, tag):
        try:
            return pd.to_numeric(frame[name], errors="raise").to_numpy(dtype=float)
        except (ValueError, TypeError):
            raise SchemaError(f"column {name!r} is not numeric", tag=tag) from None

    y = numeric(roles.outcome, "SCHEMA_OUTCOME")
    if np.isnan(y).any():
        raise SchemaError(f"outcome column {roles.outcome!r} has missing values", tag="SCHEMA_OUTCOME")
    t = numeric(roles.treatment, "SCHEMA_TREATMENT")
    if np.isnan(t).any() or not np.all((t == 0) | (t == 1)):
        bad = sorted(set(np.unique(t[~np.isnan(t)]).tolist()) - {0.0, 1.0})
        raise SchemaError(
            f"treatment column {roles.treatment!r} must be binary 0/1 (found {bad or 'missing'})",
            tag="SCHEMA_TREATMENT",
        )

    columns, schema, indicators, indicator_schema = [], [], [], []
    for name in features:
        values = numeric(name, "SCHEMA_FEATURE")
        missing = np.isnan(values)
        if missing.all():
            raise SchemaError(f"feature column {name!r} is entirely missing", tag="SCHEMA_FEATURE")
        kind = roles.kinds.get(name) or _infer_kind(values)
        columns.append(np.where(missing, 0.0, values))
        schema.append(Column(name, kind))
        if missing.any():
            indicators.append(missing.astype(float))
            indicator_schema.append(Column(f"{name}_missing", MISSING_INDICATOR))
    x = np.column_stack(columns + indicators)
    return Dataset(y, t, x, schema + indicator_schema)


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    """Per-column location and scale.

    Scaling uses the population convention (divide by ``n``), so a
    standardized continuous column has mean 0 and ``np.var(col) == 1``. For
    example ``(1, 2, 3)`` maps to ``(-1.2247, 0, 1.2247)``. Non-continuous
    columns and zero-variance columns carry mean 0 and scale 1, i.e. they are
    left untouched.
    """

    mean: np.ndarray
    scale: np.ndarray
    warnings: tuple = ()

    def __post_init__(self):
        if np.any(self.scale <= 0):
            raise ContractError("standardization scales must be strictly positive")

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.mean


def standardize(ds, params=None):
    """Standardize continuous feature columns; returns ``(dataset, params)``.

    When ``params`` is given they are reused as-is (predict-time use) instead
    of being estimated from ``ds``.
    """
    if params is None:
        if ds.n < 2:
            raise ContractError("standardization needs at least two rows")
        mean = np.zeros(ds.d)
        scale = np.ones(ds.d)
        notes = []
        for j, col in enumerate(ds.schema):
            if col.kind != CONTINUOUS:
                continue
            sd = ds.x[:, j].std()
            if not sd > 0:
                notes.append(f"column {col.name!r} has zero variance; left unscaled")
                continue
            mean[j] = ds.x[:, j].mean()
            scale[j] = sd
        for note in notes:
            warnings.warn(note, RuntimeWarning, stacklevel=2)
        params = StandardizationParams(mean, scale, tuple(notes))
    return ds.with_features(params.apply(ds.x)), params


@dataclass(frozen=True)
class OverlapReport:
    epsilon: float
    quantiles: dict
    n_outside: int
    n: int

    @property
    def violated(self):
        return self.n_outside > 0


def overlap_diagnostic(ds, rho, epsilon=0.01):
    """Summarize the estimated propensities and count units outside ``[eps, 1-eps]``.

    Uses the unclipped classifier output; clipping would hide exactly the
    units this check is meant to find.
    """
    if not 0 < epsilon < 0.5:
        raise ContractError("epsilon must lie in (0, 0.5)")
    rho.check_schema(ds)
    p = rho.predict_raw(ds.x)
    levels = {"min": 0.0, "q01": 0.01, "q50": 0.5, "q99": 0.99, "max": 1.0}
    quantiles = {k: float(np.quantile(p, q)) for k, q in levels.items()}
    n_outside = int(np.count_nonzero((p < epsilon) | (p > 1 - epsilon)))
    return OverlapReport(epsilon, quantiles, n_outside, ds.n)
