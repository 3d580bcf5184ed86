"""Data-generating processes with known treatment effects.

Features are i.i.d. standard normal, noise is Gaussian. Unless noted, the
control surface is ``mu0(x) = 3 x1 + x2`` and treatment is randomized with
probability 1/2.

=============  ===============================  ======================  =================
name           treatment probability            mu0(x)                  tau(x)
=============  ===============================  ======================  =================
DGP-NULL       1/2                              3 x1 + x2               0
DGP-CONST      1/2                              3 x1 + x2               5
DGP-CONF       logistic(s x1)                   3 x1 + x2               5
DGP-NL         1/2                              sin(2 x1) + x2^2        5
DGP-HET        1/2                              3 x1 + x2               2 + x1
DGP-CONF-DYN   logistic(s (x1 - g))             3 x1 + x2 + 2 g         5
=============  ===============================  ======================  =================

``s`` is the selection strength. DGP-CONF-DYN appends a pre-period earnings
trend ``g ~ N(0, 1)`` as an extra feature column ``pre_trend``: units whose
earnings grew slowly select into treatment, and the trend persists into the
outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .data import CONTINUOUS, Column, Dataset
from .errors import ContractError

DGPS = ("DGP-NULL", "DGP-CONST", "DGP-CONF", "DGP-NL", "DGP-HET", "DGP-CONF-DYN")


@dataclass(frozen=True)
class DgpSpec:
    name: str = "DGP-CONST"
    n: int = 2000
    d: int = 5
    noise_sd: float = 1.0
    selection: float = 1.0
    seed: int = 0

    def validate(self):
        if self.name not in DGPS:
            raise ContractError(f"unknown DGP {self.name!r}; choose from {', '.join(DGPS)}")
        if self.n < 50:
            raise ContractError("synthetic datasets need n >= 50")
        if self.d < 2:
            raise ContractError("synthetic datasets need d >= 2")
        if self.noise_sd < 0:
            raise ContractError("noise_sd must be non-negative")

    def with_seed(self, seed):
        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class Truth:
    """Ground truth attached to a generated dataset.

    ``ate`` is the sample average of ``tau`` over the generated units;
    ``population_ate`` is its expectation under the DGP.
    """

    ate: float
    population_ate: float
    tau: np.ndarray
    rho: np.ndarray
    mu0: np.ndarray


def _tau(name, x):
    if name == "DGP-NULL":
        return np.zeros(x.shape[0])
    if name == "DGP-HET":
        return 2.0 + x[:, 0]
    return np.full(x.shape[0], 5.0)


def generate(spec):
    """Draw a dataset and its truth; identical specs give identical output."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    x = rng.normal(size=(spec.n, spec.d))
    names = [f"x{j + 1}" for j in range(spec.d)]
    x1, x2 = x[:, 0], x[:, 1]
    if spec.name == "DGP-NL":
        mu0 = np.sin(2 * x1) + x2**2
    else:
        mu0 = 3 * x1 + x2
    if spec.name == "DGP-CONF":
        rho = expit(spec.selection * x1)
    elif spec.name == "DGP-CONF-DYN":
        trend = rng.normal(size=spec.n)
        rho = expit(spec.selection * (x1 - trend))
        mu0 = mu0 + 2 * trend
        x = np.column_stack([x, trend])
        names.append("pre_trend")
    else:
        rho = np.full(spec.n, 0.5)
    t = (rng.random(spec.n) < rho).astype(float)
    tau = _tau(spec.name, x)
    y = mu0 + tau * t + spec.noise_sd * rng.normal(size=spec.n)
    population = {"DGP-NULL": 0.0, "DGP-HET": 2.0}.get(spec.name, 5.0)
    ds = Dataset(y, t, x, [Column(name, CONTINUOUS) for name in names])
    return ds, Truth(float(tau.mean()), population, tau, rho, mu0)


def naive_bias(spec, n_nodes=200):
    """Population bias of the difference in means, ``E[mu0|t=1] - E[mu0|t=0]``.

    Evaluated by Gauss-Hermite quadrature over the selection variable. Zero
    for the randomized designs.
    """
    spec.validate()
    if spec.name not in ("DGP-CONF", "DGP-CONF-DYN"):
        return 0.0
    z, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    w = w / w.sum()
    s = spec.selection
    if spec.name == "DGP-CONF":
        # mu0 = 3 x1 + x2 and x2 is independent of selection
        p = expit(s * z)
        e1 = np.sum(w * z * p) / np.sum(w * p)
        e0 = np.sum(w * z * (1 - p)) / np.sum(w * (1 - p))
        return float(3 * (e1 - e0))
    # selection index u = x1 - g ~ N(0, 2); E[3 x1 + 2 g | u] = (3 - 2) u / 2
    u = np.sqrt(2.0) * z
    p = expit(s * u)
    e1 = np.sum(w * u * p) / np.sum(w * p)
    e0 = np.sum(w * u * (1 - p)) / np.sum(w * (1 - p))
    return float(0.5 * (e1 - e0))
