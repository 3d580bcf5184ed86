"""Posterior treatment-effect draws shared by the Bayesian models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from ..inference import percentile_interval


@dataclass(frozen=True, eq=False)
class PosteriorEffect:
    """``tau_draws[s, i]`` is draw ``s`` of unit ``i``'s treatment effect.

    ATE draw ``s`` is the mean of row ``s``; the ATE estimate is the mean of
    all draws.
    """

    tau_draws: np.ndarray
    tag: str
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)
    ate_draws: np.ndarray = field(init=False)

    def __post_init__(self):
        tau = np.asarray(self.tau_draws, dtype=float)
        if tau.ndim != 2:
            raise ContractError("tau_draws must be a (draws, units) matrix")
        if not np.all(np.isfinite(tau)):
            raise ContractError("posterior draws contain non-finite values")
        object.__setattr__(self, "tau_draws", tau)
        object.__setattr__(self, "ate_draws", tau.mean(axis=1))

    @property
    def n_draws(self):
        return self.tau_draws.shape[0]

    @property
    def n(self):
        return self.tau_draws.shape[1]

    @property
    def ate(self):
        return float(self.ate_draws.mean())

    @property
    def ate_sd(self):
        return float(self.ate_draws.std())

    def cate_mean(self):
        return self.tau_draws.mean(axis=0)

    def interval(self, level=0.95):
        lo, hi = percentile_interval(self.ate_draws, level)
        return float(lo), float(hi)


def split_rhat(chain):
    """Potential scale reduction of one chain split into two halves."""
    chain = np.asarray(chain, dtype=float)
    half = chain.shape[0] // 2
    if half < 2:
        return float("nan")
    parts = np.stack([chain[:half], chain[half:2 * half]])
    within = parts.var(axis=1, ddof=1).mean()
    between = half * parts.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else float("inf")
    var_plus = (half - 1) / half * within + between / half
    return float(np.sqrt(var_plus / within))
