"""Bayesian causal models: hierarchical linear model, composite-kernel GP and causal forest."""

from .bcf import BcfConfig, fit_bcf, sample_tree_prior, split_probability
from .gp import CompositeKernel, assemble_gp_covariance, fit_gp, matern32
from .hlm import HlmConfig, fit_hlm
from .posterior import PosteriorEffect, split_rhat

__all__ = [
    "BcfConfig", "CompositeKernel", "HlmConfig", "PosteriorEffect", "assemble_gp_covariance",
    "fit_bcf", "fit_gp", "fit_hlm", "matern32", "sample_tree_prior", "split_probability",
    "split_rhat",
]
