import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hteffects.bayes import (
    BcfConfig,
    CompositeKernel,
    HlmConfig,
    PosteriorEffect,
    assemble_gp_covariance,
    fit_bcf,
    fit_gp,
    fit_hlm,
    matern32,
    sample_tree_prior,
    split_probability,
    split_rhat,
)
from hteffects.bayes.bcf import bin_features
from hteffects.bayes.gp import gp_posterior_effect, gp_posterior_mean, optimize_kernel
from hteffects.errors import ContractError
from hteffects.meta import fit_propensity
from hteffects.synthetic import DgpSpec, generate

from conftest import make_dataset


class FixedPropensity:
    def __init__(self, value=0.5):
        self.value = value

    def predict(self, x):
        return np.full(np.asarray(x).shape[0], self.value)


# ---- kernel and covariance -------------------------------------------------

def test_matern_reference_values():
    assert matern32(0.0, 1.0) == 1.0
    assert matern32(1.0, 1.0) == pytest.approx((1 + math.sqrt(3)) * math.exp(-math.sqrt(3)), abs=1e-12)
    # (1 + sqrt 3) exp(-sqrt 3) evaluated with 30-digit decimal arithmetic
    assert matern32(1.0, 1.0) == pytest.approx(0.483357724596507650595, abs=1e-12)
    assert matern32(2.5, 2.5) == pytest.approx(0.483357724596507650595, abs=1e-12)


@given(st.floats(1e-3, 1e3), st.lists(st.floats(0, 1e3), min_size=2, max_size=20))
def test_matern_bounded_and_decreasing(length, rs):
    r = np.sort(np.array(rs))
    k = matern32(r, length)
    assert np.all(k <= 1) and np.all(k >= 0)
    assert np.all(np.diff(k) <= 1e-15)
    small = r[r < 10 * length]
    assert np.all(matern32(small, length) > 0)


def test_kernel_contract():
    with pytest.raises(ContractError):
        CompositeKernel(length_mu=0.0)
    with pytest.raises(ContractError):
        CompositeKernel(tau0=-1.0)
    with pytest.raises(ContractError):
        assemble_gp_covariance(np.zeros((0, 2)), np.zeros(0), CompositeKernel())
    with pytest.raises(ContractError):
        assemble_gp_covariance(np.array([[np.inf], [0.0]]), np.zeros(2), CompositeKernel())


@given(st.integers(0, 1000))
def test_covariance_structure(seed):
    rng = np.random.default_rng(seed)
    n = 25
    x = rng.normal(size=(n, 3))
    t = (rng.random(n) < 0.5).astype(float)
    rho = rng.uniform(0.1, 0.9, n)
    kern = CompositeKernel(2.0, 1.5, 3.0, 0.7, 0.2, 0.3)
    k = assemble_gp_covariance(x, t, kern, rho=rho)
    assert np.abs(k - k.T).max() == 0
    bare = assemble_gp_covariance(x, t, kern, rho=rho, noise=False)
    assert np.linalg.eigvalsh(bare).min() > -1e-8
    np.linalg.cholesky(k)
    np.testing.assert_allclose(np.diag(k), kern.amp_mu + t * (kern.amp_tau + kern.tau0) + kern.noise)
    ctrl = t == 0
    prog = kern.amp_mu * matern32(np.linalg.norm(
        np.column_stack([x, rho])[:, None] - np.column_stack([x, rho])[None], axis=2), kern.length_mu)
    np.testing.assert_allclose(bare[np.ix_(ctrl, ctrl)], prog[np.ix_(ctrl, ctrl)], rtol=1e-12)


def test_entry_by_hand():
    x = np.array([[0.0, 0.0], [3.0, 4.0]])
    kern = CompositeKernel(5.0, 2.0, 10.0, 0.5, 0.1, 1.0)
    k = assemble_gp_covariance(x, np.array([1.0, 1.0]), kern)
    a = math.sqrt(3) * 5 / 5
    b = math.sqrt(3) * 5 / 10
    expect = 2 * (1 + a) * math.exp(-a) + 0.5 * (1 + b) * math.exp(-b) + 0.1
    assert k[0, 1] == pytest.approx(expect, rel=1e-14)


# ---- GP fitting --------------------------------------------------------------

def linear_noise_free(n=50, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    t = (np.arange(n) % 2).astype(float)
    y = 1.0 + x @ np.array([0.8, -0.5]) + 2.0 * t
    return make_dataset(y, t, x)


def test_gp_interpolates_noise_free_data():
    ds = linear_noise_free()
    rho_x = np.full(ds.n, 0.5)
    fit = optimize_kernel(ds, rho_x, noise_floor=1e-6)
    f = gp_posterior_mean(ds, rho_x, fit.kernel)
    assert np.sqrt(np.mean((f - ds.y) ** 2)) < 1e-3


def test_zero_treatment_kernel_collapses_effect():
    ds, _ = generate(DgpSpec("DGP-CONST", n=200, seed=1))
    kern = CompositeKernel(amp_tau=1e-10, tau0=0.0, noise=0.5)
    draws = gp_posterior_effect(ds, np.full(ds.n, 0.5), kern, n_draws=50)
    assert abs(draws.mean()) < 0.05 * ds.y.std()


def test_gp_improves_marginal_likelihood():
    ds, _ = generate(DgpSpec("DGP-HET", n=500, seed=2))
    rho = fit_propensity(ds, seed=0)
    kern, post = fit_gp(ds, rho, n_starts=1, n_draws=20)
    diag = post.diagnostics
    assert diag["log_ml"] >= diag["initial_log_ml"]
    assert post.tau_draws.shape == (20, ds.n)
    assert kern.noise >= 1e-6


# ---- HLM ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def const_1000():
    ds, _ = generate(DgpSpec("DGP-CONST", n=1000, seed=7))
    return ds, fit_propensity(ds, seed=0)


def test_hlm_recovers_constant_effect(const_1000):
    ds, rho = const_1000
    post = fit_hlm(ds, rho, HlmConfig(1000, 1000), seed=3)
    assert abs(post.ate - 5.0) < 3 * post.ate_sd
    assert post.converged and post.diagnostics["rhat_wt"] < 1.1


def test_hlm_prior_insensitivity(const_1000):
    ds, rho = const_1000
    base = fit_hlm(ds, rho, HlmConfig(1000, 1000), seed=3)
    wide = fit_hlm(ds, rho, HlmConfig(1000, 1000).widened(10), seed=3)
    assert abs(base.ate - wide.ate) < base.ate_sd


def test_hlm_deterministic(const_1000):
    ds, rho = const_1000
    a = fit_hlm(ds, rho, HlmConfig(100, 50), seed=11)
    b = fit_hlm(ds, rho, HlmConfig(100, 50), seed=11)
    assert a.tau_draws.tobytes() == b.tau_draws.tobytes()


def test_hlm_null_calibration():
    covered = 0
    for seed in range(100):
        ds, _ = generate(DgpSpec("DGP-NULL", n=200, seed=seed))
        post = fit_hlm(ds, FixedPropensity(), HlmConfig(300, 400), seed=seed)
        lo, hi = post.interval(0.95)
        covered += lo <= 0 <= hi
    assert covered >= 90


def test_hlm_flags_poor_mixing(const_1000):
    ds, rho = const_1000
    with pytest.raises(ContractError):
        fit_hlm(ds, rho, HlmConfig(0, 2))


# ---- BCF ---------------------------------------------------------------------

@pytest.mark.parametrize("alpha,beta", [(0.95, 2.0), (0.25, 3.0)])
def test_tree_prior_root_frequency(alpha, beta):
    freq, visits = sample_tree_prior(alpha, beta, n_draws=10_000, seed=0)
    assert visits[0] == 10_000
    assert abs(freq[0] - alpha) <= 0.02
    assert split_probability(alpha, beta, 2) == pytest.approx(alpha * 3.0 ** -beta)


def test_bin_features_preserve_order():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(300, 2))
    cuts, ncut, xb = bin_features(x)
    for j in range(2):
        for k in range(ncut[j]):
            np.testing.assert_array_equal(xb[:, j] <= k, x[:, j] <= cuts[j][k])


def test_bcf_config_validation():
    assert BcfConfig().validate() == BcfConfig()
    for bad in (dict(alpha_prognostic=1.0), dict(beta_treatment=0.0), dict(trees_treatment=0),
                dict(burn_in=0), dict(kept=0)):
        with pytest.raises(ContractError):
            BcfConfig(**bad).validate()


def test_bcf_zero_effect():
    ds, _ = generate(DgpSpec("DGP-NULL", n=400, seed=4))
    cfg = BcfConfig(trees_prognostic=50, trees_treatment=20, burn_in=100, kept=200)
    post = fit_bcf(ds, FixedPropensity(), cfg, seed=1)
    assert abs(post.ate) < 3 * post.ate_sd
    assert post.tau_draws.shape == (200, ds.n)


def test_bcf_constant_effect_and_determinism():
    ds, _ = generate(DgpSpec("DGP-CONST", n=600, seed=5))
    cfg = BcfConfig(trees_prognostic=50, trees_treatment=20, burn_in=150, kept=200)
    rho = fit_propensity(ds, seed=0)
    a = fit_bcf(ds, rho, cfg, seed=2)
    b = fit_bcf(ds, rho, cfg, seed=2)
    assert a.tau_draws.tobytes() == b.tau_draws.tobytes()
    assert abs(a.ate - 5.0) < 3 * a.ate_sd + 0.25


def test_bcf_needs_both_arms():
    t = np.zeros(100)
    t[:10] = 1
    ds = make_dataset(np.arange(100.0), t, np.arange(100.0))
    with pytest.raises(ContractError):
        fit_bcf(ds, FixedPropensity(), BcfConfig(burn_in=1, kept=1))


# ---- posterior summaries -----------------------------------------------------

@given(st.integers(0, 100))
def test_posterior_row_means(seed):
    draws = np.random.default_rng(seed).normal(size=(30, 17))
    post = PosteriorEffect(draws, "demo")
    np.testing.assert_allclose(post.ate_draws, draws.mean(axis=1), atol=1e-12)
    assert post.ate == pytest.approx(draws.mean())
    np.testing.assert_array_equal(post.cate_mean(), draws.mean(axis=0))


def test_posterior_rejects_bad_draws():
    with pytest.raises(ContractError):
        PosteriorEffect(np.array([[np.nan, 1.0]]), "bad")
    with pytest.raises(ContractError):
        PosteriorEffect(np.ones(3), "bad")


def test_split_rhat():
    rng = np.random.default_rng(0)
    assert split_rhat(rng.normal(size=4000)) < 1.01
    drift = np.concatenate([np.zeros(500), np.ones(500)]) + 0.01 * rng.normal(size=1000)
    assert split_rhat(drift) > 1.1
    assert math.isnan(split_rhat([1.0, 2.0]))
