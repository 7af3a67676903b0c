import math

import numpy as np
import pytest
from scipy import stats

from pwcopula import copulas as cp
from pwcopula.mcmc import (
    ChainOutput,
    CopulaState,
    MarginData,
    MarginState,
    MCMCConfig,
    RamAdapter,
    circular_median,
    fit_copula,
    fit_margin,
    iwls_mh_update_copula,
    iwls_mode,
    iwls_proposal,
    mh_update_winding,
    mh_update_zeta2,
    posterior_mean_predictor,
    pseudo_observations,
    ram_update_theta,
    winding_mode,
)
from pwcopula.mcmc.margin import FieldContext
from pwcopula.mcmc.predict import draw_indices
from pwcopula.mcmc.ram import accept_probability
from pwcopula.mesh import assemble_fem, basis_matrix, build_regular_mesh
from pwcopula.priors import PriorConfig

from oracles import winding_posterior


def _state(k=None, theta=(0.0, 0.0), sigma2=1.0):
    return MarginState(0.0, np.zeros(0), np.zeros(0), sigma2, 1.0, np.array(theta, float), 0.1, k)


def test_mcmc_config_lengths():
    cfg = MCMCConfig(n_iter=100, burn_in=40, thin=4)
    assert cfg.n_keep == 15
    assert sum(cfg.keep(i) for i in range(1, 101)) == 15
    with pytest.raises(ValueError):
        MCMCConfig(n_iter=10, burn_in=10)
    with pytest.raises(ValueError):
        MCMCConfig(k_summary="mean")


def test_margin_data_validation():
    with pytest.raises(ValueError):
        MarginData("circular", [7.0], np.zeros((1, 0)))
    with pytest.raises(ValueError):
        MarginData("linear", [-1.0], np.zeros((1, 0)))
    with pytest.raises(ValueError):
        MarginData("angle", [1.0], np.zeros((1, 0)))


def test_accept_probability_edges():
    assert accept_probability(5.0) == 1.0
    assert accept_probability(-math.inf) == 0.0
    assert accept_probability(math.nan) == 0.0
    assert accept_probability(math.log(0.25)) == pytest.approx(0.25)


def test_winding_concentrated_case():
    # observed angle is mu - 2 pi + small noise: k = 1 recovers mu
    rng = np.random.default_rng(0)
    data = MarginData("circular", np.array([0.4]), np.zeros((1, 0)))
    mu = np.array([0.4 + 2 * math.pi + 0.05])
    state = _state(k=np.zeros(1, dtype=int), sigma2=0.05)
    draws = []
    for i in range(11_000):
        state = mh_update_winding(state, data, rng, mu=mu)
        if i >= 1000:
            draws.append(state.k[0])
    assert np.mean(np.array(draws) == 1) >= 0.95


def test_winding_flat_limit():
    rng = np.random.default_rng(1)
    data = MarginData("circular", np.array([1.0, 4.0]), np.zeros((2, 0)))
    state = _state(k=np.zeros(2, dtype=int), sigma2=1e8)
    counts = np.zeros(3)
    for i in range(31_000):
        state = mh_update_winding(state, data, rng, mu=np.zeros(2))
        if i >= 1000:
            counts += np.bincount(state.k + 1, minlength=3)
    np.testing.assert_allclose(counts / counts.sum(), 1 / 3, atol=0.05)


def test_winding_extra_term_tilts_posterior():
    rng = np.random.default_rng(2)
    data = MarginData("circular", np.array([1.0]), np.zeros((1, 0)))
    state = _state(k=np.zeros(1, dtype=int), sigma2=1e8)
    extra = lambda k: np.where(k == -1, math.log(4.0), 0.0)  # noqa: E731
    ks = []
    for i in range(41_000):
        state = mh_update_winding(state, data, rng, mu=np.zeros(1), extra_term=extra)
        if i >= 1000:
            ks.append(state.k[0])
    assert np.mean(np.array(ks) == -1) == pytest.approx(4 / 6, abs=0.03)


def test_winding_mode_ties_go_to_zero():
    k = np.array([[1, -1, 0, 1], [0, -1, 1, 1], [1, 0, -1, -1], [0, 0, 0, 1]])
    # site 0: 1 and 0 tie -> 0; site 1: -1 and 0 tie -> 0; site 3 mode 1
    np.testing.assert_array_equal(winding_mode(k), [0, 0, 0, 1])


def test_oracle_winding_posterior_sums_to_one():
    states, p = winding_posterior([0.5, 2.0], np.array([0.0, 1.0]), 2.0)
    assert len(states) == 9 and p.sum() == pytest.approx(1.0)


def test_zeta2_reproduces_weibull_prior():
    rng = np.random.default_rng(3)
    lam = 0.2
    ad = RamAdapter(1, 0.44, None, 1.0)
    state = _state(theta=(0.0, 0.0))
    for _ in range(5000):
        state = mh_update_zeta2(state, ad, lam, rng)
    ad.frozen = True
    ad.reset_counts()
    draws = np.empty(100_000)
    for i in range(draws.size):
        state = mh_update_zeta2(state, ad, lam, rng)
        draws[i] = state.zeta2
    assert draws.mean() == pytest.approx(2 * lam, rel=0.05)
    assert ad.acceptance_rate == pytest.approx(0.44, abs=0.05)


def test_zero_variance_proposal_keeps_chain_fixed():
    rng = np.random.default_rng(4)
    ad = RamAdapter(1, 0.44, None, 0.0)
    state = _state()
    state.zeta2 = 0.3
    for _ in range(200):
        state = mh_update_zeta2(state, ad, 0.1, rng)
    assert state.zeta2 == 0.3
    assert ad.acceptance_rate == 1.0


def test_ram_rejects_outside_support():
    mesh = build_regular_mesh(3, 0.05)
    fem = assemble_fem(mesh)
    rng = np.random.default_rng(5)
    sites = rng.uniform(size=(10, 2))
    data = MarginData("linear", np.ones(10), np.zeros((10, 0)), basis_matrix(mesh, sites), np.zeros((mesh.M, 0)))
    prior = PriorConfig()
    # theta_kappa0 at 5.99 and a huge fixed step upward: every proposal leaves U(1, 6)
    state = MarginState(0.0, np.zeros(0), np.zeros(mesh.M), 1.0, 1.0, np.array([-2.0, 5.99]), 0.1)
    ctx = FieldContext(data, fem)
    ctx.set_theta(state.theta)
    ad = RamAdapter(2, scale=np.array([0.0, 1.0]))
    ad.frozen = True
    ad.draw = lambda rng: np.array([0.0, 0.5])
    for _ in range(20):
        state = ram_update_theta(state, data, prior, ctx, ad, rng)
    assert ad.n_accept == 0
    np.testing.assert_array_equal(state.theta, [-2.0, 5.99])


def test_ram_adapter_validation():
    with pytest.raises(ValueError):
        RamAdapter(0)
    with pytest.raises(ValueError):
        RamAdapter(2, target=1.5)


def _copula_data(family, eta0, eta1, n, rng):
    z = rng.uniform(-1, 1, n)
    rho = cp.link_to_rho(family, eta0 + eta1 * z)
    u1, u2 = cp.sample_pair(family, rho, rng)
    return u1, u2, np.column_stack([np.ones(n), z])


@pytest.mark.parametrize("family", cp.FAMILIES)
def test_iwls_mode_is_stationary_point(family):
    rng = np.random.default_rng(6)
    u1, u2, X = _copula_data(family, 0.5, -0.4, 600, rng)
    prior = PriorConfig()
    b = iwls_mode(u1, u2, X, family, prior)
    dprec = np.array([1 / prior.intercept_var_rho, 1.0])
    v, _ = cp.eta_score_and_curvature(family, u1, u2, X @ b, floor=False)
    grad = X.T @ v - dprec * b
    assert np.max(np.abs(grad)) < 1e-6
    assert b == pytest.approx([0.5, -0.4], abs=0.25)


def test_iwls_proposal_fallback_on_singular():
    X = np.ones((3, 2))
    m, L, fb = iwls_proposal(X, np.zeros(3), np.zeros(3), np.full(3, -5.0), np.array([1.0, 1.0]))
    assert fb and np.all(m == 0)


def test_copula_chain_recovers_surface():
    rng = np.random.default_rng(7)
    u1, u2, X = _copula_data("gumbel", 0.577, -0.374, 500, rng)
    chain = fit_copula(u1, u2, X[:, 1:], "gumbel", PriorConfig(), MCMCConfig(3000, 1000, 2), rng)
    assert 0.2 < chain.acceptance["beta_rho"] < 0.99
    lo, hi = np.quantile(chain["beta_rho1"][:, 0], [0.005, 0.995])
    assert lo < -0.374 < hi
    assert chain.loglik.shape == (1000, 500)


def test_independence_data_covers_zero():
    rng = np.random.default_rng(8)
    n, covered = 300, 0
    for r in range(20):
        z = rng.uniform(-1, 1, n)
        u1, u2 = rng.uniform(size=n), rng.uniform(size=n)
        ch = fit_copula(u1, u2, z, "gaussian", PriorConfig(), MCMCConfig(1500, 500, 2), rng)
        lo, hi = np.quantile(ch["beta_rho1"][:, 0], [0.025, 0.975])
        covered += lo < 0 < hi
    assert covered >= 16


def test_xi2_rho_absent_without_covariates():
    rng = np.random.default_rng(9)
    u1, u2, _ = _copula_data("clayton", 0.5, 0.0, 100, rng)
    state, acc, fb = iwls_mh_update_copula(CopulaState(0.5), u1, u2, np.ones((100, 1)), "clayton", PriorConfig(), rng)
    assert state.xi2_rho == 1.0 and not fb


def _small_margins(rng, n=60):
    mesh = build_regular_mesh(4, 0.05)
    fem = assemble_fem(mesh)
    sites = rng.uniform(size=(n, 2))
    psi = basis_matrix(mesh, sites)
    X = rng.normal(size=(n, 1))
    zk = rng.normal(size=(mesh.M, 1)) * 0.3
    phi = np.mod(math.pi + 0.5 * X[:, 0] + rng.normal(0, 0.7, n), 2 * math.pi)
    y2 = np.exp(1.0 + 0.3 * X[:, 0] + rng.normal(0, 0.5, n))
    return fem, MarginData("circular", phi, X, psi, zk), MarginData("linear", y2, X, psi, zk)


def test_fit_margin_shapes_and_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    fem, dc, dl = _small_margins(rng)
    cfg = MCMCConfig(300, 100, 4)
    ch = fit_margin(dc, PriorConfig(), cfg, rng, fem)
    assert ch.n_draws == 50 and ch.loglik.shape == (50, dc.n)
    assert ch.k.shape == (50, dc.n) and ch.gamma.shape == (50, dc.M)
    assert set(ch.acceptance) == {"theta", "zeta2", "winding_moves"}
    ch.save(tmp_path)
    back = ChainOutput.load(tmp_path, "circular")
    for name in ch.draws:
        np.testing.assert_array_equal(back[name], ch[name])
    np.testing.assert_array_equal(back.loglik, ch.loglik)
    np.testing.assert_array_equal(back.k, ch.k)
    np.testing.assert_array_equal(back.gamma, ch.gamma)


def test_fit_margin_is_deterministic():
    fem, dc, _ = _small_margins(np.random.default_rng(11))
    cfg = MCMCConfig(120, 40, 2)
    a = fit_margin(dc, PriorConfig(), cfg, 5, fem)
    b = fit_margin(dc, PriorConfig(), cfg, 5, fem)
    np.testing.assert_array_equal(a.loglik, b.loglik)


def test_fit_margin_requires_fem():
    _, dc, _ = _small_margins(np.random.default_rng(12))
    with pytest.raises(ValueError, match="FEM"):
        fit_margin(dc, PriorConfig(), MCMCConfig(10, 5, 1), 0)


def test_pseudo_observations_in_unit_interval():
    rng = np.random.default_rng(13)
    fem, dc, dl = _small_margins(rng)
    cfg = MCMCConfig(300, 100, 4)
    cc = fit_margin(dc, PriorConfig(), cfg, rng, fem)
    cl = fit_margin(dl, PriorConfig(), cfg, rng, fem)
    u1, u2 = pseudo_observations(cc, cl, dc, dl)
    assert u1.shape == (dc.n,) and np.all((u1 > 0) & (u1 < 1)) and np.all((u2 > 0) & (u2 < 1))
    U1, U2 = pseudo_observations(cc, cl, dc, dl, "per-draw")
    assert U1.shape == (50, dc.n)
    # the linear PIT is roughly uniform for a well-specified margin
    assert stats.kstest(u2, "uniform").pvalue > 1e-3
    assert posterior_mean_predictor(cl, dl).shape == (dl.n,)


def test_draw_indices_and_circular_median():
    np.testing.assert_array_equal(draw_indices(10, 5), [0, 2, 4, 6, 8])
    with pytest.raises(ValueError):
        draw_indices(0, 3)
    phi = np.array([[6.2, 0.1], [0.05, 0.2], [6.25, 0.3]])
    med = circular_median(phi)
    assert med[0] == pytest.approx(6.25) and med[1] == pytest.approx(0.2)
