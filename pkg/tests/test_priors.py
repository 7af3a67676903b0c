import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from pwcopula.priors import (
    PriorConfig,
    calibrate_pc_lambda,
    copula_prior_blocks,
    inv_gamma_logpdf,
    log_prior_all,
    margin_prior_blocks,
    pc_bound_c,
    weibull_half_logpdf,
    weibull_half_sample,
)


def test_pc_bound_default_is_two():
    # floor(ln(100) / 2) = floor(2.3026)
    assert pc_bound_c(0.01, 1) == 2
    assert PriorConfig().pc_c == 2.0


@given(a=st.floats(1e-4, 10), r=st.floats(1, 1e4))
def test_pc_bound_formula(a, r):
    c = pc_bound_c(a, a * r)
    # only the ratio matters; allow rounding at exact integers
    assert abs(c - 0.5 * math.log(r)) <= 1 and c <= 0.5 * math.log(r) + 1e-9


def test_pc_bound_rejects_bad_ranges():
    with pytest.raises(ValueError):
        pc_bound_c(1.0, 0.5)


def test_weibull_density_normalised_and_mean():
    lam = 0.7
    val, _ = integrate.quad(lambda x: math.exp(weibull_half_logpdf(x, lam)), 0, np.inf, limit=200)
    assert val == pytest.approx(1.0, abs=1e-7)
    draws = weibull_half_sample(lam, np.random.default_rng(0), 400_000)
    assert draws.mean() == pytest.approx(2 * lam, rel=0.02)
    assert weibull_half_logpdf(-1.0, lam) == -math.inf


def test_inv_gamma_matches_scipy():
    for x in (0.1, 1.0, 7.0):
        assert inv_gamma_logpdf(x, 2.5, 1.5) == pytest.approx(stats.invgamma.logpdf(x, 2.5, scale=1.5))
    assert inv_gamma_logpdf(0.0, 1, 1) == -math.inf


def test_calibration_hits_tail_probability():
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((40, 1))
    cal = calibrate_pc_lambda(Z, 2.0, 0.05, 20_000, rng=5)
    assert not cal.saturated
    # fresh Monte Carlo check of P(max |z theta| <= c) at the calibrated lambda
    r2 = np.random.default_rng(9)
    zeta2 = weibull_half_sample(cal.lam, r2, 200_000)
    theta = r2.standard_normal(200_000) * np.sqrt(zeta2)
    p = np.mean(np.max(np.abs(np.outer(theta, Z[:, 0])), axis=1) <= 2.0)
    assert p == pytest.approx(0.95, abs=0.01)


def test_calibration_validation_and_degenerate():
    with pytest.raises(ValueError, match="1e4"):
        calibrate_pc_lambda(np.ones((3, 1)), 2.0, 0.05, 100)
    cal = calibrate_pc_lambda(np.zeros((3, 1)), 2.0, 0.05)
    assert cal.saturated


def test_calibration_monotone_in_c():
    Z = np.linspace(-1, 1, 20)[:, None]
    a = calibrate_pc_lambda(Z, 1.0, 0.05, rng=1).lam
    b = calibrate_pc_lambda(Z, 2.0, 0.05, rng=1).lam
    assert b > a


@pytest.mark.parametrize("kw", [dict(pc_alpha=1.0), dict(ig_shape=0.0), dict(theta_kappa_range=(3.0, 2.0)),
                                dict(theta_tau_upper=-20.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PriorConfig(**kw)


def _state(**kw):
    base = dict(beta0=0.2, beta1=np.array([0.1, -0.3]), sigma2=0.5, xi2=1.2, theta=np.array([-3.0, 2.0, 0.1]),
                zeta2=0.05, k=np.array([0, 1, -1]))
    base.update(kw)
    return SimpleNamespace(**base)


def test_margin_blocks_values():
    cfg = PriorConfig()
    b = margin_prior_blocks(_state(), cfg, "circular")
    assert b["beta0"] == pytest.approx(stats.norm.logpdf(0.2, 0, math.sqrt(10)))
    assert b["beta1"] == pytest.approx(stats.norm.logpdf([0.1, -0.3], 0, math.sqrt(1.2)).sum())
    assert b["k"] == pytest.approx(-3 * math.log(3))
    lo, hi = cfg.theta_tau_range(2 * math.pi)
    assert b["theta_tau0"] == pytest.approx(-math.log(hi - lo))
    assert b["theta_kappa0"] == pytest.approx(-math.log(5.0))
    assert "k" not in margin_prior_blocks(_state(), cfg, "linear")


def test_margin_blocks_support():
    cfg = PriorConfig()
    assert margin_prior_blocks(_state(theta=np.array([-3.0, 7.0, 0.0])), cfg, "linear")["theta_kappa0"] == -math.inf
    assert margin_prior_blocks(_state(k=np.array([2])), cfg, "circular")["k"] == -math.inf


def test_log_prior_all_sums_blocks():
    cfg = PriorConfig()
    cop = SimpleNamespace(beta_rho0=0.3, beta_rho1=np.array([0.5]), xi2_rho=2.0)
    total = log_prior_all({"circular": _state(), "linear": _state(k=None)}, cop, cfg, {"circular": -1.5})
    expect = (sum(margin_prior_blocks(_state(), cfg, "circular", -1.5).values())
              + sum(margin_prior_blocks(_state(k=None), cfg, "linear").values())
              + sum(copula_prior_blocks(cop, cfg).values()))
    assert total == pytest.approx(expect)
