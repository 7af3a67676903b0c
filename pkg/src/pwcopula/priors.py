"""Prior hierarchy for the marginal GMRF models and the copula predictor.

Weibull convention: ``Weibull(1/2, lam)`` has survival ``exp(-(x / lam)^(1/2))``
and mean ``2 lam``. It is the prior of the smoothing variance of the
nonstationary range coefficients (a PC prior shrinking towards stationarity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorConfig:
    intercept_var_mu: float = 10.0
    intercept_var_rho: float = 100.0
    ig_shape: float = 0.001
    ig_scale: float = 0.001
    theta_tau_upper: float = 0.0
    theta_tau_offset: float = 7.0
    theta_kappa_range: tuple = (1.0, 6.0)
    s_max_circular: float = 2.0 * math.pi
    s_max_linear: float = 3.45
    range_min: float = 0.01
    range_max: float = 1.0
    pc_alpha: float = 0.05
    pc_lambda: float = 0.1
    pc_c: float = field(default=None)

    def __post_init__(self):
        if self.pc_c is None:
            object.__setattr__(self, "pc_c", float(pc_bound_c(self.range_min, self.range_max)))
        if not 0.0 < self.pc_alpha < 1.0:
            raise ValueError("pc_alpha must lie in (0, 1)")
        for name in ("intercept_var_mu", "intercept_var_rho", "ig_shape", "ig_scale", "pc_lambda",
                     "s_max_circular", "s_max_linear"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        lo, hi = self.theta_kappa_range
        if not lo < hi:
            raise ValueError("theta_kappa_range must be a nonempty interval")
        for s in (self.s_max_circular, self.s_max_linear):
            if not self.theta_tau_range(s)[0] < self.theta_tau_upper:
                raise ValueError("theta_tau range is empty")

    def theta_tau_range(self, s_max: float):
        return (-self.theta_tau_offset - math.log(s_max), self.theta_tau_upper)

    def s_max(self, margin: str) -> float:
        return self.s_max_circular if margin == "circular" else self.s_max_linear

    def with_lambda(self, lam: float) -> "PriorConfig":
        return replace(self, pc_lambda=float(lam))


def pc_bound_c(range_min: float = 0.01, range_max: float = 1.0) -> int:
    """Integer bound on the nonstationary log-range deviation."""
    if not 0 < range_min <= range_max:
        raise ValueError("need 0 < range_min <= range_max")
    sq8 = math.sqrt(8.0)
    return int(math.floor(0.5 * abs(math.log(sq8 / range_min) - math.log(sq8 / range_max))))


# --- component log densities -------------------------------------------------


def normal_logpdf(x, var):
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * (LOG_2PI + math.log(var)) - 0.5 * x * x / var))


def inv_gamma_logpdf(x, shape, scale):
    x = float(x)
    if not x > 0:
        return -math.inf
    return shape * math.log(scale) - gammaln(shape) - (shape + 1.0) * math.log(x) - scale / x


def uniform_logpdf(x, lo, hi):
    return -math.log(hi - lo) if lo < x < hi else -math.inf


def weibull_half_logpdf(x, lam):
    x = float(x)
    if not x > 0:
        return -math.inf
    return math.log(0.5) - math.log(lam) - 0.5 * math.log(x / lam) - math.sqrt(x / lam)


def weibull_half_sample(lam, rng, size=None):
    return lam * rng.weibull(0.5, size)


# --- PC prior calibration ------------------------------------------------------


class PcCalibration(NamedTuple):
    lam: float
    saturated: bool
    tail_prob: float


def _tail_prob(lam, w0, m2, c):
    return float(np.mean(lam * w0 * m2 <= c * c))


def calibrate_pc_lambda(z_kappa_nodes, c, alpha, n_sim=10_000, rng=None,
                        lam_bounds=(1e-6, 1e6), iters=200) -> PcCalibration:
    """Largest ``lam`` with ``P(max_s |z(s) theta| <= c) >= 1 - alpha`` under
    ``zeta2 ~ Weibull(1/2, lam)`` and ``theta | zeta2 ~ N(0, zeta2 I)``.

    The Monte Carlo draws are generated once and rescaled with ``lam`` (common
    random numbers), so the estimated probability is monotone in ``lam`` and
    bisection on ``log lam`` is well defined.
    """
    if n_sim < 10_000:
        raise ValueError("n_sim must be at least 1e4")
    rng = np.random.default_rng(rng)
    Z = np.asarray(z_kappa_nodes, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    lo, hi = lam_bounds
    if not np.any(Z):
        return PcCalibration(hi, True, 1.0)
    w0 = rng.weibull(0.5, n_sim)
    eps = rng.standard_normal((n_sim, Z.shape[1]))
    m2 = np.max(np.abs(eps @ Z.T), axis=1) ** 2
    target = 1.0 - alpha
    if _tail_prob(lo, w0, m2, c) < target:
        raise ValueError("tail constraint cannot be met even at the smallest lambda; check the covariates")
    if _tail_prob(hi, w0, m2, c) >= target:
        return PcCalibration(hi, True, _tail_prob(hi, w0, m2, c))
    a, b = math.log(lo), math.log(hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if _tail_prob(math.exp(mid), w0, m2, c) >= target:
            a = mid
        else:
            b = mid
        if b - a < 1e-12:
            break
    lam = math.exp(a)
    return PcCalibration(lam, False, _tail_prob(lam, w0, m2, c))


# --- full prior ----------------------------------------------------------------


def margin_prior_blocks(state, cfg: PriorConfig, margin: str, gmrf_logpdf=None) -> dict:
    """Per-block log prior of one marginal model.

    ``state`` needs ``beta0, beta1, sigma2, xi2, theta, zeta2`` and, for the
    circular margin, ``k``. ``gmrf_logpdf`` (optional) is the value of
    ``log p(gamma | theta)`` supplied by the caller, which owns the mesh.
    """
    theta = np.asarray(state.theta, dtype=float)
    beta1 = np.asarray(state.beta1, dtype=float)
    lo_t, hi_t = cfg.theta_tau_range(cfg.s_max(margin))
    lo_k, hi_k = cfg.theta_kappa_range
    blocks = {
        "beta0": normal_logpdf(state.beta0, cfg.intercept_var_mu),
        "beta1": normal_logpdf(beta1, state.xi2) if beta1.size and state.xi2 > 0 else (0.0 if beta1.size == 0 else -math.inf),
        "xi2": inv_gamma_logpdf(state.xi2, cfg.ig_shape, cfg.ig_scale) if beta1.size else 0.0,
        "sigma2": inv_gamma_logpdf(state.sigma2, cfg.ig_shape, cfg.ig_scale),
        "theta_tau0": uniform_logpdf(theta[0], lo_t, hi_t),
        "theta_kappa0": uniform_logpdf(theta[1], lo_k, hi_k),
    }
    if theta.size > 2:
        blocks["theta_kappa1"] = normal_logpdf(theta[2:], state.zeta2) if state.zeta2 > 0 else -math.inf
        blocks["zeta2"] = weibull_half_logpdf(state.zeta2, cfg.pc_lambda)
    if margin == "circular" and getattr(state, "k", None) is not None:
        k = np.asarray(state.k)
        inside = np.all(np.isin(k, (-1, 0, 1)))
        blocks["k"] = -k.size * math.log(3.0) if inside else -math.inf
    if gmrf_logpdf is not None:
        blocks["gamma"] = float(gmrf_logpdf)
    return blocks


def copula_prior_blocks(state, cfg: PriorConfig) -> dict:
    beta1 = np.asarray(state.beta_rho1, dtype=float)
    blocks = {"beta_rho0": normal_logpdf(state.beta_rho0, cfg.intercept_var_rho)}
    if beta1.size:
        blocks["beta_rho1"] = normal_logpdf(beta1, state.xi2_rho) if state.xi2_rho > 0 else -math.inf
        blocks["xi2_rho"] = inv_gamma_logpdf(state.xi2_rho, cfg.ig_shape, cfg.ig_scale)
    return blocks


def log_prior_all(margins: dict, copula, cfg: PriorConfig, gmrf_logpdfs: dict | None = None) -> float:
    """Sum of all prior blocks; ``margins`` maps ``"circular"``/``"linear"`` to states."""
    total = 0.0
    gmrf_logpdfs = gmrf_logpdfs or {}
    for name, state in margins.items():
        total += sum(margin_prior_blocks(state, cfg, name, gmrf_logpdfs.get(name)).values())
    if copula is not None:
        total += sum(copula_prior_blocks(copula, cfg).values())
    return total
