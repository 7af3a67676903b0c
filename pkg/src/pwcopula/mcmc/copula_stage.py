"""Stage two: copula regression on pseudo-observations with IWLS-MH proposals."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla
from scipy.special import ndtr

from ..copulas import W_MIN, _spec, clamp_u, eta_score_and_curvature, log_density, link_to_rho
from ..density import TWO_PI
from ..priors import PriorConfig
from .chain import ChainOutput
from .margin import posterior_mean_predictor, winding_mode
from .state import CopulaState, MarginData, MCMCConfig


def pseudo_observations(chain_c: ChainOutput, chain_l: ChainOutput, data_c: MarginData, data_l: MarginData,
                        k_summary: str = "mode"):
    """Probability-integral transforms of both responses under the fitted margins.

    ``mode`` plugs in posterior means of the predictors and nugget variances and the
    per-site modal winding number, returning two length-n vectors. ``per-draw`` uses
    every stage-one draw and returns two ``(T, n)`` matrices.
    """
    if k_summary == "mode":
        k_hat = winding_mode(chain_c.k) if chain_c.k is not None else 0
        mu1 = posterior_mean_predictor(chain_c, data_c)
        mu2 = posterior_mean_predictor(chain_l, data_l)
        s1 = math.sqrt(float(np.mean(chain_c["sigma2"])))
        s2 = math.sqrt(float(np.mean(chain_l["sigma2"])))
        u1 = ndtr((data_c.y + TWO_PI * k_hat - mu1) / s1)
        u2 = ndtr((np.log(data_l.y) - mu2) / s2)
        return clamp_u(u1), clamp_u(u2)
    if k_summary != "per-draw":
        raise ValueError("k_summary must be 'mode' or 'per-draw'")
    mu1 = draw_predictors(chain_c, data_c)
    mu2 = draw_predictors(chain_l, data_l)
    T = min(mu1.shape[0], mu2.shape[0])
    k = chain_c.k[:T] if chain_c.k is not None else 0
    u1 = ndtr((data_c.y + TWO_PI * k - mu1[:T]) / np.sqrt(chain_c["sigma2"][:T, None]))
    u2 = ndtr((np.log(data_l.y) - mu2[:T]) / np.sqrt(chain_l["sigma2"][:T, None]))
    return clamp_u(u1), clamp_u(u2)


def draw_predictors(chain: ChainOutput, data: MarginData, X=None, psi=None) -> np.ndarray:
    """``(T, n)`` matrix of linear predictors, one row per kept draw."""
    X = data.X if X is None else X
    psi = data.psi if psi is None else psi
    mu = np.repeat(np.asarray(chain["beta0"])[:, None], X.shape[0], axis=1)
    if X.shape[1]:
        mu = mu + chain["beta1"] @ X.T
    if chain.gamma is not None:
        mu = mu + np.asarray(psi @ chain.gamma.T).T
    return mu


def copula_design(Z_rho, n: int) -> np.ndarray:
    if Z_rho is None:
        return np.ones((n, 1))
    Z = np.asarray(Z_rho, dtype=float).reshape(n, -1)
    return np.hstack([np.ones((n, 1)), Z])


def _prior_precision(state: CopulaState, q: int, prior: PriorConfig) -> np.ndarray:
    return np.r_[1.0 / prior.intercept_var_rho, np.full(q, 1.0 / state.xi2_rho)]


def _copula_loglik(spec, u1, u2, eta) -> np.ndarray:
    return log_density(spec, u1, u2, link_to_rho(spec, eta))


def iwls_proposal(X, eta, v, w, dprec):
    """Gaussian IWLS proposal ``N(P^-1 X'(W eta + v), P^-1)`` with ``P = X'WX + diag(dprec)``.

    Returns the mean, the lower Cholesky factor of ``P`` and a flag set when ``P`` was
    not positive definite and the prior precision alone was used.
    """
    P = (X * w[:, None]).T @ X + np.diag(dprec)
    try:
        L = np.linalg.cholesky(0.5 * (P + P.T))
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(np.diag(dprec))
        return sla.cho_solve((L, True), np.zeros(X.shape[1])), L, True
    return sla.cho_solve((L, True), X.T @ (w * eta + v)), L, False


def _iwls_moments(spec, u1, u2, X, beta, dprec, w_min):
    eta = X @ beta
    v, w = eta_score_and_curvature(spec, u1, u2, eta, floor=True, w_min=w_min)
    return iwls_proposal(X, eta, v, w, dprec)


def _mvn_logpdf_chol(x, mean, L) -> float:
    z = L.T @ (x - mean)
    return float(np.sum(np.log(np.diag(L))) - 0.5 * z @ z - 0.5 * len(x) * math.log(2.0 * math.pi))


def iwls_mh_update_copula(state: CopulaState, u1, u2, X, spec, prior: PriorConfig, rng,
                          w_min: float = W_MIN):
    """One IWLS-MH move for ``beta_rho`` followed by a Gibbs draw of ``xi2_rho``.

    The proposal is ``N(mu, P^-1)`` with ``P = X'WX + D`` and ``mu = P^-1 X'(W eta + v)``
    where ``v`` and ``W`` are the score and floored curvature of the copula log-density in
    the predictor, evaluated at the current ``beta``. The reverse move is recomputed at
    the proposal. Returns ``(state, accepted, fallback)``.
    """
    spec = _spec(spec)
    q = X.shape[1] - 1
    dprec = _prior_precision(state, q, prior)
    beta = state.beta
    m_fwd, L_fwd, fb1 = _iwls_moments(spec, u1, u2, X, beta, dprec, w_min)
    prop = m_fwd + sla.solve_triangular(L_fwd.T, rng.standard_normal(len(beta)), lower=False)
    m_rev, L_rev, fb2 = _iwls_moments(spec, u1, u2, X, prop, dprec, w_min)

    def log_post(b):
        ll = float(np.sum(_copula_loglik(spec, u1, u2, X @ b)))
        return ll - 0.5 * float(np.sum(dprec * b * b))

    lr = (log_post(prop) - log_post(beta)
          + _mvn_logpdf_chol(beta, m_rev, L_rev) - _mvn_logpdf_chol(prop, m_fwd, L_fwd))
    accepted = bool(np.isfinite(lr) and math.log(rng.uniform()) < lr)
    out = state.copy()
    if accepted:
        out.beta_rho0, out.beta_rho1 = float(prop[0]), prop[1:].copy()
    if q:
        bb = float(out.beta_rho1 @ out.beta_rho1)
        out.xi2_rho = float((prior.ig_scale + 0.5 * bb) / rng.standard_gamma(prior.ig_shape + 0.5 * q))
    return out, accepted, fb1 or fb2


def iwls_mode(u1, u2, X, spec, prior: PriorConfig, xi2_rho: float = 1.0, iters: int = 50,
              w_min: float = W_MIN, tol: float = 1e-10) -> np.ndarray:
    """Posterior mode of ``beta_rho`` by iterating the IWLS mean map (Fisher scoring).

    Used as the starting point of the chain: from a distant start the reverse IWLS
    proposal density is negligible and almost every move would be rejected.
    """
    spec = _spec(spec)
    q = X.shape[1] - 1
    dprec = np.r_[1.0 / prior.intercept_var_rho, np.full(q, 1.0 / xi2_rho)]
    beta = np.zeros(X.shape[1])
    for _ in range(iters):
        new, _, fallback = _iwls_moments(spec, u1, u2, X, beta, dprec, w_min)
        if fallback or not np.all(np.isfinite(new)):
            break
        new = np.clip(new, -10.0, 10.0)
        step = np.max(np.abs(new - beta))
        beta = new
        if step < tol:
            break
    return beta


def fit_copula(u1, u2, Z_rho, spec, prior: PriorConfig, mcmc: MCMCConfig, rng,
               init: CopulaState | None = None) -> ChainOutput:
    """Stage-two sampler. ``u1``/``u2`` may be ``(T, n)``; iteration ``j`` then uses row ``j mod T``."""
    spec = _spec(spec)
    rng = np.random.default_rng(rng)
    U1, U2 = np.atleast_2d(u1), np.atleast_2d(u2)
    if U1.shape != U2.shape:
        raise ValueError("pseudo-observation arrays differ in shape")
    n = U1.shape[1]
    X = copula_design(Z_rho, n)
    q = X.shape[1] - 1
    if init is None:
        b = iwls_mode(U1.mean(axis=0), U2.mean(axis=0), X, spec, prior)
        init = CopulaState(float(b[0]), b[1:], 1.0)
    state = init.copy()
    T = mcmc.n_keep
    b0, b1, xi = np.empty(T), np.empty((T, q)), np.empty(T)
    ll = np.empty((T, n))
    n_acc = n_fb = n_post = 0
    t = 0
    for it in range(1, mcmc.n_iter + 1):
        row = (it - 1) % U1.shape[0]
        a, b = U1[row], U2[row]
        state, accepted, fb = iwls_mh_update_copula(state, a, b, X, spec, prior, rng)
        n_fb += fb
        if it > mcmc.burn_in:
            n_post += 1
            n_acc += accepted
        if mcmc.keep(it):
            b0[t], b1[t], xi[t] = state.beta_rho0, state.beta_rho1, state.xi2_rho
            ll[t] = _copula_loglik(spec, a, b, X @ state.beta)
            t += 1
    draws = {"beta_rho0": b0}
    if q:
        draws["beta_rho1"] = b1
        draws["xi2_rho"] = xi
    acc = {"beta_rho": n_acc / n_post if n_post else math.nan, "fallback_moves": n_fb}
    return ChainOutput("copula", draws, ll, acceptance=acc, meta={"family": spec.family})


def copula_eta_draws(chain: ChainOutput, Z_rho, n: int) -> np.ndarray:
    X = copula_design(Z_rho, n)
    B = chain["beta_rho0"][:, None]
    if X.shape[1] > 1:
        B = np.hstack([B, chain["beta_rho1"]])
    return B @ X.T


def copula_loglik_at_mean(chain: ChainOutput, u1, u2, Z_rho, spec) -> np.ndarray:
    n = np.shape(u1)[-1]
    X = copula_design(Z_rho, n)
    beta = np.r_[np.mean(chain["beta_rho0"]), chain.mean("beta_rho1") if X.shape[1] > 1 else []]
    U1, U2 = np.atleast_2d(u1), np.atleast_2d(u2)
    return _copula_loglik(_spec(spec), U1.mean(axis=0), U2.mean(axis=0), X @ beta)


__all__ = [
    "copula_design",
    "copula_eta_draws",
    "copula_loglik_at_mean",
    "draw_predictors",
    "fit_copula",
    "iwls_mh_update_copula",
    "iwls_mode",
    "iwls_proposal",
    "pseudo_observations",
]
