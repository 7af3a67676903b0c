"""Posterior predictive distribution at new sites."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtri

from ..copulas import _spec, clamp_u, link_to_rho, sample_pair
from ..density import DEFAULT_SUPPORT, LogNormalParams, WrappedNormalParams, pwc_log_pdf, wrap_angle
from .chain import ChainOutput
from .copula_stage import copula_eta_draws


@dataclass
class PredictiveParams:
    """Per-draw marginal and copula parameters at ``n`` sites (``D`` draws)."""

    mu1: np.ndarray
    sigma2_1: np.ndarray
    mu2: np.ndarray
    sigma2_2: np.ndarray
    rho: np.ndarray | None
    family: str | None

    @property
    def n_draws(self) -> int:
        return self.mu1.shape[0]

    @property
    def n_sites(self) -> int:
        return self.mu1.shape[1]


def draw_indices(T: int, n_draws: int) -> np.ndarray:
    """Evenly spaced draw indices (deterministic thinning of the posterior sample)."""
    if T < 1 or n_draws < 1:
        raise ValueError("need at least one draw")
    return (np.arange(n_draws) * T) // n_draws


def _predictor(chain: ChainOutput, idx, X, psi):
    mu = np.repeat(np.asarray(chain["beta0"])[idx, None], X.shape[0], axis=1)
    if X.shape[1]:
        mu = mu + chain["beta1"][idx] @ X.T
    if chain.gamma is not None:
        mu = mu + np.asarray(psi @ chain.gamma[idx].T).T
    return mu


def predictive_parameters(chain_c: ChainOutput, chain_l: ChainOutput, psi_new, X_c, X_l,
                          cop_chain: ChainOutput | None = None, spec=None, Z_rho=None,
                          n_draws: int | None = None) -> PredictiveParams:
    n = psi_new.shape[0]
    X_c = np.asarray(X_c, dtype=float).reshape(n, -1)
    X_l = np.asarray(X_l, dtype=float).reshape(n, -1)
    T = min(chain_c.n_draws, chain_l.n_draws, cop_chain.n_draws if cop_chain is not None else np.inf)
    D = int(T) if n_draws is None else int(n_draws)
    ic, il = draw_indices(chain_c.n_draws, D), draw_indices(chain_l.n_draws, D)
    rho, family = None, None
    if cop_chain is not None:
        spec = _spec(spec)
        family = spec.family
        eta = copula_eta_draws(cop_chain, Z_rho, n)[draw_indices(cop_chain.n_draws, D)]
        rho = link_to_rho(spec, eta)
    return PredictiveParams(_predictor(chain_c, ic, X_c, psi_new), np.asarray(chain_c["sigma2"])[ic],
                            _predictor(chain_l, il, X_l, psi_new), np.asarray(chain_l["sigma2"])[il],
                            rho, family)


def sample_predictive(params: PredictiveParams, rng, reps: int = 1):
    """Draw ``(phi, y2)`` arrays of shape ``(D * reps, n)``; angles wrapped to ``[0, 2 pi)``."""
    rng = np.random.default_rng(rng)
    D, n = params.n_draws, params.n_sites
    shape = (reps, D, n)
    if params.rho is None:
        u1, u2 = rng.uniform(size=shape), rng.uniform(size=shape)
    else:
        u1, u2 = sample_pair(params.family, np.broadcast_to(params.rho, shape), rng, size=shape)
    z1, z2 = ndtri(clamp_u(u1)), ndtri(clamp_u(u2))
    phi = wrap_angle(params.mu1 + np.sqrt(params.sigma2_1)[:, None] * z1)
    y2 = np.exp(params.mu2 + np.sqrt(params.sigma2_2)[:, None] * z2)
    return phi.reshape(reps * D, n), y2.reshape(reps * D, n)


def predictive_log_density(params: PredictiveParams, phi, y2, support=DEFAULT_SUPPORT) -> np.ndarray:
    """Per-site log of the posterior-averaged PWC density at ``(phi, y2)``."""
    wn = WrappedNormalParams(params.mu1, params.sigma2_1[:, None])
    ln = LogNormalParams(params.mu2, params.sigma2_2[:, None])
    lp = pwc_log_pdf(np.asarray(phi)[None, :], np.asarray(y2)[None, :], wn, ln,
                     params.family, params.rho, support)
    return logsumexp(lp, axis=0) - np.log(params.n_draws)


def circular_median(phi_draws, axis=0):
    """Angle minimising the mean geodesic distance, searched among the draws themselves."""
    phi = np.moveaxis(np.asarray(phi_draws, dtype=float), axis, 0)
    flat = phi.reshape(phi.shape[0], -1)
    out = np.empty(flat.shape[1])
    for j in range(flat.shape[1]):
        a = flat[:, j]
        d = np.abs(a[:, None] - a[None, :])
        d = np.minimum(d, 2.0 * np.pi - d)
        out[j] = a[np.argmin(d.sum(axis=1))]
    return out.reshape(phi.shape[1:])
