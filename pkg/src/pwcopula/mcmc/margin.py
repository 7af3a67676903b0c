"""Stage one: MCMC for a single wrapped-normal or log-normal spatial margin.

Per sweep: the mean block ``(beta0, beta1, gamma)`` is drawn jointly from its
Gaussian full conditional, then ``sigma2`` and ``xi2`` by conjugate inverse-gamma
draws, ``theta`` by a RAM block update, ``zeta2`` by log-scale random-walk MH and,
for the circular margin, all winding numbers by vectorised single-site Metropolis.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..density import TWO_PI, ln_log_pdf, normal_log_pdf, wn_log_pdf, WrappedNormalParams, LogNormalParams
from ..linalg import NotPositiveDefiniteError, gmrf_sample, sparse_cholesky
from ..mesh import PrecisionAssembler
from ..priors import PriorConfig, normal_logpdf, uniform_logpdf, weibull_half_logpdf
from .chain import ChainOutput
from .ram import RamAdapter, accept_probability
from .state import MarginData, MarginState, MCMCConfig, initial_margin_state


class SamplerError(ArithmeticError):
    pass


def _sample_ig(shape, scale, rng):
    return scale / rng.standard_gamma(shape)


def _mvn_from_precision(H, b, rng):
    """Draw from ``N(H^-1 b, H^-1)`` for a small dense ``H``."""
    L = np.linalg.cholesky(H)
    mean = sla.cho_solve((L, True), b)
    return mean + sla.solve_triangular(L.T, rng.standard_normal(len(b)), lower=False)


class FieldContext:
    """Precision assembly and reusable symbolic factorizations for one margin."""

    def __init__(self, data: MarginData, fem, backend: str = "banded"):
        self.assembler = PrecisionAssembler(fem, data.z_kappa_nodes)
        pattern = self.assembler(np.r_[0.0, 1.0, np.zeros(self.assembler.n_theta - 2)])
        self.psi = data.psi
        self.psi_t = sp.csr_matrix(data.psi.T)
        self.PtP = sp.csr_matrix(self.psi_t @ data.psi)
        self.q_factor = sparse_cholesky(pattern, backend)
        self.post_factor = sparse_cholesky(pattern + abs(self.PtP), backend)
        self.A = np.hstack([np.ones((data.n, 1)), data.X])
        self.B = np.asarray(self.psi_t @ self.A)
        self.Q = None
        self.logdet = None

    def set_theta(self, theta):
        Q = self.assembler(theta)
        self.q_factor.factorize(Q)
        self.Q, self.logdet = Q, self.q_factor.logdet()


# --- Gibbs blocks -------------------------------------------------------------


def gibbs_update_mean_block(state: MarginState, y_tilde, data: MarginData, prior: PriorConfig, rng,
                            ctx: FieldContext | None = None) -> MarginState:
    """Joint draw of ``(beta0, beta1, gamma)`` from its Gaussian full conditional.

    With a field, ``beta`` is drawn with ``gamma`` integrated out, using
    ``(s2 I + psi Q^-1 psi')^-1 = I/s2 - psi P^-1 psi' / s2^2`` with
    ``P = Q + psi' psi / s2``, and then ``gamma | beta``. Both use one sparse
    factorization of ``P``.
    """
    y = np.asarray(y_tilde, dtype=float)
    s2 = state.sigma2
    A = ctx.A if ctx is not None else np.hstack([np.ones((data.n, 1)), data.X])
    D = np.r_[1.0 / prior.intercept_var_mu, np.full(data.p, 1.0 / state.xi2)]
    H = A.T @ A / s2 + np.diag(D)
    b = A.T @ y / s2
    if ctx is not None:
        P = ctx.Q + ctx.PtP / s2
        try:
            ctx.post_factor.factorize(P)
        except NotPositiveDefiniteError as exc:
            raise SamplerError("posterior precision of the field is not positive definite") from exc
        py = ctx.psi_t @ y
        sol = ctx.post_factor.solve(np.column_stack([ctx.B, py]))
        SB, Sy = sol[:, :-1], sol[:, -1]
        H = H - ctx.B.T @ SB / s2**2
        b = b - ctx.B.T @ Sy / s2**2
    beta = _mvn_from_precision(0.5 * (H + H.T), b, rng)
    out = state.copy()
    out.beta0, out.beta1 = float(beta[0]), beta[1:]
    if ctx is not None:
        r = y - A @ beta
        mean = ctx.post_factor.solve(ctx.psi_t @ r) / s2
        out.gamma = gmrf_sample(ctx.post_factor, mean, rng)
    return out


def gibbs_update_variances(state: MarginState, y_tilde, data: MarginData, prior: PriorConfig, rng) -> MarginState:
    out = state.copy()
    r = np.asarray(y_tilde) - state.linear_predictor(data)
    out.sigma2 = float(_sample_ig(prior.ig_shape + 0.5 * data.n, prior.ig_scale + 0.5 * float(r @ r), rng))
    if data.p:
        bb = float(state.beta1 @ state.beta1)
        out.xi2 = float(_sample_ig(prior.ig_shape + 0.5 * data.p, prior.ig_scale + 0.5 * bb, rng))
    return out


# --- Metropolis blocks --------------------------------------------------------


def theta_log_prior(theta, zeta2, prior: PriorConfig, margin: str) -> float:
    lo, hi = prior.theta_tau_range(prior.s_max(margin))
    lp = uniform_logpdf(theta[0], lo, hi) + uniform_logpdf(theta[1], *prior.theta_kappa_range)
    if len(theta) > 2 and math.isfinite(lp):
        lp += normal_logpdf(theta[2:], zeta2)
    return lp


def ram_update_theta(state: MarginState, data: MarginData, prior: PriorConfig, ctx: FieldContext,
                     adapter: RamAdapter, rng) -> MarginState:
    """RAM block update of ``theta`` targeting ``p(gamma | theta) p(theta)``.

    Proposals outside the prior support, overflowing fields or indefinite precisions are
    rejected and count as rejections for the adaptation.
    """
    prop, u = adapter.propose(state.theta, rng)
    lp_new = theta_log_prior(prop, state.zeta2, prior, data.name)
    accepted, a = False, 0.0
    if math.isfinite(lp_new):
        try:
            Qn = ctx.assembler(prop)
            ctx.q_factor.factorize(Qn)
            ld_new = ctx.q_factor.logdet()
        except (OverflowError, NotPositiveDefiniteError, ValueError):
            Qn = None
        if Qn is not None:
            g = state.gamma
            lt_new = 0.5 * ld_new - 0.5 * float(g @ (Qn @ g)) + lp_new
            lt_old = (0.5 * ctx.logdet - 0.5 * float(g @ (ctx.Q @ g))
                      + theta_log_prior(state.theta, state.zeta2, prior, data.name))
            a = accept_probability(lt_new - lt_old)
            if rng.uniform() < a:
                accepted = True
                ctx.Q, ctx.logdet = Qn, ld_new
    adapter.update(u, a, accepted)
    if not accepted:
        return state
    out = state.copy()
    out.theta = prop
    return out


def zeta2_log_target(log_zeta2, theta_k1, lam) -> float:
    z = math.exp(log_zeta2)
    lt = weibull_half_logpdf(z, lam) + log_zeta2
    if len(theta_k1):
        lt += normal_logpdf(theta_k1, z)
    return lt


def mh_update_zeta2(state: MarginState, adapter: RamAdapter, lam: float, rng) -> MarginState:
    """Random-walk MH on ``log zeta2`` (Jacobian included), adapted to the scalar target."""
    cur = math.log(state.zeta2)
    prop, u = adapter.propose(np.array([cur]), rng)
    prop = float(prop[0])
    a = 0.0
    if abs(prop) < 700.0:
        a = accept_probability(zeta2_log_target(prop, state.theta[2:], lam) - zeta2_log_target(cur, state.theta[2:], lam))
    accepted = bool(rng.uniform() < a)
    adapter.update(u, a, accepted)
    if not accepted:
        return state
    out = state.copy()
    out.zeta2 = math.exp(prop)
    return out


def mh_update_winding(state: MarginState, data: MarginData, rng, mu=None, extra_term=None) -> MarginState:
    """Metropolis update of every winding number; proposals uniform on ``{k-1, k, k+1}``.

    Sites are conditionally independent given the other parameters, so all sites are
    updated at once. ``extra_term(k)`` may add per-site log terms (e.g. a copula factor).
    Proposals outside the support have zero prior mass and are rejected.
    """
    k = state.k
    if mu is None:
        mu = state.linear_predictor(data)
    kp = k + rng.integers(-1, 2, size=k.shape)
    u = rng.uniform(size=k.shape)
    inside = data.support.contains(kp)
    kp_safe = np.where(inside, kp, k)
    lr = normal_log_pdf(data.y + TWO_PI * kp_safe, mu, state.sigma2) - normal_log_pdf(data.y + TWO_PI * k, mu, state.sigma2)
    if extra_term is not None:
        lr = lr + extra_term(kp_safe) - extra_term(k)
    accept = inside & (np.log(u) < lr)
    out = state.copy()
    out.k = np.where(accept, kp, k)
    return out


# --- pointwise likelihood -----------------------------------------------------


def margin_pointwise_loglik(data: MarginData, mu, sigma2) -> np.ndarray:
    """Observed-data log-likelihood per site (winding numbers summed out)."""
    if data.circular:
        return wn_log_pdf(data.y, WrappedNormalParams(mu, sigma2), data.support)
    return ln_log_pdf(data.y, LogNormalParams(mu, sigma2))


# --- driver -------------------------------------------------------------------


def fit_margin(data: MarginData, prior: PriorConfig, mcmc: MCMCConfig, rng, fem=None,
               init: MarginState | None = None, callback=None) -> ChainOutput:
    """Run the stage-one sampler for one margin and return thinned draws."""
    if data.n == 0:
        raise ValueError("empty dataset")
    if data.has_field and fem is None:
        raise ValueError("a margin with a spatial field needs the FEM matrices")
    rng = np.random.default_rng(rng)
    state = init.copy() if init is not None else initial_margin_state(data, prior)
    ctx = None
    if data.has_field:
        ctx = FieldContext(data, fem, mcmc.backend)
        ctx.set_theta(state.theta)
    d = len(state.theta)
    theta_ad = RamAdapter(d, mcmc.ram_target, mcmc.ram_df, mcmc.ram_init_scale, mcmc.adapt_decay)
    zeta_ad = RamAdapter(1, mcmc.scalar_target, None, 1.0, mcmc.adapt_decay)
    use_zeta = data.has_field and d > 2

    T = mcmc.n_keep
    keep = {"beta0": np.empty(T), "beta1": np.empty((T, data.p)), "sigma2": np.empty(T), "xi2": np.empty(T)}
    if data.has_field:
        keep["theta"] = np.empty((T, d))
        if use_zeta:
            keep["zeta2"] = np.empty(T)
    gam = np.empty((T, data.M)) if data.has_field else None
    kk = np.empty((T, data.n), dtype=int) if data.circular else None
    ll = np.empty((T, data.n))
    n_wind_acc, n_wind = 0, 0
    t = 0
    for it in range(1, mcmc.n_iter + 1):
        if it == mcmc.burn_in + 1:
            theta_ad.frozen = zeta_ad.frozen = True
            theta_ad.reset_counts()
            zeta_ad.reset_counts()
        y = data.working_response(state.k)
        state = gibbs_update_mean_block(state, y, data, prior, rng, ctx)
        state = gibbs_update_variances(state, y, data, prior, rng)
        if data.has_field:
            state = ram_update_theta(state, data, prior, ctx, theta_ad, rng)
            if use_zeta:
                state = mh_update_zeta2(state, zeta_ad, prior.pc_lambda, rng)
        mu = state.linear_predictor(data)
        if data.circular:
            k_old = state.k
            state = mh_update_winding(state, data, rng, mu=mu)
            if it > mcmc.burn_in:
                n_wind_acc += int(np.sum(state.k != k_old))
                n_wind += data.n
        if mcmc.keep(it):
            keep["beta0"][t] = state.beta0
            keep["beta1"][t] = state.beta1
            keep["sigma2"][t] = state.sigma2
            keep["xi2"][t] = state.xi2
            if data.has_field:
                keep["theta"][t] = state.theta
                gam[t] = state.gamma
                if use_zeta:
                    keep["zeta2"][t] = state.zeta2
            if data.circular:
                kk[t] = state.k
            ll[t] = margin_pointwise_loglik(data, mu, state.sigma2)
            t += 1
        if callback is not None:
            callback(it, state)
    if not data.p:
        del keep["beta1"], keep["xi2"]
    acc = {}
    if data.has_field:
        acc["theta"] = theta_ad.acceptance_rate
        if use_zeta:
            acc["zeta2"] = zeta_ad.acceptance_rate
    if data.circular:
        acc["winding_moves"] = n_wind_acc / n_wind if n_wind else math.nan
    return ChainOutput(data.name, keep, ll, gam, kk, acc, meta={"ram_S": theta_ad.S.tolist()})


# --- summaries used by later stages -------------------------------------------


def posterior_mean_predictor(chain: ChainOutput, data: MarginData) -> np.ndarray:
    """Linear predictor at the posterior means of ``beta`` and ``gamma``."""
    mu = np.mean(chain["beta0"]) + np.zeros(data.n)
    if data.p:
        mu = mu + data.X @ chain.mean("beta1")
    if chain.gamma is not None:
        mu = mu + data.psi @ np.mean(chain.gamma, axis=0)
    return mu


def loglik_at_mean(chain: ChainOutput, data: MarginData) -> np.ndarray:
    """Pointwise log-likelihood at the mean of unconstrained parameters (log variance)."""
    s2 = math.exp(float(np.mean(np.log(chain["sigma2"]))))
    return margin_pointwise_loglik(data, posterior_mean_predictor(chain, data), s2)


def winding_mode(k_draws, support_order=(0, -1, 1)) -> np.ndarray:
    """Per-site posterior mode of the winding numbers; ties go to the earliest value of
    ``support_order`` (zero first)."""
    k_draws = np.asarray(k_draws)
    order = list(support_order) + sorted(set(np.unique(k_draws)) - set(support_order), key=abs)
    counts = np.stack([np.sum(k_draws == v, axis=0) for v in order])
    return np.asarray(order)[np.argmax(counts, axis=0)]
