"""Sampler states, margin data containers and run lengths."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from ..density import DEFAULT_SUPPORT, TWO_PI, WindingSupport
from ..mesh import theta_from_range_variance

MARGINS = ("circular", "linear")


@dataclass(frozen=True)
class MCMCConfig:
    n_iter: int = 15000
    burn_in: int = 7000
    thin: int = 8
    ram_df: float | None = 4.0
    ram_target: float = 0.234
    scalar_target: float = 0.44
    adapt_decay: float = 2.0 / 3.0
    ram_init_scale: float = 0.1
    k_summary: str = "mode"
    backend: str = "banded"

    def __post_init__(self):
        if self.n_iter < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("n_iter and thin must be positive, burn_in nonnegative")
        if self.burn_in >= self.n_iter:
            raise ValueError("burn_in must be smaller than n_iter")
        if self.k_summary not in ("mode", "per-draw"):
            raise ValueError("k_summary must be 'mode' or 'per-draw'")

    @property
    def n_keep(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    def keep(self, it: int) -> bool:
        """``it`` is 1-based; draws after burn-in are kept every ``thin`` iterations."""
        return it > self.burn_in and (it - self.burn_in) % self.thin == 0

    def with_lengths(self, n_iter, burn_in, thin) -> "MCMCConfig":
        return replace(self, n_iter=n_iter, burn_in=burn_in, thin=thin)


@dataclass
class MarginData:
    """Response and design of one margin.

    ``y`` holds angles in ``[0, 2 pi)`` for the circular margin and positive values
    for the linear one. ``psi`` (sites x nodes) and ``z_kappa_nodes`` may be ``None``
    for a model without a spatial field.
    """

    name: str
    y: np.ndarray
    X: np.ndarray
    psi: sp.csr_matrix | None = None
    z_kappa_nodes: np.ndarray | None = None
    support: WindingSupport = DEFAULT_SUPPORT

    def __post_init__(self):
        if self.name not in MARGINS:
            raise ValueError(f"margin must be one of {MARGINS}")
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or self.y.size == 0:
            raise ValueError("margin data needs at least one observation")
        n = self.y.size
        X = np.asarray(self.X, dtype=float)
        self.X = X.reshape(n, -1) if X.size else np.zeros((n, 0))
        if self.name == "linear" and np.any(self.y <= 0):
            raise ValueError("linear responses must be positive")
        if self.name == "circular" and (np.any(self.y < 0) or np.any(self.y >= TWO_PI)):
            raise ValueError("circular responses must lie in [0, 2 pi)")
        if self.psi is not None:
            self.psi = sp.csr_matrix(self.psi)
            if self.psi.shape[0] != n:
                raise ValueError("basis matrix must have one row per observation")
            M = self.psi.shape[1]
            Z = np.zeros((M, 0)) if self.z_kappa_nodes is None else np.asarray(self.z_kappa_nodes, dtype=float)
            self.z_kappa_nodes = Z.reshape(M, -1) if Z.size else np.zeros((M, 0))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def has_field(self) -> bool:
        return self.psi is not None

    @property
    def M(self) -> int:
        return self.psi.shape[1] if self.psi is not None else 0

    @property
    def circular(self) -> bool:
        return self.name == "circular"

    def working_response(self, k=None) -> np.ndarray:
        if self.circular:
            return self.y + TWO_PI * (0 if k is None else np.asarray(k))
        return np.log(self.y)


@dataclass
class MarginState:
    beta0: float
    beta1: np.ndarray
    gamma: np.ndarray
    sigma2: float
    xi2: float
    theta: np.ndarray
    zeta2: float
    k: np.ndarray | None = None

    def copy(self) -> "MarginState":
        return MarginState(self.beta0, self.beta1.copy(), self.gamma.copy(), self.sigma2, self.xi2,
                           self.theta.copy(), self.zeta2, None if self.k is None else self.k.copy())

    def linear_predictor(self, data: MarginData) -> np.ndarray:
        mu = self.beta0 + data.X @ self.beta1
        if data.has_field:
            mu = mu + data.psi @ self.gamma
        return mu


@dataclass
class CopulaState:
    beta_rho0: float
    beta_rho1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    xi2_rho: float = 1.0

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate(([self.beta_rho0], self.beta_rho1))

    def copy(self) -> "CopulaState":
        return CopulaState(self.beta_rho0, self.beta_rho1.copy(), self.xi2_rho)


def initial_margin_state(data: MarginData, prior, init_range: float = 0.2) -> MarginState:
    """Deterministic start: moment-based mean and variances, zero field, ``k = 0``."""
    yt = data.working_response()
    v = float(np.var(yt)) if data.n > 1 else 1.0
    v = v if v > 0 else 1.0
    q = data.z_kappa_nodes.shape[1] if data.has_field else 0
    theta = np.zeros(2 + q)
    if data.has_field:
        lt, lk = theta_from_range_variance(init_range, 0.5 * v)
        lo, hi = prior.theta_tau_range(prior.s_max(data.name))
        klo, khi = prior.theta_kappa_range
        theta[0] = min(max(lt, lo + 0.1), hi - 0.1)
        theta[1] = min(max(lk, klo + 0.1), khi - 0.1)
    return MarginState(
        beta0=float(np.mean(yt)),
        beta1=np.zeros(data.p),
        gamma=np.zeros(data.M),
        sigma2=0.5 * v if data.has_field else v,
        xi2=1.0,
        theta=theta,
        zeta2=float(prior.pc_lambda),
        k=np.zeros(data.n, dtype=int) if data.circular else None,
    )


def spawn_rngs(seed, n: int):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n)]
