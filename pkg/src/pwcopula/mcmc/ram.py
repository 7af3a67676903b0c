"""Robust adaptive Metropolis (Vihola, 2012) proposal adaptation."""

from __future__ import annotations

import math

import numpy as np


class RamAdapter:
    """Lower-triangular proposal factor ``S`` adapted towards a target acceptance rate.

    After each proposal ``x* = x + S u`` with acceptance probability ``a`` the factor is
    updated through ``S S^T <- S (I + eta_n (a - target) u u^T / |u|^2) S^T`` with step
    ``eta_n = min(1, d n^-decay)``. ``df=None`` gives Gaussian proposals, otherwise
    Student-t with ``df`` degrees of freedom.
    """

    def __init__(self, dim: int, target: float = 0.234, df: float | None = 4.0,
                 scale=0.1, decay: float = 2.0 / 3.0):
        if dim < 1:
            raise ValueError("dim must be positive")
        if not 0.0 < target < 1.0:
            raise ValueError("target must lie in (0, 1)")
        self.dim = dim
        self.target = target
        self.df = df
        self.decay = decay
        scale = np.asarray(scale, dtype=float)
        self.S = np.diag(np.broadcast_to(scale, (dim,))).astype(float) if scale.ndim < 2 else scale.copy()
        self.n = 0
        self.frozen = False
        self.n_accept = 0
        self.n_propose = 0

    def draw(self, rng) -> np.ndarray:
        u = rng.standard_normal(self.dim)
        if self.df is not None:
            u = u / math.sqrt(rng.chisquare(self.df) / self.df)
        return u

    def propose(self, x, rng):
        u = self.draw(rng)
        return np.asarray(x, dtype=float) + self.S @ u, u

    def update(self, u, accept_prob: float, accepted: bool) -> None:
        self.n_propose += 1
        self.n_accept += bool(accepted)
        if self.frozen:
            return
        self.n += 1
        nu = float(u @ u)
        if nu == 0.0 or not np.any(self.S):
            return
        eta = min(1.0, self.dim * self.n ** (-self.decay))
        uu = np.outer(u, u) / nu
        A = self.S @ (np.eye(self.dim) + eta * (accept_prob - self.target) * uu) @ self.S.T
        self.S = np.linalg.cholesky(0.5 * (A + A.T))

    @property
    def acceptance_rate(self) -> float:
        return self.n_accept / self.n_propose if self.n_propose else math.nan

    def reset_counts(self) -> None:
        self.n_accept = 0
        self.n_propose = 0


def accept_probability(log_ratio: float) -> float:
    if math.isnan(log_ratio):
        return 0.0
    return 1.0 if log_ratio >= 0 else math.exp(log_ratio)
