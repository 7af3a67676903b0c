"""Synthetic cylindrical data from the partially wrapped copula model."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtri

from .copulas import FAMILIES, clamp_u, link_to_rho, sample_pair
from .data import CylDataset
from .density import wrap_angle
from .linalg import gmrf_sample, sparse_cholesky
from .mesh import Mesh, assemble_fem, basis_matrix, precision_nonstationary, kappa_tau_fields, theta_from_range_variance

DEPENDENCE = ("constant", "varying")


def covariate_surfaces(sites):
    """The three synthetic covariate surfaces on ``[0, 1]^2``."""
    s = np.asarray(sites, dtype=float).reshape(-1, 2)
    s1, s2 = s[:, 0], s[:, 1]
    z_beta = 2.0 * np.sin(2.0 * np.pi * s1) * np.sin(4.0 * np.pi * s2)
    z_kappa = 0.5 + np.sin(2.0 * np.pi * s1) * np.cos(4.0 * np.pi * s2)
    z_rho = np.sin(4.0 * s2 + s1) - 0.5 * np.exp(-64.0 * s1**2)
    return z_beta, z_kappa, z_rho


@dataclass(frozen=True)
class MarginTruth:
    beta0: float
    beta1: float
    field_range: float = 0.5
    field_variance: float = 0.5
    theta_kappa1: float = 0.25
    sigma2: float = 1.0

    @property
    def theta(self) -> np.ndarray:
        lt, lk = theta_from_range_variance(self.field_range, self.field_variance)
        return np.array([lt, lk, self.theta_kappa1])


@dataclass(frozen=True)
class ScenarioConfig:
    family: str = "gumbel"
    dependence: str = "constant"
    n: int = 250
    replications: int = 1
    seed: int = 2024
    eta0: float = 0.577
    eta1: float = -0.374
    circular: MarginTruth = field(default_factory=lambda: MarginTruth(math.pi, 0.5))
    linear: MarginTruth = field(default_factory=lambda: MarginTruth(1.0, 0.3))

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown copula family {self.family!r}")
        if self.dependence not in DEPENDENCE:
            raise ValueError(f"dependence must be one of {DEPENDENCE}")
        if self.n < 1 or self.replications < 1:
            raise ValueError("n and replications must be positive")

    @property
    def name(self) -> str:
        return f"{self.family}-{self.dependence}-n{self.n}"

    def eta(self, z_rho) -> np.ndarray:
        z_rho = np.asarray(z_rho, dtype=float)
        if self.dependence == "constant":
            return np.full(z_rho.shape, self.eta0)
        return self.eta0 + self.eta1 * z_rho

    def truth(self) -> dict:
        d = asdict(self)
        d["circular"]["theta"] = self.circular.theta.tolist()
        d["linear"]["theta"] = self.linear.theta.tolist()
        return d


def sample_field(mesh: Mesh, truth: MarginTruth, z_kappa_nodes, rng, fem=None) -> np.ndarray:
    fem = assemble_fem(mesh) if fem is None else fem
    tau, kappa = kappa_tau_fields(truth.theta, z_kappa_nodes)
    Q = precision_nonstationary(fem, tau, kappa)
    factor = sparse_cholesky(Q).factorize(Q)
    return gmrf_sample(factor, np.zeros(mesh.M), rng)


def simulate_scenario(cfg: ScenarioConfig, mesh: Mesh, rng, fem=None):
    """One synthetic dataset and its ground truth (fields at nodes, per-site ``eta``)."""
    rng = np.random.default_rng(rng)
    fem = assemble_fem(mesh) if fem is None else fem
    sites = rng.uniform(size=(cfg.n, 2))
    zb, zk, zr = covariate_surfaces(sites)
    zk_nodes = covariate_surfaces(mesh.nodes)[1]
    psi = basis_matrix(mesh, sites)
    g1 = sample_field(mesh, cfg.circular, zk_nodes, rng, fem)
    g2 = sample_field(mesh, cfg.linear, zk_nodes, rng, fem)
    eta = cfg.eta(zr)
    rho = link_to_rho(cfg.family, eta)
    u1, u2 = sample_pair(cfg.family, rho, rng)
    mu1 = cfg.circular.beta0 + cfg.circular.beta1 * zb + psi @ g1
    mu2 = cfg.linear.beta0 + cfg.linear.beta1 * zb + psi @ g2
    y1 = mu1 + math.sqrt(cfg.circular.sigma2) * ndtri(clamp_u(u1))
    ly2 = mu2 + math.sqrt(cfg.linear.sigma2) * ndtri(clamp_u(u2))
    phi = wrap_angle(y1)
    ds = CylDataset(sites, phi, np.exp(ly2), zb[:, None], zk[:, None],
                    zr[:, None] if cfg.dependence == "varying" else np.zeros((cfg.n, 0)),
                    covariate_names={"beta": ["beta_1"], "kappa": ["kappa_1"],
                                     "rho": ["rho_1"] if cfg.dependence == "varying" else []})
    truth = cfg.truth()
    truth.update({"gamma_circular": g1.tolist(), "gamma_linear": g2.tolist(), "eta": eta.tolist(),
                  "winding": np.floor(y1 / (2.0 * np.pi)).astype(int).tolist()})
    return ds, truth


def replication_seeds(seed: int, n: int):
    return np.random.SeedSequence(seed).spawn(n)
