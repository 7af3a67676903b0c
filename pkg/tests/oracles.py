"""Independent reference implementations used by the tests.

Nothing here imports the numerical kernels under test; each oracle is a direct,
dense or closed-form transcription that is slow but easy to check by eye.
"""

import itertools
import math

import numpy as np
from scipy.spatial import Delaunay


def irregular_mesh_arrays(n_inner=12, seed=0):
    """Delaunay triangulation of the unit-square corners plus jittered interior points."""
    rng = np.random.default_rng(seed)
    pts = np.vstack([[0, 0], [1, 0], [1, 1], [0, 1], rng.uniform(0.1, 0.9, size=(n_inner, 2))])
    return pts, Delaunay(pts).simplices


def dense_fem(nodes, tris):
    """Lumped mass diagonal and stiffness matrix, one triangle at a time."""
    M = len(nodes)
    c = np.zeros(M)
    G = np.zeros((M, M))
    for t in tris:
        V = np.column_stack([np.ones(3), nodes[t]])
        area = 0.5 * abs(np.linalg.det(V))
        coef = np.linalg.inv(V)  # column i: coefficients of basis function i
        grads = coef[1:, :].T  # (3, 2)
        for a in range(3):
            c[t[a]] += area / 3.0
            for b in range(3):
                G[t[a], t[b]] += area * grads[a] @ grads[b]
    return c, G


def dense_precision(c, G, tau, kappa):
    """``T (K^4 C + K^2 G + G K^2 + G C^-1 G) T`` with diagonal ``T``, ``K``, ``C``."""
    M = len(c)
    tau = np.broadcast_to(np.asarray(tau, float), (M,))
    kappa = np.broadcast_to(np.asarray(kappa, float), (M,))
    K2 = np.diag(kappa**2)
    inner = np.diag(kappa**4 * c) + K2 @ G + G @ K2 + G @ np.diag(1.0 / c) @ G
    return np.diag(tau) @ inner @ np.diag(tau)


# --- copula densities in closed form ---------------------------------------------


def copula_density(family, u, v, rho):
    u, v = np.asarray(u, float), np.asarray(v, float)
    if family == "gaussian":
        from scipy.stats import norm

        x, y = norm.ppf(u), norm.ppf(v)
        q = (rho**2 * (x * x + y * y) - 2 * rho * x * y) / (2 * (1 - rho**2))
        return np.exp(-q) / math.sqrt(1 - rho**2)
    if family == "clayton":
        return (1 + rho) * (u * v) ** (-1 - rho) * (u**-rho + v**-rho - 1) ** (-2 - 1 / rho)
    x, y = -np.log(u), -np.log(v)
    s = x**rho + y**rho
    A = s ** (1 / rho)
    return np.exp(-A) / (u * v) * (x * y) ** (rho - 1) * s ** (-2 + 1 / rho) * (A + rho - 1)


def eta_to_rho(family, eta):
    if family == "gaussian":
        return eta / math.sqrt(1 + eta * eta)
    if family == "clayton":
        return math.exp(eta)
    return 1 + math.exp(eta)


def log_copula_eta(family, u, v, eta):
    return float(np.log(copula_density(family, u, v, eta_to_rho(family, eta))))


# --- enumeration and conjugate posteriors ----------------------------------------


def winding_posterior(phi, mu, sigma2, support=(-1, 0, 1)):
    """Joint posterior of the winding numbers of independent sites under a uniform prior."""
    states = list(itertools.product(support, repeat=len(phi)))
    logp = []
    for ks in states:
        y = np.asarray(phi) + 2 * math.pi * np.asarray(ks)
        logp.append(float(np.sum(-0.5 * (y - mu) ** 2 / sigma2)))
    logp = np.array(logp)
    p = np.exp(logp - logp.max())
    return states, p / p.sum()


def gaussian_posterior(A, y, s2, prior_prec):
    """Mean and covariance of ``b`` for ``y ~ N(A b, s2 I)``, ``b ~ N(0, prior_prec^-1)``."""
    H = A.T @ A / s2 + prior_prec
    cov = np.linalg.inv(H)
    return cov @ (A.T @ y / s2), cov


def inv_gamma_moments(shape, scale):
    mean = scale / (shape - 1)
    var = scale**2 / ((shape - 1) ** 2 * (shape - 2))
    return mean, var
