"""Wrapped-normal, log-normal and partially wrapped copula densities on the cylinder.

Everything is evaluated in log space and combined with ``logsumexp`` over the
winding numbers ``k`` of a :class:`WindingSupport`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from .copulas import clamp_u, log_density as copula_log_density

TWO_PI = 2.0 * math.pi
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class WrappedNormalParams:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not np.all(np.asarray(self.sigma2) > 0):
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class LogNormalParams:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not np.all(np.asarray(self.sigma2) > 0):
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class WindingSupport:
    k_values: tuple = (-1, 0, 1)

    def __post_init__(self):
        ks = tuple(int(k) for k in self.k_values)
        if not ks or 0 not in ks or len(set(ks)) != len(ks):
            raise ValueError("winding support must be a finite set of distinct integers containing 0")
        object.__setattr__(self, "k_values", tuple(sorted(ks)))

    @classmethod
    def symmetric(cls, width: int) -> "WindingSupport":
        return cls(tuple(range(-width, width + 1)))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.k_values, dtype=float)

    def __contains__(self, k) -> bool:
        return int(k) in self.k_values

    def contains(self, k) -> np.ndarray:
        return np.isin(np.asarray(k), self.k_values)


DEFAULT_SUPPORT = WindingSupport()


def normal_log_pdf(x, mu, sigma2):
    x, mu, sigma2 = (np.asarray(a, dtype=float) for a in (x, mu, sigma2))
    return -_LOG_SQRT_2PI - 0.5 * np.log(sigma2) - 0.5 * (x - mu) ** 2 / sigma2


def wrap_angle(phi):
    out = np.mod(np.asarray(phi, dtype=float), TWO_PI)
    # tiny negative angles round up to exactly 2 pi
    return np.where(out >= TWO_PI, 0.0, out)


def _kgrid(support: WindingSupport, ndim: int):
    return support.array.reshape((-1,) + (1,) * ndim)


def wn_log_pdf(phi, params: WrappedNormalParams, support: WindingSupport = DEFAULT_SUPPORT):
    """Log of the wrapped normal density, truncated to the winding support."""
    phi = np.asarray(phi, dtype=float)
    mu, s2 = np.broadcast_arrays(np.asarray(params.mu, float), np.asarray(params.sigma2, float))
    shape = np.broadcast_shapes(phi.shape, mu.shape)
    k = _kgrid(support, len(shape))
    terms = normal_log_pdf(phi + TWO_PI * k, mu, s2)
    return logsumexp(terms, axis=0)


def ln_log_pdf(y, params: LogNormalParams):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("log-normal density requires y > 0")
    ly = np.log(y)
    return normal_log_pdf(ly, params.mu, params.sigma2) - ly


def _pieces(phi_unwrapped, y2, wn: WrappedNormalParams, ln: LogNormalParams):
    s1 = np.sqrt(np.asarray(wn.sigma2, dtype=float))
    s2 = np.sqrt(np.asarray(ln.sigma2, dtype=float))
    ly = np.log(y2)
    u1 = clamp_u(ndtr((phi_unwrapped - wn.mu) / s1))
    u2 = clamp_u(ndtr((ly - ln.mu) / s2))
    lp1 = normal_log_pdf(phi_unwrapped, wn.mu, wn.sigma2)
    lp2 = normal_log_pdf(ly, ln.mu, ln.sigma2) - ly
    return u1, u2, lp1, lp2


def pwc_log_pdf(phi, y2, wn: WrappedNormalParams, ln: LogNormalParams, cop=None, rho=None,
                support: WindingSupport = DEFAULT_SUPPORT):
    """Log density of the partially wrapped copula model at ``(phi, y2)``.

    ``cop=None`` gives the independence model.
    """
    phi = np.asarray(phi, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y2 <= 0):
        raise ValueError("y2 must be positive")
    shape = np.broadcast_shapes(phi.shape, y2.shape, np.shape(wn.mu), np.shape(ln.mu),
                                np.shape(rho) if rho is not None else ())
    k = _kgrid(support, len(shape))
    u1, u2, lp1, lp2 = _pieces(phi + TWO_PI * k, y2, wn, ln)
    terms = lp1 + lp2
    if cop is not None:
        terms = terms + copula_log_density(cop, u1, u2, rho)
    return logsumexp(np.broadcast_to(terms, (len(support.k_values),) + shape), axis=0)


def augmented_log_lik(phi, y2, k, wn: WrappedNormalParams, ln: LogNormalParams, cop=None, rho=None,
                      support: WindingSupport = DEFAULT_SUPPORT, pointwise: bool = False):
    """Log-likelihood with the winding numbers ``k`` fixed (no sum over ``k``)."""
    k = np.asarray(k)
    if not np.all(support.contains(k)):
        raise ValueError("winding numbers outside the support")
    phi = np.asarray(phi, dtype=float)
    u1, u2, lp1, lp2 = _pieces(phi + TWO_PI * k, np.asarray(y2, dtype=float), wn, ln)
    out = lp1 + lp2
    if cop is not None:
        out = out + copula_log_density(cop, u1, u2, rho)
    return out if pointwise else float(np.sum(out))
