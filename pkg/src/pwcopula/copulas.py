"""One-parameter bivariate copulas: Gaussian, Clayton and Gumbel.

Every family carries a link ``eta -> rho`` that maps the real line onto the
open admissible range of the association parameter. Densities and the
``eta``-derivatives used by IWLS proposals are computed in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

FAMILIES = ("gaussian", "clayton", "gumbel")
U_EPS = 1e-12
W_MIN = 1e-6

_RANGES = {
    "gaussian": (-1.0, 1.0),
    "clayton": (0.0, math.inf),
    "gumbel": (1.0, math.inf),
}


@dataclass(frozen=True)
class CopulaSpec:
    family: str

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in FAMILIES:
            raise ValueError(f"unknown copula family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", fam)

    @property
    def rho_range(self):
        return _RANGES[self.family]

    @property
    def tag(self) -> str:
        return {"gaussian": "N", "clayton": "C", "gumbel": "G"}[self.family]


def _spec(spec) -> CopulaSpec:
    return spec if isinstance(spec, CopulaSpec) else CopulaSpec(spec)


def clamp_u(u):
    return np.clip(np.asarray(u, dtype=float), U_EPS, 1.0 - U_EPS)


def _check_rho(spec: CopulaSpec, rho):
    lo, hi = spec.rho_range
    rho = np.asarray(rho, dtype=float)
    if spec.family == "gaussian":
        ok = (rho >= lo) & (rho <= hi)
    elif spec.family == "clayton":
        ok = rho > lo
    else:
        ok = rho >= lo
    if not np.all(ok):
        raise ValueError(f"rho outside the admissible range of the {spec.family} copula")
    return rho


def link_to_rho(spec, eta):
    spec = _spec(spec)
    eta = np.asarray(eta, dtype=float)
    if spec.family == "gaussian":
        return eta / np.sqrt(1.0 + eta * eta)
    if spec.family == "clayton":
        return np.exp(eta)
    return 1.0 + np.exp(eta)


def rho_to_eta(spec, rho):
    spec = _spec(spec)
    rho = np.asarray(rho, dtype=float)
    if spec.family == "gaussian":
        return rho / np.sqrt(1.0 - rho * rho)
    if spec.family == "clayton":
        return np.log(rho)
    return np.log(rho - 1.0)


def tail_dependence(spec, rho):
    """``(lambda_lower, lambda_upper)``."""
    spec = _spec(spec)
    rho = _check_rho(spec, rho)
    zero = np.zeros_like(rho)
    if spec.family == "gaussian":
        return zero, zero
    if spec.family == "clayton":
        return 2.0 ** (-1.0 / rho), zero
    return zero, 2.0 - 2.0 ** (1.0 / rho)


# --- bivariate normal CDF ---------------------------------------------------
# Genz (2004), "Numerical computation of rectangular bivariate and trivariate
# normal and t probabilities", with the 20-point Gauss-Legendre rule throughout.

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_GL_X, _GL_W = _GL_X[:10], _GL_W[:10]
_TWOPI = 2.0 * math.pi


def bvn_upper(h, k, r):
    """``P(X > h, Y > k)`` for a standard bivariate normal with correlation ``r``."""
    h, k, r = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (h, k, r)))
    out = np.empty(h.shape)
    small = np.abs(r) < 0.925
    if np.any(small):
        hs_, ks_, rs_ = h[small], k[small], r[small]
        hk = hs_ * ks_
        hs = 0.5 * (hs_ * hs_ + ks_ * ks_)
        asr = np.arcsin(rs_)
        acc = np.zeros_like(hs_)
        for x, w in zip(_GL_X, _GL_W):
            for sgn in (1.0, -1.0):
                sn = np.sin(asr * (sgn * x + 1.0) / 2.0)
                acc += w * np.exp((sn * hk - hs) / (1.0 - sn * sn))
        out[small] = acc * asr / (2.0 * _TWOPI) + ndtr(-hs_) * ndtr(-ks_)
    big = ~small
    if np.any(big):
        hb, kb, rb = h[big], k[big].copy(), r[big]
        kb = np.where(rb < 0, -kb, kb)
        hk = hb * kb
        bvn = np.zeros_like(hb)
        inner = np.abs(rb) < 1.0
        if np.any(inner):
            hi, ki, ri, hki = hb[inner], kb[inner], rb[inner], hk[inner]
            as_ = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(as_)
            bs = (hi - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 16.0
            val = a * np.exp(-(bs / as_ + hki) / 2.0) * (
                1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
            )
            b = np.sqrt(bs)
            tail = np.exp(-hki / 2.0) * math.sqrt(_TWOPI) * ndtr(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
            val = val - np.where(hki > -160.0, tail, 0.0)
            a = a / 2.0
            for x, w in zip(_GL_X, _GL_W):
                xs = (a * (x + 1.0)) ** 2
                rs = np.sqrt(1.0 - xs)
                val = val + a * w * (
                    np.exp(-bs / (2.0 * xs) - hki / (1.0 + rs)) / rs
                    - np.exp(-(bs / xs + hki) / 2.0) * (1.0 + c * xs * (1.0 + d * xs))
                )
                xs = as_ * (1.0 - x) ** 2 / 4.0
                rs = np.sqrt(1.0 - xs)
                val = val + a * w * np.exp(-(bs / xs + hki) / 2.0) * (
                    np.exp(-hki * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs))
                )
            bvn[inner] = -val / _TWOPI
        pos = rb > 0
        bvn = np.where(pos, bvn + ndtr(-np.maximum(hb, kb)), bvn)
        neg_adj = np.where(hb < 0, ndtr(kb) - ndtr(hb), ndtr(-hb) - ndtr(-kb))
        bvn = np.where(~pos, -bvn + np.where(kb > hb, neg_adj, 0.0), bvn)
        out[big] = bvn
    return np.clip(out, 0.0, 1.0)


def bvn_cdf(x, y, r):
    """``P(X <= x, Y <= y)``."""
    return bvn_upper(-np.asarray(x, dtype=float), -np.asarray(y, dtype=float), r)


# --- CDF and density ---------------------------------------------------------


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise ValueError("copula arguments must lie in [0, 1]")
    return u


def cdf(spec, u1, u2, rho):
    spec = _spec(spec)
    rho = _check_rho(spec, rho)
    u1 = _check_u(u1)
    u2 = _check_u(u2)
    if spec.family == "gaussian":
        return bvn_cdf(ndtri(clamp_u(u1)), ndtri(clamp_u(u2)), rho)
    a, b = clamp_u(u1), clamp_u(u2)
    if spec.family == "clayton":
        t = _log_clayton_sum(np.log(a), np.log(b), rho)
        return np.exp(-t / rho)
    x, y = -np.log(a), -np.log(b)
    s = np.logaddexp(rho * np.log(x), rho * np.log(y))
    return np.exp(-np.exp(s / rho))


def _log_clayton_sum(la, lb, rho):
    """``log(u1^-rho + u2^-rho - 1)`` without overflow."""
    ea, eb = -rho * la, -rho * lb
    m = np.maximum(ea, eb)
    return m + np.log(np.exp(ea - m) + np.exp(eb - m) - np.exp(-m))


def log_density(spec, u1, u2, rho):
    spec = _spec(spec)
    rho = _check_rho(spec, rho)
    a, b = clamp_u(_check_u(u1)), clamp_u(_check_u(u2))
    if spec.family == "gaussian":
        x, y = ndtri(a), ndtri(b)
        q = 1.0 - rho * rho
        return -0.5 * np.log(q) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * q)
    la, lb = np.log(a), np.log(b)
    if spec.family == "clayton":
        t = _log_clayton_sum(la, lb, rho)
        return np.log1p(rho) - (1.0 + rho) * (la + lb) - (2.0 + 1.0 / rho) * t
    x, y = -la, -lb
    lx, ly = np.log(x), np.log(y)
    g = np.logaddexp(rho * lx, rho * ly)
    A = np.exp(g / rho)
    return -A + x + y + (rho - 1.0) * (lx + ly) + (2.0 / rho - 2.0) * g + np.log1p((rho - 1.0) / A)


def density(spec, u1, u2, rho):
    return np.exp(log_density(spec, u1, u2, rho))


# --- derivatives with respect to the predictor ------------------------------


def _gaussian_eta_derivs(a, b, eta):
    x, y = ndtri(a), ndtri(b)
    s, p = x * x + y * y, x * y
    q = 1.0 + eta * eta
    d1 = eta / q - eta * s + p * (1.0 + 2.0 * eta * eta) / np.sqrt(q)
    d2 = (1.0 - eta * eta) / q**2 - s + p * eta * (3.0 + 2.0 * eta * eta) / q**1.5
    return d1, d2


def _clayton_eta_derivs(a, b, eta):
    rho = np.exp(eta)
    la, lb = np.log(a), np.log(b)
    ea, eb = -rho * la, -rho * lb
    m = np.maximum(ea, eb)
    A, B, R = np.exp(ea - m), np.exp(eb - m), np.exp(-m)
    T = A + B - R
    logT = m + np.log(T)
    t1 = -(A * la + B * lb) / T
    t2 = (A * la * la + B * lb * lb) / T
    c = 2.0 + 1.0 / rho
    l_r = 1.0 / (1.0 + rho) - (la + lb) + logT / rho**2 - c * t1
    l_rr = -1.0 / (1.0 + rho) ** 2 - 2.0 * logT / rho**3 + 2.0 * t1 / rho**2 - c * (t2 - t1 * t1)
    return l_r * rho, l_rr * rho * rho + l_r * rho


def _gumbel_eta_derivs(a, b, eta):
    e = np.exp(eta)
    rho = 1.0 + e
    x, y = -np.log(a), -np.log(b)
    lx, ly = np.log(x), np.log(y)
    g = np.logaddexp(rho * lx, rho * ly)
    px = np.exp(rho * lx - g)
    py = np.exp(rho * ly - g)
    g1 = px * lx + py * ly
    g2 = px * lx * lx + py * ly * ly - g1 * g1
    h = g / rho
    h1 = g1 / rho - g / rho**2
    h2 = g2 / rho - 2.0 * g1 / rho**2 + 2.0 * g / rho**3
    A = np.exp(h)
    A1 = A * h1
    A2 = A * (h2 + h1 * h1)
    E = A + rho - 1.0
    E1 = A1 + 1.0
    D1 = E1 / E - h1
    D2 = A2 / E - (E1 / E) ** 2 - h2
    l_r = -A1 + lx + ly - 2.0 * g / rho**2 + (2.0 / rho - 2.0) * g1 + D1
    l_rr = -A2 + 4.0 * g / rho**3 - 4.0 * g1 / rho**2 + (2.0 / rho - 2.0) * g2 + D2
    return l_r * e, l_rr * e * e + l_r * e


_DERIVS = {"gaussian": _gaussian_eta_derivs, "clayton": _clayton_eta_derivs, "gumbel": _gumbel_eta_derivs}


def log_density_eta(spec, u1, u2, eta):
    spec = _spec(spec)
    return log_density(spec, u1, u2, link_to_rho(spec, eta))


def eta_score_and_curvature(spec, u1, u2, eta, floor: bool = True, w_min: float = W_MIN):
    """Score ``v = d/deta log c`` and working weight ``w = -d^2/deta^2 log c``.

    With ``floor`` the weight is bounded below by ``w_min`` so IWLS precisions stay positive.
    """
    spec = _spec(spec)
    a, b = clamp_u(_check_u(u1)), clamp_u(_check_u(u2))
    a, b, eta = np.broadcast_arrays(a, b, np.asarray(eta, dtype=float))
    d1, d2 = _DERIVS[spec.family](a, b, eta)
    w = -d2
    if floor:
        w = np.maximum(w, w_min)
    return d1, w


# --- sampling ----------------------------------------------------------------


def _positive_stable(alpha, rng, size):
    """Kanter's representation of a positive stable law with Laplace transform ``exp(-t^alpha)``."""
    w = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    alpha = np.broadcast_to(alpha, size)
    with np.errstate(divide="ignore", invalid="ignore"):
        part1 = (np.sin(alpha * w) / np.sin(w)) ** (1.0 / alpha)
        part2 = (np.sin((1.0 - alpha) * w) / (np.sin(alpha * w) * e)) ** ((1.0 - alpha) / alpha)
    return np.where(alpha >= 1.0, 1.0, part1 * part2)


def sample_pair(spec, rho, rng, size=None):
    """Draw ``(u1, u2)`` from the copula; ``rho`` may be an array (one draw per entry)."""
    spec = _spec(spec)
    rho = _check_rho(spec, rho)
    if size is None:
        size = rho.shape
    rho = np.broadcast_to(rho, size)
    if spec.family == "gaussian":
        z1 = rng.standard_normal(size)
        z2 = rho * z1 + np.sqrt(1.0 - rho * rho) * rng.standard_normal(size)
        return ndtr(z1), ndtr(z2)
    e1 = rng.standard_exponential(size)
    e2 = rng.standard_exponential(size)
    if spec.family == "clayton":
        v = rng.standard_gamma(1.0 / rho, size)
        return np.exp(-np.log1p(e1 / v) / rho), np.exp(-np.log1p(e2 / v) / rho)
    alpha = 1.0 / rho
    s = _positive_stable(alpha, rng, size)
    return np.exp(-((e1 / s) ** alpha)), np.exp(-((e2 / s) ** alpha))


def kendall_tau(spec, rho):
    """Closed-form Kendall's tau for the three families."""
    spec = _spec(spec)
    rho = np.asarray(rho, dtype=float)
    if spec.family == "gaussian":
        return 2.0 / math.pi * np.arcsin(rho)
    if spec.family == "clayton":
        return rho / (rho + 2.0)
    return 1.0 - 1.0 / rho
