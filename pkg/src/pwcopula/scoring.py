"""Information criteria, proper scoring rules and the cross-validation split."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

TWO_PI = 2.0 * math.pi


def _check_ll(ll) -> np.ndarray:
    ll = np.asarray(ll, dtype=float)
    if ll.ndim != 2:
        raise ValueError("log-likelihood matrix must be draws x sites")
    if ll.shape[0] < 2:
        raise ValueError("at least two draws are required")
    if not np.all(np.isfinite(ll)):
        raise ValueError("log-likelihood matrix has non-finite entries")
    return ll


def dic(ll, ll_at_mean) -> float:
    """``DIC = 2 mean_t D(theta_t) - D(theta_bar)`` with ``D = -2 log p(y | theta)``."""
    ll = _check_ll(ll)
    mean_dev = -2.0 * float(np.mean(np.sum(ll, axis=1)))
    dev_hat = -2.0 * float(np.sum(ll_at_mean))
    return 2.0 * mean_dev - dev_hat


def dic_penalty(ll, ll_at_mean) -> float:
    ll = _check_ll(ll)
    return -2.0 * float(np.mean(np.sum(ll, axis=1))) + 2.0 * float(np.sum(ll_at_mean))


def lppd(ll) -> float:
    ll = _check_ll(ll)
    return float(np.sum(logsumexp(ll, axis=0) - math.log(ll.shape[0])))


def p_waic(ll) -> float:
    ll = _check_ll(ll)
    return float(np.sum(2.0 * np.var(ll, axis=0, ddof=1)))


def waic(ll) -> float:
    """``-2 (lppd - p_WAIC)`` with ``p_WAIC = sum_i 2 var_t log p(y_i | theta_t)``."""
    return -2.0 * (lppd(ll) - p_waic(ll))


# --- predictive scores ----------------------------------------------------------


def score_nls(log_pred_density) -> float:
    """Mean negative log predictive density over held-out sites."""
    return -float(np.mean(log_pred_density))


def angular_distance(a, b):
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), TWO_PI))
    return np.minimum(d, TWO_PI - d)


def _embed(phi, y2):
    phi, y2 = np.broadcast_arrays(np.asarray(phi, dtype=float), np.asarray(y2, dtype=float))
    return np.stack([np.cos(phi), np.sin(phi), y2], axis=-1)


def _energy(dist_obs, dist_pair) -> np.ndarray:
    """Per-site energy score from ``(S, n)`` and ``(S, S, n)`` distance arrays."""
    S = dist_obs.shape[0]
    return dist_obs.mean(axis=0) - dist_pair.sum(axis=(0, 1)) / (2.0 * S * S)


def _pairwise_chunks(n, S, budget=2_000_000):
    # keep the S x S x chunk pairwise array near ``budget`` entries
    chunk = max(1, budget // (S * S))
    for start in range(0, n, chunk):
        yield slice(start, min(n, start + chunk))


def score_es(phi_draws, y2_draws, phi_obs, y2_obs) -> float:
    """Energy score with the Euclidean distance of ``(cos phi, sin phi, y2)``.

    Draw arrays are ``(S, n)`` with ``S >= 2``.
    """
    phi_draws, y2_draws = np.asarray(phi_draws, float), np.asarray(y2_draws, float)
    if phi_draws.shape[0] < 2:
        raise ValueError("at least two predictive draws are required")
    X = _embed(phi_draws, y2_draws)
    x = _embed(phi_obs, y2_obs)
    out = []
    for sl in _pairwise_chunks(X.shape[1], X.shape[0]):
        Xs = X[:, sl]
        d_obs = np.linalg.norm(Xs - x[None, sl], axis=-1)
        d_pair = np.linalg.norm(Xs[:, None] - Xs[None, :], axis=-1)
        out.append(_energy(d_obs, d_pair))
    return float(np.mean(np.concatenate(out)))


def cylinder_distance(phi_a, y_a, phi_b, y_b):
    """Product metric with the geodesic angular distance."""
    return np.hypot(angular_distance(phi_a, phi_b), np.asarray(y_a) - np.asarray(y_b))


def score_crps_cyl(phi_draws, y2_draws, phi_obs, y2_obs) -> float:
    """Energy score under the cylindrical distance ``sqrt(d_ang^2 + dy^2)``."""
    phi_draws, y2_draws = np.asarray(phi_draws, float), np.asarray(y2_draws, float)
    if phi_draws.shape[0] < 2:
        raise ValueError("at least two predictive draws are required")
    phi_obs, y2_obs = np.asarray(phi_obs, float), np.asarray(y2_obs, float)
    out = []
    for sl in _pairwise_chunks(phi_draws.shape[1], phi_draws.shape[0]):
        P, Y = phi_draws[:, sl], y2_draws[:, sl]
        d_obs = cylinder_distance(P, Y, phi_obs[None, sl], y2_obs[None, sl])
        d_pair = cylinder_distance(P[:, None], Y[:, None], P[None, :], Y[None, :])
        out.append(_energy(d_obs, d_pair))
    return float(np.mean(np.concatenate(out)))


def rmse(pred, obs) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(obs)) ** 2)))


def mean_angular_error(pred_angle, obs_angle) -> float:
    return float(np.mean(angular_distance(pred_angle, obs_angle)))


def fold_assignment(n: int, folds: int, rng) -> np.ndarray:
    """Random, balanced fold labels ``0 .. folds-1``."""
    if folds < 2 or n < folds:
        raise ValueError("need 2 <= folds <= n")
    rng = np.random.default_rng(rng)
    labels = np.arange(n) % folds
    return rng.permutation(labels)
