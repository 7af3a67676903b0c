"""Cylindrical datasets: container, station CSV ingestion and node covariates."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .density import TWO_PI

MISSING = {"", "na", "nan", "null", "none"}
DEFAULT_COLUMNS = {"id": "station_id", "x": "x", "y": "y", "direction": "direction", "speed": "speed"}
GROUPS = ("beta", "kappa", "rho")


class DataError(ValueError):
    pass


@dataclass
class CylDataset:
    sites: np.ndarray
    phi: np.ndarray
    y2: np.ndarray
    Z_beta: np.ndarray
    Z_kappa: np.ndarray
    Z_rho: np.ndarray
    site_ids: list = None
    covariate_names: dict = field(default_factory=dict)
    transform: dict = field(default_factory=dict)
    standardization: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sites = np.asarray(self.sites, dtype=float).reshape(-1, 2)
        n = self.sites.shape[0]
        self.phi = np.asarray(self.phi, dtype=float).reshape(n)
        self.y2 = np.asarray(self.y2, dtype=float).reshape(n)
        for name in ("Z_beta", "Z_kappa", "Z_rho"):
            Z = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, Z.reshape(n, -1) if Z.size else np.zeros((n, 0)))
        if self.site_ids is None:
            self.site_ids = [str(i) for i in range(n)]
        if len(self.site_ids) != n:
            raise DataError("one site id per observation is required")
        if not np.all(np.isfinite(self.sites)) or not np.all(np.isfinite(self.phi)) or not np.all(np.isfinite(self.y2)):
            raise DataError("dataset contains non-finite values")
        if np.any(self.phi < 0) or np.any(self.phi >= TWO_PI):
            raise DataError("angles must lie in [0, 2 pi)")
        if np.any(self.y2 <= 0):
            bad = [self.site_ids[i] for i in np.flatnonzero(self.y2 <= 0)]
            raise DataError(f"nonpositive linear response at sites {bad}")

    @property
    def n(self) -> int:
        return self.sites.shape[0]

    def subset(self, idx) -> "CylDataset":
        idx = np.asarray(idx)
        return CylDataset(self.sites[idx], self.phi[idx], self.y2[idx], self.Z_beta[idx], self.Z_kappa[idx],
                          self.Z_rho[idx], [self.site_ids[i] for i in idx], dict(self.covariate_names),
                          dict(self.transform), dict(self.standardization))

    def to_original(self, sites=None) -> np.ndarray:
        """Map rescaled coordinates back to the original ones."""
        s = self.sites if sites is None else np.asarray(sites, dtype=float)
        if not self.transform:
            return s.copy()
        return s * self.transform["scale"] + np.asarray(self.transform["offset"])

    def save(self, path) -> Path:
        """Write in the station format (radians, rescaled coordinates, covariates as stored)."""
        path = Path(path)
        names = {g: self.covariate_names.get(g) or [f"{g}_{j + 1}" for j in range(getattr(self, _attr(g)).shape[1])]
                 for g in GROUPS}
        header = ["station_id", "x", "y", "direction", "speed"] + [c for g in GROUPS for c in names[g]]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(self.n):
                row = [self.site_ids[i]] + [_fmt(v) for v in (self.sites[i, 0], self.sites[i, 1], self.phi[i], self.y2[i])]
                for g in GROUPS:
                    row += [_fmt(v) for v in getattr(self, _attr(g))[i]]
                w.writerow(row)
        return path


def _attr(group: str) -> str:
    return {"beta": "Z_beta", "kappa": "Z_kappa", "rho": "Z_rho"}[group]


def _fmt(v) -> str:
    return "%.17g" % v


def rescale_coordinates(xy):
    """Affine map to ``[0, 1]^2`` with a common scale (aspect ratio kept)."""
    xy = np.asarray(xy, dtype=float)
    lo = xy.min(axis=0)
    span = float(np.max(xy.max(axis=0) - lo))
    scale = span if span > 0 else 1.0
    return (xy - lo) / scale, {"offset": lo.tolist(), "scale": scale}


def standardize_columns(Z, names=None):
    Z = np.asarray(Z, dtype=float)
    if Z.shape[1] == 0:
        return Z, {}
    m = Z.mean(axis=0)
    s = Z.std(axis=0)
    if np.any(s == 0):
        bad = [names[j] if names else j for j in np.flatnonzero(s == 0)]
        raise DataError(f"constant covariate column(s) {bad} cannot be standardized")
    out = (Z - m) / s
    # second pass removes the rounding residue of the first
    out = out - out.mean(axis=0)
    s2 = out.std(axis=0)
    out = out / s2
    return out, {"mean": m.tolist(), "sd": (s * s2).tolist()}


def load_station_csv(path, column_map=None, degrees: bool = False, rescale: bool = True,
                     covariates=None, standardize: bool = True) -> CylDataset:
    """Read a station file. ``covariates`` maps ``beta``/``kappa``/``rho`` to column lists;
    when omitted, columns prefixed ``beta_``/``kappa_``/``rho_`` are used."""
    path = Path(path)
    cmap = dict(DEFAULT_COLUMNS, **(column_map or {}))
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    col = {h: j for j, h in enumerate(header)}
    for key in ("x", "y", "direction", "speed"):
        if cmap[key] not in col:
            raise DataError(f"column {cmap[key]!r} ({key}) missing from {path}")
    if covariates is None:
        covariates = {g: [h for h in header if h.startswith(g + "_")] for g in GROUPS}
    covariates = {g: list(covariates.get(g, [])) for g in GROUPS}
    for g, cols in covariates.items():
        for c in cols:
            if c not in col:
                raise DataError(f"covariate column {c!r} missing from {path}")
    numeric = [cmap[k] for k in ("x", "y", "direction", "speed")] + [c for g in GROUPS for c in covariates[g]]
    ids, values, missing, nonpos = [], [], [], []
    for lineno, r in enumerate(body, start=2):
        sid = r[col[cmap["id"]]].strip() if cmap["id"] in col and col[cmap["id"]] < len(r) else str(lineno - 2)
        cells = [r[col[c]].strip() if col[c] < len(r) else "" for c in numeric]
        if any(c.lower() in MISSING for c in cells):
            missing.append(sid)
            continue
        try:
            vals = [float(c) for c in cells]
        except ValueError as exc:
            raise DataError(f"line {lineno} (site {sid}): {exc}") from exc
        if not vals[3] > 0:
            nonpos.append(f"{sid} (line {lineno})")
        ids.append(sid)
        values.append(vals)
    if missing:
        raise DataError(f"rows with missing values at sites {missing}")
    if nonpos:
        raise DataError(f"nonpositive speed at sites {nonpos}")
    if not values:
        raise DataError(f"{path} has no data rows")
    A = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(A)):
        raise DataError("non-finite numeric values")
    xy = A[:, :2]
    transform = {}
    if rescale:
        xy, transform = rescale_coordinates(xy)
    phi = A[:, 2] * (math.pi / 180.0) if degrees else A[:, 2]
    phi = np.mod(phi, TWO_PI)
    phi[phi >= TWO_PI] = 0.0
    j = 4
    Z, stdz = {}, {}
    for g in GROUPS:
        w = len(covariates[g])
        Z[g] = A[:, j:j + w]
        j += w
        if standardize and w:
            Z[g], stdz[g] = standardize_columns(Z[g], covariates[g])
    return CylDataset(xy, phi, A[:, 3], Z["beta"], Z["kappa"], Z["rho"], ids, covariates, transform, stdz)


def idw_to_nodes(sites, values, nodes, power: float = 2.0, k: int = 8) -> np.ndarray:
    """Inverse-distance-weighted interpolation of site covariates to mesh nodes."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[1] == 0:
        return np.zeros((len(nodes), 0))
    k = min(k, len(sites))
    dist, idx = cKDTree(np.asarray(sites)).query(np.asarray(nodes), k=k)
    dist, idx = dist.reshape(len(nodes), k), idx.reshape(len(nodes), k)
    exact = dist[:, 0] < 1e-12
    w = 1.0 / np.maximum(dist, 1e-12) ** power
    out = np.einsum("nk,nkp->np", w, values[idx]) / w.sum(axis=1, keepdims=True)
    out[exact] = values[idx[exact, 0]]
    return out
