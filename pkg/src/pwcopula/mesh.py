"""Triangular meshes, P1 finite elements and SPDE/Matern GMRF precision matrices.

Only the smoothness ``nu = 1`` (``alpha = 2``) case is supported, which is the
one with a closed-form precision in terms of the mass and stiffness matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

DEGENERATE_AREA = 1e-12
MAX_ABS_LOG_KAPPA = 50.0


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    pass


class DegenerateTriangleError(MeshError):
    pass


class OutsideHullError(MeshError):
    def __init__(self, index, site):
        self.index = int(index)
        self.site = tuple(np.asarray(site, dtype=float))
        super().__init__(f"site {self.index} at {self.site} lies outside the mesh")


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError("nodes must be an (M, 2) array")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError("triangles must be a (T, 3) array")
        if not np.all(np.isfinite(nodes)):
            raise MeshError("node coordinates must be finite")
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            raise MeshError("triangle references a node index out of range")
        area = _signed_areas(nodes, tris)
        bad = np.flatnonzero(np.abs(area) < DEGENERATE_AREA)
        if bad.size:
            raise DegenerateTriangleError(f"triangle {bad[0]} is degenerate (area {area[bad[0]]:.3g})")
        # counter-clockwise orientation for every element
        flip = area < 0
        if flip.any():
            tris = tris.copy()
            tris[flip, 1], tris[flip, 2] = tris[flip, 2].copy(), tris[flip, 1].copy()
        nodes.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)

    @property
    def M(self) -> int:
        return len(self.nodes)

    @property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.nodes, self.triangles)

    def boundary_edges(self) -> np.ndarray:
        edges = np.sort(
            np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]),
            axis=1,
        )
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        return uniq[counts == 1]


def _signed_areas(nodes, tris):
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def build_regular_mesh(resolution: int, padding: float = 0.0) -> Mesh:
    """Structured grid on ``[-padding, 1 + padding]^2`` with each cell split in two."""
    if int(resolution) != resolution or resolution < 2:
        raise ValueError("resolution must be an integer >= 2")
    if padding < 0:
        raise ValueError("padding must be nonnegative")
    r = int(resolution)
    ticks = np.linspace(-padding, 1.0 + padding, r + 1)
    xx, yy = np.meshgrid(ticks, ticks, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])
    idx = np.arange((r + 1) ** 2).reshape(r + 1, r + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, :-1].ravel()
    d = idx[1:, 1:].ravel()
    tris = np.concatenate([np.column_stack([a, b, d]), np.column_stack([a, d, c])])
    return Mesh(nodes, tris)


def load_mesh(path) -> Mesh:
    """Read the whitespace-delimited interchange format (header ``M T``, nodes, 0-based triangles)."""
    tokens = Path(path).read_text().split()
    try:
        n_nodes, n_tris = int(tokens[0]), int(tokens[1])
        body = tokens[2:]
        if len(body) != 2 * n_nodes + 3 * n_tris:
            raise MeshParseError(
                f"expected {2 * n_nodes + 3 * n_tris} values after the header, found {len(body)}"
            )
        nodes = np.array([float(t) for t in body[: 2 * n_nodes]]).reshape(n_nodes, 2)
        tris = np.array([int(t) for t in body[2 * n_nodes:]], dtype=np.int64).reshape(n_tris, 3)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshParseError):
            raise
        raise MeshParseError(f"cannot parse mesh file {path}: {exc}") from exc
    return Mesh(nodes, tris)


def save_mesh(mesh: Mesh, path) -> None:
    lines = [f"{mesh.M} {len(mesh.triangles)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def _barycentric(mesh: Mesh, pts: np.ndarray):
    """Barycentric coordinates of every point in every triangle, shape (n, T, 3)."""
    p0 = mesh.nodes[mesh.triangles[:, 0]]
    e1 = mesh.nodes[mesh.triangles[:, 1]] - p0
    e2 = mesh.nodes[mesh.triangles[:, 2]] - p0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    d = pts[:, None, :] - p0[None, :, :]
    l1 = (d[..., 0] * e2[:, 1] - d[..., 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * d[..., 1] - e1[:, 1] * d[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _snap_to_hull(mesh: Mesh, site: np.ndarray) -> np.ndarray:
    edges = mesh.boundary_edges()
    a = mesh.nodes[edges[:, 0]]
    b = mesh.nodes[edges[:, 1]]
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", site - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return proj[np.argmin(np.sum((proj - site) ** 2, axis=1))]


def locate(mesh: Mesh, sites, snap: bool = False, tol: float = 1e-10, chunk: int = 256):
    """Containing triangle and barycentric weights of each site.

    Returns ``(tri_index, weights, snapped)`` where ``snapped`` flags sites that
    were outside the hull and moved to the nearest boundary point.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    n = len(sites)
    tri_idx = np.empty(n, dtype=np.int64)
    weights = np.empty((n, 3))
    snapped = np.zeros(n, dtype=bool)
    for start in range(0, n, chunk):
        block = sites[start:start + chunk]
        lam = _barycentric(mesh, block)
        score = lam.min(axis=-1)
        best = np.argmax(score, axis=1)
        for j, t in enumerate(best):
            i = start + j
            if score[j, t] < -tol:
                if not snap:
                    raise OutsideHullError(i, sites[i])
                point = _snap_to_hull(mesh, sites[i])
                lam_i = _barycentric(mesh, point[None, :])[0]
                t = int(np.argmax(lam_i.min(axis=-1)))
                w = lam_i[t]
                snapped[i] = True
            else:
                w = lam[j, t]
            w = np.clip(w, 0.0, 1.0)
            tri_idx[i] = t
            weights[i] = w / w.sum()
    return tri_idx, weights, snapped


def basis_matrix(mesh: Mesh, sites, snap: bool = False, return_snapped: bool = False):
    """Sparse (n, M) matrix of piecewise-linear basis functions evaluated at ``sites``."""
    tri_idx, weights, snapped = locate(mesh, sites, snap=snap)
    n = len(tri_idx)
    rows = np.repeat(np.arange(n), 3)
    cols = mesh.triangles[tri_idx].ravel()
    psi = sp.csr_matrix((weights.ravel(), (rows, cols)), shape=(n, mesh.M))
    psi.sum_duplicates()
    psi.eliminate_zeros()
    if return_snapped:
        return psi, snapped
    return psi


@dataclass(frozen=True)
class FemMatrices:
    C: sp.csr_matrix
    G: sp.csr_matrix
    C_lumped: sp.dia_matrix = field(default=None)

    def __post_init__(self):
        if self.C_lumped is None:
            object.__setattr__(self, "C_lumped", sp.diags(np.asarray(self.C.sum(axis=1)).ravel()))

    @property
    def c_diag(self) -> np.ndarray:
        return self.C_lumped.diagonal()

    @property
    def M(self) -> int:
        return self.C.shape[0]


_REF_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def assemble_fem(mesh: Mesh) -> FemMatrices:
    """Standard P1 mass and stiffness matrices."""
    tris = mesh.triangles
    area = mesh.areas
    if np.any(area < DEGENERATE_AREA):
        raise DegenerateTriangleError("mesh contains degenerate triangles")
    p = mesh.nodes[tris]  # (T, 3, 2)
    # gradient of barycentric function i is rot(edge opposite i) / (2 area)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    k_loc = area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    m_loc = area[:, None, None] * _REF_MASS[None, :, :]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    shape = (mesh.M, mesh.M)
    C = sp.csr_matrix((m_loc.ravel(), (rows, cols)), shape=shape)
    G = sp.csr_matrix((k_loc.ravel(), (rows, cols)), shape=shape)
    C.sum_duplicates()
    G.sum_duplicates()
    return FemMatrices(C=C, G=G)


def _sym(Q):
    Q = sp.csr_matrix(Q)
    asym = abs(Q - Q.T).max() if Q.nnz else 0.0
    scale = max(abs(Q).max(), 1.0) if Q.nnz else 1.0
    if asym > 1e-10 * scale:
        raise ArithmeticError(f"precision assembly asymmetric by {asym:.3g}")
    return ((Q + Q.T) * 0.5).tocsr()


def precision_stationary(fem: FemMatrices, tau: float, kappa: float) -> sp.csr_matrix:
    """``tau^2 (kappa^4 C + 2 kappa^2 G + G C^-1 G)`` with the lumped mass matrix."""
    if not (tau > 0 and kappa > 0):
        raise ValueError("tau and kappa must be positive")
    c = fem.c_diag
    Ci = sp.diags(1.0 / c)
    Q = kappa**4 * sp.diags(c) + 2.0 * kappa**2 * fem.G + fem.G @ Ci @ fem.G
    return _sym(tau**2 * Q)


def precision_nonstationary(fem: FemMatrices, tau_field, kappa_field) -> sp.csr_matrix:
    """Spatially varying version with ``diag(kappa)`` and ``diag(tau)`` fields at the nodes."""
    tau_field = np.asarray(tau_field, dtype=float)
    kappa_field = np.asarray(kappa_field, dtype=float)
    if tau_field.shape != (fem.M,) or kappa_field.shape != (fem.M,):
        raise ValueError("fields must have one value per mesh node")
    if np.any(~(tau_field > 0)) or np.any(~(kappa_field > 0)):
        raise ValueError("tau and kappa fields must be strictly positive")
    c = fem.c_diag
    K2 = sp.diags(kappa_field**2)
    T = sp.diags(tau_field)
    Q = sp.diags(kappa_field**4 * c) + K2 @ fem.G + fem.G.T @ K2 + fem.G @ sp.diags(1.0 / c) @ fem.G
    return _sym(T @ Q @ T)


def kappa_tau_fields(theta, z_kappa_nodes):
    """Log-linear node fields: ``log tau = theta[0]``, ``log kappa = theta[1] + Z theta[2:]``."""
    theta = np.asarray(theta, dtype=float)
    Z = np.asarray(z_kappa_nodes, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    p = Z.shape[1]
    if theta.shape != (2 + p,):
        raise ValueError(f"theta must have length {2 + p}")
    log_kappa = theta[1] + (Z @ theta[2:] if p else 0.0)
    log_kappa = np.broadcast_to(log_kappa, (Z.shape[0],)).astype(float)
    if np.any(np.abs(log_kappa) > MAX_ABS_LOG_KAPPA) or abs(theta[0]) > MAX_ABS_LOG_KAPPA:
        raise OverflowError("log kappa or log tau outside the representable range")
    return np.full(Z.shape[0], math.exp(theta[0])), np.exp(log_kappa)


def nominal_range(kappa, nu: float = 1.0):
    return math.sqrt(8.0 * nu) / np.asarray(kappa)


def nominal_variance(kappa, tau):
    # nu = 1, alpha = 2: Gamma(1) / Gamma(2) = 1
    return 1.0 / (4.0 * math.pi * np.asarray(kappa) ** 2 * np.asarray(tau) ** 2)


def theta_from_range_variance(range_, variance):
    """Invert the nominal approximations to ``(log tau, log kappa)``."""
    kappa = math.sqrt(8.0) / range_
    tau = 1.0 / math.sqrt(4.0 * math.pi * kappa**2 * variance)
    return math.log(tau), math.log(kappa)


class PrecisionAssembler:
    """Fast repeated assembly of the nonstationary precision on a fixed sparsity pattern.

    With constant ``tau`` the precision is
    ``tau^2 (diag(kappa^4 c) + K^2 G + G K^2 + G C^-1 G)``; only the values change with
    ``theta`` so the pattern (and any symbolic factorization) can be reused.
    """

    def __init__(self, fem: FemMatrices, z_kappa_nodes=None):
        self.fem = fem
        M = fem.M
        Z = np.zeros((M, 0)) if z_kappa_nodes is None else np.asarray(z_kappa_nodes, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[0] != M:
            raise ValueError("z_kappa_nodes must have one row per mesh node")
        self.z_kappa_nodes = Z
        c = fem.c_diag
        G = sp.csr_matrix(fem.G)
        H = sp.csr_matrix(G @ sp.diags(1.0 / c) @ G)
        pattern = (abs(G) + abs(H) + sp.identity(M, format="csr")).tocsr()
        pattern.sort_indices()
        self._indptr = pattern.indptr.copy()
        self._indices = pattern.indices.copy()
        rows = np.repeat(np.arange(M), np.diff(pattern.indptr))
        self._rows, self._cols = rows, pattern.indices
        self._g = _values_on(pattern, G)
        self._h = _values_on(pattern, H)
        self._diag_pos = np.flatnonzero(rows == pattern.indices)
        self._c = c

    @property
    def n_theta(self) -> int:
        return 2 + self.z_kappa_nodes.shape[1]

    def __call__(self, theta) -> sp.csc_matrix:
        tau, kappa = kappa_tau_fields(theta, self.z_kappa_nodes)
        k2 = kappa**2
        data = self._g * (k2[self._rows] + k2[self._cols]) + self._h
        data[self._diag_pos] += k2**2 * self._c
        data *= tau[0] ** 2
        # symmetric pattern, so CSR arrays read as CSC give the same matrix
        return sp.csc_matrix((data, self._indices, self._indptr), shape=(len(k2), len(k2)))


def _values_on(pattern: sp.csr_matrix, A: sp.csr_matrix) -> np.ndarray:
    A = sp.csr_matrix(A)
    A.sort_indices()
    out = np.zeros(pattern.nnz)
    coo = A.tocoo()
    key_p = np.repeat(np.arange(pattern.shape[0]), np.diff(pattern.indptr)).astype(np.int64) * pattern.shape[1] + pattern.indices
    key_a = coo.row.astype(np.int64) * A.shape[1] + coo.col
    pos = np.searchsorted(key_p, key_a)
    out[pos] = coo.data
    return out
