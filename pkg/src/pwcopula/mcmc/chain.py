"""Thinned posterior draws, log-likelihood matrices and their CSV layout."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"
KINDS = ("circular", "linear", "copula")


@dataclass
class ChainOutput:
    """Draws of one stage-1 margin or of the stage-2 copula.

    ``draws`` maps parameter names to arrays whose first axis indexes the kept draws.
    Field weights, winding numbers and the per-site log-likelihood live in separate
    arrays because of their width.
    """

    kind: str
    draws: dict
    loglik: np.ndarray
    gamma: np.ndarray | None = None
    k: np.ndarray | None = None
    acceptance: dict = field(default_factory=dict)
    seed: object = None
    fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        self.loglik = np.asarray(self.loglik, dtype=float)
        T = self.loglik.shape[0]
        for name, arr in self.draws.items():
            if np.shape(arr)[0] != T:
                raise ValueError(f"draw count mismatch for {name}")

    @property
    def n_draws(self) -> int:
        return self.loglik.shape[0]

    @property
    def n_sites(self) -> int:
        return self.loglik.shape[1]

    def __getitem__(self, name):
        return self.draws[name]

    def mean(self, name):
        return np.mean(self.draws[name], axis=0)

    def columns(self):
        cols, names = [], []
        for name, arr in self.draws.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                cols.append(arr[:, None])
                names.append(name)
            else:
                cols.append(arr.reshape(arr.shape[0], -1))
                names += [f"{name}_{j}" for j in range(cols[-1].shape[1])]
        return names, (np.hstack(cols) if cols else np.zeros((self.n_draws, 0)))

    def summary(self, probs=(0.025, 0.975)):
        """Rows of ``(parameter, mean, sd, lower, upper)``."""
        names, A = self.columns()
        q = np.quantile(A, probs, axis=0) if A.size else np.zeros((2, 0))
        sd = np.std(A, axis=0, ddof=1) if self.n_draws > 1 else np.zeros(A.shape[1])
        return [(n, float(np.mean(A[:, j])), float(sd[j]), float(q[0, j]), float(q[1, j]))
                for j, n in enumerate(names)]

    # --- IO -----------------------------------------------------------------

    def save(self, out_dir) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        names, A = self.columns()
        path = out / f"chain_{self.kind}.csv"
        _write_matrix(path, A, names)
        written.append(path)
        path = out / f"loglik_{self.kind}.csv"
        _write_matrix(path, self.loglik, [f"site_{i}" for i in range(self.n_sites)])
        written.append(path)
        if self.gamma is not None:
            path = out / f"gamma_{self.kind}.csv"
            _write_matrix(path, self.gamma, [f"node_{m}" for m in range(self.gamma.shape[1])])
            written.append(path)
        if self.k is not None:
            path = out / f"winding_{self.kind}.csv"
            _write_matrix(path, self.k, [f"site_{i}" for i in range(self.k.shape[1])], fmt="%d")
            written.append(path)
        # a list keeps the column order (the JSON dump sorts dict keys)
        shapes = [[k, list(np.shape(v)[1:])] for k, v in self.draws.items()]
        meta = {"kind": self.kind, "shapes": shapes, "acceptance": self.acceptance,
                "seed": self.seed, "fingerprint": self.fingerprint, "meta": self.meta}
        path = out / f"chain_{self.kind}.json"
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        written.append(path)
        return written

    @classmethod
    def load(cls, out_dir, kind: str) -> "ChainOutput":
        out = Path(out_dir)
        meta = json.loads((out / f"chain_{kind}.json").read_text())
        A = _read_matrix(out / f"chain_{kind}.csv")
        draws, j = {}, 0
        for name, shape in meta["shapes"]:
            width = int(np.prod(shape)) if shape else 1
            block = A[:, j:j + width]
            draws[name] = block[:, 0] if not shape else block.reshape((A.shape[0],) + tuple(shape))
            j += width
        loglik = _read_matrix(out / f"loglik_{kind}.csv")
        gpath, kpath = out / f"gamma_{kind}.csv", out / f"winding_{kind}.csv"
        gamma = _read_matrix(gpath) if gpath.exists() else None
        k = _read_matrix(kpath).astype(int) if kpath.exists() else None
        return cls(kind, draws, loglik, gamma, k, meta["acceptance"], meta["seed"], meta["fingerprint"], meta["meta"])


def _write_matrix(path, A, header, fmt=FLOAT_FMT):
    A = np.asarray(A)
    if A.ndim == 1:
        A = A[:, None]
    np.savetxt(path, A, fmt=fmt, delimiter=",", header=",".join(header), comments="")


def _read_matrix(path):
    A = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return A
