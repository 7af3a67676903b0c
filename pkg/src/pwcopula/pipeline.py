"""End-to-end two-stage fits, model comparison and cross-validated scoring."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import scoring
from .copulas import FAMILIES
from .data import CylDataset, idw_to_nodes
from .mcmc import (
    ChainOutput,
    MarginData,
    MCMCConfig,
    copula_loglik_at_mean,
    fit_copula,
    fit_margin,
    loglik_at_mean,
    pseudo_observations,
)
from .mcmc.predict import (
    circular_median,
    predictive_log_density,
    predictive_parameters,
    sample_predictive,
)
from .mesh import Mesh, assemble_fem, basis_matrix, build_regular_mesh, load_mesh
from .priors import PriorConfig, calibrate_pc_lambda
from .simulate import covariate_surfaces

INDEPENDENCE = "independence"


@dataclass(frozen=True)
class ModelSpec:
    """Copula family (or independence) and whether ``eta_rho`` uses the ``rho`` covariates."""

    family: str = "gumbel"
    varying: bool = False

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in FAMILIES + (INDEPENDENCE,):
            raise ValueError(f"unknown copula family {self.family!r}")
        object.__setattr__(self, "family", fam)

    @property
    def tag(self) -> str:
        if self.family == INDEPENDENCE:
            return "I"
        return {"gaussian": "N", "clayton": "C", "gumbel": "G"}[self.family] + ("1" if self.varying else "0")

    @property
    def independent(self) -> bool:
        return self.family == INDEPENDENCE

    @classmethod
    def from_tag(cls, tag: str) -> "ModelSpec":
        tag = tag.strip().upper()
        if tag == "I":
            return cls(INDEPENDENCE)
        fam = {"N": "gaussian", "C": "clayton", "G": "gumbel"}.get(tag[:1])
        if fam is None or tag[1:] not in ("0", "1"):
            raise ValueError(f"bad model tag {tag!r}; expected I or one of N0 N1 C0 C1 G0 G1")
        return cls(fam, tag[1:] == "1")


@dataclass(frozen=True)
class FitConfig:
    mesh_resolution: int = 8
    mesh_padding: float = 0.05
    mesh_file: str | None = None
    node_covariates: str = "idw"
    prior: PriorConfig = field(default_factory=PriorConfig)
    mcmc: MCMCConfig = field(default_factory=MCMCConfig)
    copula_mcmc: MCMCConfig | None = None
    calibrate_lambda: bool = True
    pc_n_sim: int = 10_000
    nonstationary: bool = True

    def __post_init__(self):
        if self.node_covariates not in ("idw", "synthetic"):
            raise ValueError("node_covariates must be 'idw' or 'synthetic'")

    @property
    def stage2(self) -> MCMCConfig:
        return self.copula_mcmc or self.mcmc


def _child_seed(seed, *keys) -> np.random.SeedSequence:
    words = [int(seed)] + [zlib.crc32(str(k).encode()) for k in keys]
    return np.random.SeedSequence(words)


@dataclass
class MarginFit:
    mesh: Mesh
    data_c: MarginData
    data_l: MarginData
    chain_c: ChainOutput
    chain_l: ChainOutput
    prior: PriorConfig
    u1: np.ndarray
    u2: np.ndarray
    z_kappa_nodes: np.ndarray

    def dic(self) -> dict:
        return {name: scoring.dic(ch.loglik, loglik_at_mean(ch, d))
                for name, ch, d in (("circular", self.chain_c, self.data_c), ("linear", self.chain_l, self.data_l))}

    def waic(self) -> dict:
        return {"circular": scoring.waic(self.chain_c.loglik), "linear": scoring.waic(self.chain_l.loglik)}


@dataclass
class CopulaFit:
    model: ModelSpec
    chain: ChainOutput | None
    dic: float
    waic: float


def node_covariates(ds: CylDataset, mesh: Mesh, mode: str = "idw") -> np.ndarray:
    if mode == "synthetic":
        return covariate_surfaces(mesh.nodes)[1][:, None]
    return idw_to_nodes(ds.sites, ds.Z_kappa, mesh.nodes)


def build_mesh(cfg: FitConfig) -> Mesh:
    if cfg.mesh_file:
        return load_mesh(cfg.mesh_file)
    return build_regular_mesh(cfg.mesh_resolution, cfg.mesh_padding)


def fit_margins(ds: CylDataset, cfg: FitConfig, seed: int, mesh: Mesh | None = None, fem=None) -> MarginFit:
    """Stage one for both margins plus the pseudo-observations for stage two."""
    if ds.n == 0:
        raise ValueError("empty dataset")
    mesh = build_mesh(cfg) if mesh is None else mesh
    fem = assemble_fem(mesh) if fem is None else fem
    psi = basis_matrix(mesh, ds.sites)
    zk = node_covariates(ds, mesh, cfg.node_covariates) if cfg.nonstationary else np.zeros((mesh.M, 0))
    prior = cfg.prior
    if cfg.calibrate_lambda and zk.shape[1]:
        cal = calibrate_pc_lambda(zk, prior.pc_c, prior.pc_alpha, cfg.pc_n_sim, _child_seed(seed, "pc"))
        prior = prior.with_lambda(cal.lam)
    dc = MarginData("circular", ds.phi, ds.Z_beta, psi, zk)
    dl = MarginData("linear", ds.y2, ds.Z_beta, psi, zk)
    chain_c = fit_margin(dc, prior, cfg.mcmc, np.random.default_rng(_child_seed(seed, "circular")), fem)
    chain_l = fit_margin(dl, prior, cfg.mcmc, np.random.default_rng(_child_seed(seed, "linear")), fem)
    u1, u2 = pseudo_observations(chain_c, chain_l, dc, dl, cfg.mcmc.k_summary)
    return MarginFit(mesh, dc, dl, chain_c, chain_l, prior, u1, u2, zk)


def fit_copula_model(mf: MarginFit, ds: CylDataset, model: ModelSpec, cfg: FitConfig, seed: int) -> CopulaFit:
    if model.independent:
        return CopulaFit(model, None, 0.0, 0.0)
    Z = ds.Z_rho if model.varying else None
    if model.varying and ds.Z_rho.shape[1] == 0:
        raise ValueError(f"model {model.tag} needs rho covariates but the dataset has none")
    chain = fit_copula(mf.u1, mf.u2, Z, model.family, mf.prior, cfg.stage2,
                       np.random.default_rng(_child_seed(seed, "copula", model.tag)))
    lhat = copula_loglik_at_mean(chain, mf.u1, mf.u2, Z, model.family)
    return CopulaFit(model, chain, scoring.dic(chain.loglik, lhat), scoring.waic(chain.loglik))


def select_models(mf: MarginFit, ds: CylDataset, models, cfg: FitConfig, seed: int):
    """Fit each copula model on shared margins; rows sorted by total DIC."""
    mdic, mwaic = mf.dic(), mf.waic()
    base_dic, base_waic = sum(mdic.values()), sum(mwaic.values())
    fits = [fit_copula_model(mf, ds, m, cfg, seed) for m in models]
    rows = [{"model": f.model.tag, "family": f.model.family, "DIC": base_dic + f.dic, "WAIC": base_waic + f.waic,
             "DIC_copula": f.dic, "WAIC_copula": f.waic} for f in fits]
    rows.sort(key=lambda r: (r["DIC"], r["model"]))
    return rows, fits


# --- prediction and cross-validation ---------------------------------------------


def predictive_at(mf: MarginFit, fit: CopulaFit, sites, Z_beta, Z_rho, n_draws=None, snap=False):
    psi_new, snapped = basis_matrix(mf.mesh, sites, snap=snap, return_snapped=True)
    Zr = Z_rho if (fit.model.varying and not fit.model.independent) else None
    params = predictive_parameters(mf.chain_c, mf.chain_l, psi_new, Z_beta, Z_beta, fit.chain,
                                   None if fit.model.independent else fit.model.family, Zr, n_draws)
    return params, snapped


@dataclass
class FoldScores:
    model: str
    fold: int
    scores: dict


def score_heldout(params, phi, y2, rng, reps: int = 1) -> dict:
    """All scores for one held-out set; each posterior draw yields ``reps`` predictive draws."""
    lpd = predictive_log_density(params, phi, y2)
    pphi, py2 = sample_predictive(params, rng, reps=reps)
    med_phi = circular_median(pphi)
    return {
        "nLS": scoring.score_nls(lpd),
        "ES": scoring.score_es(pphi, py2, phi, y2),
        "CRPS_cyl": scoring.score_crps_cyl(pphi, py2, phi, y2),
        "RMSE": scoring.rmse(np.median(py2, axis=0), y2),
        "AS": scoring.mean_angular_error(med_phi, phi),
    }


def _score_fold(args):
    ds, labels, f, models, cfg, seed, n_pred, snap = args
    test, train = np.flatnonzero(labels == f), np.flatnonzero(labels != f)
    tr, te = ds.subset(train), ds.subset(test)
    fold_seed = int(_child_seed(seed, "fold", f).generate_state(1)[0])
    mesh = build_mesh(cfg)
    mf = fit_margins(tr, cfg, fold_seed, mesh, assemble_fem(mesh))
    out, flags = [], []
    for m in models:
        fit = fit_copula_model(mf, tr, m, cfg, fold_seed)
        D = min(n_pred, mf.chain_c.n_draws)
        params, snapped = predictive_at(mf, fit, te.sites, te.Z_beta, te.Z_rho, D, snap)
        if np.any(snapped):
            flags.append({"fold": f, "model": m.tag, "sites": [te.site_ids[i] for i in np.flatnonzero(snapped)]})
        rng = np.random.default_rng(_child_seed(fold_seed, "predict"))
        out.append(FoldScores(m.tag, f, score_heldout(params, te.phi, te.y2, rng, -(-n_pred // D))))
    return out, flags


def crossval(ds: CylDataset, models, cfg: FitConfig, seed: int, folds: int = 10, n_pred: int = 1000,
             snap: bool = True, threads: int = 1):
    """K-fold scores. Margins are refitted per fold and shared by all copula models.
    About ``n_pred`` predictive draws per held-out site are used (posterior draws are
    recycled when the chain is shorter). Results do not depend on ``threads``."""
    labels = scoring.fold_assignment(ds.n, folds, _child_seed(seed, "folds"))
    jobs = [(ds, labels, f, list(models), cfg, seed, n_pred, snap) for f in range(folds)]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_score_fold, jobs))
    else:
        results = [_score_fold(j) for j in jobs]
    out = [fs for r in results for fs in r[0]]
    flags = [fl for r in results for fl in r[1]]
    return out, labels, flags


def aggregate_scores(fold_scores) -> dict:
    """Mean of each metric over folds, per model."""
    agg = {}
    for fs in fold_scores:
        agg.setdefault(fs.model, []).append(fs.scores)
    return {m: {k: float(np.mean([r[k] for r in rows])) for k in rows[0]} for m, rows in agg.items()}


def with_lengths(cfg: FitConfig, n_iter, burn_in, thin) -> FitConfig:
    return replace(cfg, mcmc=cfg.mcmc.with_lengths(n_iter, burn_in, thin),
                   copula_mcmc=None if cfg.copula_mcmc is None else cfg.copula_mcmc.with_lengths(n_iter, burn_in, thin))


__all__ = [
    "CopulaFit",
    "FitConfig",
    "FoldScores",
    "INDEPENDENCE",
    "MarginFit",
    "ModelSpec",
    "aggregate_scores",
    "build_mesh",
    "crossval",
    "fit_copula_model",
    "fit_margins",
    "node_covariates",
    "predictive_at",
    "score_heldout",
    "select_models",
    "with_lengths",
]
