"""Command-line entry point: ``pwcopula {simulate,fit,select,score,predict,plot}``.

Exit codes: 0 success, 2 configuration error, 3 data or input error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, plots
from .config import ConfigError, RunConfig, load_config
from .data import CylDataset, DataError, idw_to_nodes, load_station_csv
from .linalg import NotPositiveDefiniteError
from .mcmc import ChainOutput, SamplerError, circular_median, sample_predictive
from .mcmc.predict import predictive_parameters
from .mesh import MeshError, OutsideHullError, assemble_fem, basis_matrix, build_regular_mesh, load_mesh, save_mesh
from .pipeline import (
    INDEPENDENCE,
    ModelSpec,
    _child_seed,
    aggregate_scores,
    crossval,
    fit_copula_model,
    fit_margins,
)
from .simulate import simulate_scenario

log = logging.getLogger("pwcopula")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
FMT = "%.10g"


# --- helpers ----------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FMT % v
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv_dicts(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def dataset_fingerprint(ds: CylDataset) -> str:
    h = hashlib.sha256()
    for a in (ds.sites, ds.phi, ds.y2, ds.Z_beta, ds.Z_kappa, ds.Z_rho):
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()[:16]


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, seed: int, started: float, written, extra=None):
    """List every file in ``out`` (CSV hashes included) and mark the ones this command wrote."""
    written = {Path(p).resolve() for p in written}
    files = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            rel = p.relative_to(out).as_posix()
            files.append({"path": rel, "sha256": _sha(p), "written": p.resolve() in written})
    files.append({"path": "manifest.json", "sha256": None, "written": True})
    doc = {
        "command": command,
        "config": cfg.source or None,
        "config_fingerprint": cfg.fingerprint(),
        "seed": seed,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "versions": {"pwcopula": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "files": files,
    }
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_dataset(args, cfg: RunConfig) -> CylDataset:
    path = args.data or cfg.data.path
    if not path:
        raise ConfigError("no dataset given (use --data or [data] path)")
    if not Path(path).exists():
        raise DataError(f"dataset file {path} does not exist")
    d = cfg.data
    return load_station_csv(path, d.columns or None, d.degrees, d.rescale, d.covariates, d.standardize)


def _seed(args, cfg: RunConfig) -> int:
    return cfg.seed if args.seed is None else int(args.seed)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- simulate ---------------------------------------------------------------------


def cmd_simulate(args, cfg: RunConfig):
    out = _out(args)
    mesh = build_regular_mesh(cfg.simulate.mesh_resolution, cfg.fit.mesh_padding)
    fem = assemble_fem(mesh)
    written, index = [], []
    for sc in cfg.simulate.scenarios:
        base = sc.seed if args.seed is None else int(args.seed)
        for r in range(sc.replications):
            ds, truth = simulate_scenario(sc, mesh, _child_seed(base, sc.name, r), fem)
            stem = f"{sc.name}_r{r + 1:03d}"
            written.append(ds.save(out / f"dataset_{stem}.csv"))
            tp = out / f"truth_{stem}.json"
            tp.write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")
            written.append(tp)
            index.append((stem, sc.family, sc.dependence, sc.n, r + 1, f"dataset_{stem}.csv"))
    written.append(write_csv(out / "datasets.csv", ["stem", "family", "dependence", "n", "replication", "file"], index))
    return out, written, {}


# --- fit --------------------------------------------------------------------------


def _grid(n=25):
    g = (np.arange(n) + 0.5) / n
    gx, gy = np.meshgrid(g, g)
    return g, np.column_stack([gx.ravel(), gy.ravel()])


def fit_one(ds: CylDataset, cfg: RunConfig, model: ModelSpec, seed: int, mf=None):
    """Both stages for one model. Returns the margin fit, copula fit and criteria."""
    if mf is None:
        mf = fit_margins(ds, cfg.fit, seed)
    cf = fit_copula_model(mf, ds, model, cfg.fit, seed)
    mdic, mwaic = mf.dic(), mf.waic()
    crit = {"DIC": sum(mdic.values()) + cf.dic, "WAIC": sum(mwaic.values()) + cf.waic,
            "DIC_circular": mdic["circular"], "DIC_linear": mdic["linear"], "DIC_copula": cf.dic,
            "WAIC_circular": mwaic["circular"], "WAIC_linear": mwaic["linear"], "WAIC_copula": cf.waic}
    return mf, cf, crit


def write_fit(out: Path, ds: CylDataset, cfg: RunConfig, model: ModelSpec, seed: int, mf, cf, crit):
    written = []
    fp = cfg.fingerprint()
    chains = [("circular", mf.chain_c), ("linear", mf.chain_l)] + ([("copula", cf.chain)] if cf.chain else [])
    rows = []
    for kind, ch in chains:
        ch.seed, ch.fingerprint = seed, fp
        written += ch.save(out)
        rows += [(f"{kind}.{name}", m, s, lo, hi) for name, m, s, lo, hi in ch.summary()]
    written.append(write_csv(out / "summary.csv", ["parameter", "mean", "sd", "q2.5", "q97.5"], rows))
    written.append(write_csv(out / "criteria.csv", ["criterion", "value"], sorted(crit.items())))
    mesh_path = out / "mesh.txt"
    save_mesh(mf.mesh, mesh_path)
    written.append(mesh_path)
    # posterior mean dependence on a grid (site covariates interpolated to the grid)
    g, pts = _grid()
    if cf.chain is not None:
        Zg = idw_to_nodes(ds.sites, ds.Z_rho, pts) if model.varying else None
        params = predictive_parameters(mf.chain_c, mf.chain_l, basis_matrix(mf.mesh, pts, snap=True),
                                       np.zeros((len(pts), ds.Z_beta.shape[1])), np.zeros((len(pts), ds.Z_beta.shape[1])),
                                       cf.chain, model.family, Zg)
        rho = params.rho.mean(axis=0)
        written.append(write_csv(out / "rho_surface.csv", ["x", "y", "rho"],
                                 [(p[0], p[1], v) for p, v in zip(pts, rho)]))
    meta = {"model": model.tag, "family": model.family, "varying": model.varying,
            "dataset_fingerprint": dataset_fingerprint(ds), "n": ds.n, "seed": seed,
            "config_fingerprint": fp, "criteria": crit, "pc_lambda": mf.prior.pc_lambda,
            "transform": ds.transform, "standardization": ds.standardization,
            "covariate_names": ds.covariate_names}
    p = out / "fit.json"
    p.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    written.append(p)
    return written


def cmd_fit(args, cfg: RunConfig):
    out = _out(args)
    ds = _load_dataset(args, cfg)
    seed = _seed(args, cfg)
    try:
        model = ModelSpec.from_tag(args.model) if args.model else cfg.model
    except ValueError as exc:
        raise ConfigError(f"--model: {exc}") from exc
    mf, cf, crit = fit_one(ds, cfg, model, seed)
    written = write_fit(out, ds, cfg, model, seed, mf, cf, crit)
    return out, written, {"model": model.tag, "stage2": "skipped" if model.family == INDEPENDENCE else "fitted"}


# --- select -----------------------------------------------------------------------


def selection_rows(entries):
    """``entries``: (model tag, DIC, WAIC). Sorted by DIC; the first row is flagged when
    more than one model is compared."""
    rows = sorted(entries, key=lambda e: (e[1], e[0]))
    multi = len(rows) > 1
    return [(m, d, w, int(multi and i == 0)) for i, (m, d, w) in enumerate(rows)]


def cmd_select(args, cfg: RunConfig):
    out = _out(args)
    seed = _seed(args, cfg)
    written = []
    if args.fits:
        metas = []
        for d in args.fits:
            p = Path(d) / "fit.json"
            if not p.exists():
                raise DataError(f"{d} is not a fit output directory (no fit.json)")
            metas.append(json.loads(p.read_text()))
        fps = {m["dataset_fingerprint"] for m in metas}
        if len(fps) > 1:
            raise DataError("fits come from different datasets: " + ", ".join(
                f"{d} ({m['dataset_fingerprint']})" for d, m in zip(args.fits, metas)))
        entries = [(m["model"], m["criteria"]["DIC"], m["criteria"]["WAIC"]) for m in metas]
    else:
        ds = _load_dataset(args, cfg)
        models = cfg.models or (ModelSpec("gaussian"), ModelSpec("clayton"), ModelSpec("gumbel"))
        mf = fit_margins(ds, cfg.fit, seed)
        entries = []
        for m in models:
            _, _, crit = fit_one(ds, cfg, m, seed, mf)
            entries.append((m.tag, crit["DIC"], crit["WAIC"]))
    rows = selection_rows(entries)
    written.append(write_csv(out / "selection.csv", ["model", "DIC", "WAIC", "winner"], rows))
    return out, written, {"winner": rows[0][0] if len(rows) > 1 else None}


# --- score ------------------------------------------------------------------------


def cmd_score(args, cfg: RunConfig):
    out = _out(args)
    ds = _load_dataset(args, cfg)
    seed = _seed(args, cfg)
    models = cfg.models or (cfg.model, ModelSpec(INDEPENDENCE))
    threads = args.threads or os.cpu_count() or 1
    fold_scores, labels, flags = crossval(ds, models, cfg.fit, seed, cfg.score.folds, cfg.score.n_pred,
                                          snap=True, threads=threads)
    rows = [(fs.model, fs.fold + 1, k, v) for fs in fold_scores for k, v in fs.scores.items()]
    written = [write_csv(out / "scores.csv", ["model", "fold", "metric", "value"], rows)]
    agg = aggregate_scores(fold_scores)
    written.append(write_csv(out / "scores_summary.csv", ["model", "metric", "value"],
                             [(m, k, v) for m in agg for k, v in agg[m].items()]))
    written.append(write_csv(out / "folds.csv", ["site_id", "fold"],
                             [(sid, int(f) + 1) for sid, f in zip(ds.site_ids, labels)]))
    return out, written, {"snapped": flags, "folds": cfg.score.folds}


# --- predict ----------------------------------------------------------------------


def _read_sites(path, meta, columns):
    if not Path(path).exists():
        raise DataError(f"sites file {path} does not exist")
    rows = read_csv_dicts(path)
    if not rows:
        raise DataError(f"{path} has no rows")
    cx, cy = columns.get("x", "x"), columns.get("y", "y")
    cid = columns.get("id", "station_id")
    try:
        xy = np.array([[float(r[cx]), float(r[cy])] for r in rows])
        Z = {}
        for g in ("beta", "rho"):
            names = meta["covariate_names"].get(g, [])
            A = np.array([[float(r[c]) for c in names] for r in rows]).reshape(len(rows), len(names))
            st = meta["standardization"].get(g)
            if st:
                A = (A - np.asarray(st["mean"])) / np.asarray(st["sd"])
            Z[g] = A
    except KeyError as exc:
        raise DataError(f"column {exc} missing from {path}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    tr = meta["transform"]
    if tr:
        xy = (xy - np.asarray(tr["offset"])) / tr["scale"]
    ids = [r.get(cid, str(i)) for i, r in enumerate(rows)]
    return ids, xy, Z


def cmd_predict(args, cfg: RunConfig):
    out = _out(args)
    fit_dir = Path(args.fit)
    if not (fit_dir / "fit.json").exists():
        raise DataError(f"{fit_dir} is not a fit output directory (no fit.json)")
    meta = json.loads((fit_dir / "fit.json").read_text())
    seed = _seed(args, cfg)
    mesh = load_mesh(fit_dir / "mesh.txt")
    ch_c, ch_l = ChainOutput.load(fit_dir, "circular"), ChainOutput.load(fit_dir, "linear")
    cop = ChainOutput.load(fit_dir, "copula") if (fit_dir / "chain_copula.json").exists() else None
    ids, xy, Z = _read_sites(args.sites, meta, cfg.data.columns)
    psi, snapped = basis_matrix(mesh, xy, snap=args.snap_outside_hull, return_snapped=True)
    params = predictive_parameters(ch_c, ch_l, psi, Z["beta"], Z["beta"], cop,
                                   meta["family"] if cop is not None else None,
                                   Z["rho"] if meta["varying"] else None)
    phi, y2 = sample_predictive(params, np.random.default_rng(_child_seed(seed, "predict")))
    med = circular_median(phi)
    q = np.quantile(y2, [0.025, 0.5, 0.975], axis=0)
    rho = params.rho.mean(axis=0) if params.rho is not None else np.full(len(ids), np.nan)
    rows = [(ids[i], xy[i, 0], xy[i, 1], med[i], q[1, i], q[0, i], q[2, i], rho[i], int(snapped[i]))
            for i in range(len(ids))]
    p = write_csv(out / "predictions.csv", ["station_id", "x", "y", "direction_median", "speed_median",
                                             "speed_q2.5", "speed_q97.5", "rho_mean", "snapped"], rows)
    return out, [p], {"fit": str(fit_dir), "snapped_sites": [ids[i] for i in np.flatnonzero(snapped)]}


# --- plot -------------------------------------------------------------------------


def cmd_plot(args, cfg: RunConfig):
    src = Path(args.inputs)
    if not src.is_dir() or not any(src.iterdir()):
        raise DataError(f"{src} is missing or empty")
    out = _out(args)
    written = []
    pred = src / "predictions.csv"
    if pred.exists():
        r = read_csv_dicts(pred)
        arr = lambda k: np.array([float(x[k]) for x in r])  # noqa: E731
        written.append(plots.quiver_svg(out / "quiver.svg", np.column_stack([arr("x"), arr("y")]),
                                        arr("direction_median"), arr("speed_median"), arr("speed_q2.5"),
                                        arr("speed_q97.5"), title="predicted direction and speed"))
    surf = src / "rho_surface.csv"
    if surf.exists():
        r = read_csv_dicts(surf)
        x = np.array([float(v["x"]) for v in r])
        y = np.array([float(v["y"]) for v in r])
        z = np.array([float(v["rho"]) for v in r])
        gx, gy = np.unique(x), np.unique(y)
        grid = np.full((gy.size, gx.size), np.nan)
        grid[np.searchsorted(gy, y), np.searchsorted(gx, x)] = z
        written.append(plots.heatmap_svg(out / "rho_surface.svg", gx, gy, grid, title="posterior mean rho(s)"))
    pairs = src / "dic_pairs.csv"
    if pairs.exists():
        r = read_csv_dicts(pairs)
        groups = {}
        for v in r:
            groups.setdefault((v["scenario"], v["competitor"]), []).append((float(v["dic_true"]), float(v["dic_competitor"])))
        for (scen, comp), vals in sorted(groups.items()):
            a = np.array(vals)
            written.append(plots.dic_scatter_svg(out / f"dic_{scen}_vs_{comp}.svg", a[:, 0], a[:, 1],
                                                 title=f"{scen}: true vs {comp}"))
    if not written:
        raise DataError(f"no plottable inputs (predictions.csv, rho_surface.csv, dic_pairs.csv) in {src}")
    return out, written, {"inputs": str(src)}


# --- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    common.add_argument("--snap-outside-hull", action="store_true",
                        help="project sites outside the mesh onto its boundary instead of failing")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pwcopula", description="Spatial cylindrical regression with partially "
                                "wrapped conditional copulas.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="generate synthetic datasets")
    f = sub.add_parser("fit", parents=[common], help="two-stage fit of one model")
    f.add_argument("--data", help="station CSV (overrides [data] path)")
    f.add_argument("--model", help="model tag (N0 N1 C0 C1 G0 G1 I); overrides [model]")
    s = sub.add_parser("select", parents=[common], help="DIC/WAIC table over fits")
    s.add_argument("fits", nargs="*", help="fit output directories; without them the [model] models are fitted")
    s.add_argument("--data")
    c = sub.add_parser("score", parents=[common], help="k-fold cross-validated predictive scores")
    c.add_argument("--data")
    r = sub.add_parser("predict", parents=[common], help="predictive summaries at new sites")
    r.add_argument("--fit", required=True, help="fit output directory")
    r.add_argument("--sites", required=True, help="CSV with x, y and the fitted covariate columns")
    g = sub.add_parser("plot", parents=[common], help="SVG figures from an output directory")
    g.add_argument("inputs", help="directory holding predictions.csv / rho_surface.csv / dic_pairs.csv")
    return p


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "select": cmd_select, "score": cmd_score,
            "predict": cmd_predict, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out, written, extra = COMMANDS[args.command](args, cfg)
        write_manifest(out, args.command, cfg, cfg.seed, started, written, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutsideHullError as exc:
        print(f"data error: {exc} (use --snap-outside-hull to project such sites)", file=sys.stderr)
        return EXIT_DATA
    except (DataError, MeshError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NotPositiveDefiniteError, SamplerError, FloatingPointError, OverflowError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
