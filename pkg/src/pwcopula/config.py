"""INI run configuration.

Sections and keys (all optional; defaults in brackets)::

    [run]       seed [1]
    [data]      path, degrees [no], rescale [yes], standardize [yes],
                id / x / y / direction / speed (column names),
                beta / kappa / rho (comma-separated covariate columns)
    [mesh]      resolution [8], padding [0.05], file, node_covariates [idw]
    [priors]    any PriorConfig field, plus calibrate_lambda [yes] and pc_n_sim [10000]
    [mcmc]      any MCMCConfig field (stage one, and stage two unless overridden)
    [copula_mcmc]  MCMCConfig fields for stage two only
    [model]     copula [gumbel], varying [no], models (tags such as N0, C1, I)
    [score]     folds [10], n_pred [1000] (predictive draws per held-out site)
    [simulate]  families, dependence, n, replications, seed, eta0, eta1,
                mesh_resolution [20], circular_<field> / linear_<field>
                for the MarginTruth fields

Unknown sections or keys are errors, so typos are not silently ignored.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .copulas import FAMILIES
from .mcmc import MCMCConfig
from .pipeline import FitConfig, ModelSpec
from .priors import PriorConfig
from .simulate import DEPENDENCE, MarginTruth, ScenarioConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSpec:
    path: str | None = None
    degrees: bool = False
    rescale: bool = True
    standardize: bool = True
    columns: dict = field(default_factory=dict)
    covariates: dict | None = None


@dataclass(frozen=True)
class ScoreSpec:
    folds: int = 10
    n_pred: int = 1000


@dataclass(frozen=True)
class SimulateSpec:
    scenarios: tuple = ()
    mesh_resolution: int = 20


@dataclass(frozen=True)
class RunConfig:
    seed: int = 1
    data: DataSpec = field(default_factory=DataSpec)
    fit: FitConfig = field(default_factory=FitConfig)
    model: ModelSpec = field(default_factory=ModelSpec)
    models: tuple = ()
    score: ScoreSpec = field(default_factory=ScoreSpec)
    simulate: SimulateSpec = field(default_factory=lambda: SimulateSpec((ScenarioConfig(),)))
    source: str = ""

    def fingerprint(self) -> str:
        """Hash of the effective configuration (independent of comments and key order)."""
        blob = json.dumps(_plain(dataclasses.replace(self, source="")), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=int(seed))


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    return obj


_COLUMN_KEYS = ("id", "x", "y", "direction", "speed")
_SECTIONS = ("run", "data", "mesh", "priors", "mcmc", "copula_mcmc", "model", "score", "simulate")


class _Reader:
    """Typed access to one parsed INI file with line-numbered diagnostics."""

    def __init__(self, text: str, name: str):
        self.name = name
        self.lines = _key_lines(text)
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        try:
            self.cp.read_string(text, source=name)
        except configparser.Error as exc:
            raise ConfigError(f"{name}: {exc}") from exc
        self.used = set()
        for sec in self.cp.sections():
            if sec not in _SECTIONS:
                raise ConfigError(f"{self._where(sec, None)}: unknown section [{sec}]")

    def _where(self, sec, key) -> str:
        line = self.lines.get((sec, key))
        loc = f"{self.name}" + (f", line {line}" if line else "")
        return f"{loc}, [{sec}] {key}" if key else loc

    def has(self, sec, key) -> bool:
        return self.cp.has_option(sec, key)

    def raw(self, sec, key):
        self.used.add((sec, key))
        return self.cp.get(sec, key).strip()

    def get(self, sec, key, conv, default=None):
        if not self.has(sec, key):
            return default
        value = self.raw(sec, key)
        try:
            return conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self._where(sec, key)}: invalid value {value!r} ({exc})") from exc

    def fail(self, sec, key, msg):
        raise ConfigError(f"{self._where(sec, key)}: {msg}")

    def check_unused(self):
        for sec in self.cp.sections():
            for key in self.cp.options(sec):
                if (sec, key) not in self.used:
                    self.fail(sec, key, "unknown key")


def _key_lines(text: str) -> dict:
    out, sec = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            sec = m.group(1).strip()
            out[(sec, None)] = i
            continue
        m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if m and sec:
            out[(sec, m.group(1).strip().lower())] = i
    return out


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise ValueError("expected yes/no")


def _list(v: str) -> list:
    return [s.strip() for s in v.split(",") if s.strip()]


def _floats(v: str) -> tuple:
    return tuple(float(s) for s in _list(v))


def _conv_for(ftype, default):
    t = str(ftype)
    if "bool" in t:
        return _bool
    if "tuple" in t:
        return _floats
    if "int" in t and "float" not in t:
        return int
    if "float" in t:
        return float
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def _dataclass_section(r: _Reader, sec: str, cls, base, skip=()):
    """Override fields of ``base`` (an instance of ``cls``) from section ``sec``."""
    if not r.cp.has_section(sec):
        return base
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in skip or not r.has(sec, f.name):
            continue
        kw[f.name] = r.get(sec, f.name, _conv_for(f.type, getattr(base, f.name)))
    try:
        return dataclasses.replace(base, **kw)
    except (TypeError, ValueError) as exc:
        key = next(iter(kw), None)
        for k in kw:
            if k in str(exc):
                key = k
        r.fail(sec, key, str(exc))


def _model_tag(r, sec, key, tag):
    try:
        return ModelSpec.from_tag(tag)
    except ValueError as exc:
        r.fail(sec, key, str(exc))


def parse_config(text: str, name: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    r = _Reader(text, name)
    seed = r.get("run", "seed", int, 1)

    # data
    columns = {k: r.raw("data", k) for k in _COLUMN_KEYS if r.has("data", k)}
    cov = None
    if any(r.has("data", g) for g in ("beta", "kappa", "rho")):
        cov = {g: r.get("data", g, _list, []) for g in ("beta", "kappa", "rho")}
    path = r.get("data", "path", str)
    if path and base_dir is not None and not Path(path).is_absolute():
        path = str(base_dir / path)
    data = DataSpec(path, r.get("data", "degrees", _bool, False), r.get("data", "rescale", _bool, True),
                    r.get("data", "standardize", _bool, True), columns, cov)

    # priors and samplers
    prior = _dataclass_section(r, "priors", PriorConfig, PriorConfig(), skip=("pc_c",))
    if r.has("priors", "pc_c"):
        prior = dataclasses.replace(prior, pc_c=r.get("priors", "pc_c", float))
    mcmc = _dataclass_section(r, "mcmc", MCMCConfig, MCMCConfig())
    cmcmc = _dataclass_section(r, "copula_mcmc", MCMCConfig, mcmc) if r.cp.has_section("copula_mcmc") else None
    base_fit = FitConfig(prior=prior, mcmc=mcmc, copula_mcmc=cmcmc)
    mesh_file = r.get("mesh", "file", str)
    if mesh_file and base_dir is not None and not Path(mesh_file).is_absolute():
        mesh_file = str(base_dir / mesh_file)
    fit_kw = dict(
        mesh_resolution=r.get("mesh", "resolution", int, base_fit.mesh_resolution),
        mesh_padding=r.get("mesh", "padding", float, base_fit.mesh_padding),
        mesh_file=mesh_file,
        node_covariates=r.get("mesh", "node_covariates", str, base_fit.node_covariates),
        calibrate_lambda=r.get("priors", "calibrate_lambda", _bool, True),
        pc_n_sim=r.get("priors", "pc_n_sim", int, base_fit.pc_n_sim),
    )
    try:
        fit = dataclasses.replace(base_fit, **fit_kw)
    except ValueError as exc:
        r.fail("mesh", "node_covariates", str(exc))
    if fit.mesh_resolution < 1:
        r.fail("mesh", "resolution", "must be a positive integer")

    # models
    fam = r.get("model", "copula", str, "gumbel").lower()
    if fam not in FAMILIES + ("independence",):
        r.fail("model", "copula", f"unknown copula family {fam!r}; expected one of "
                                  f"{', '.join(FAMILIES + ('independence',))}")
    model = ModelSpec(fam, r.get("model", "varying", _bool, False))
    models = tuple(_model_tag(r, "model", "models", t) for t in r.get("model", "models", _list, []))
    score = ScoreSpec(r.get("score", "folds", int, 10), r.get("score", "n_pred", int, 1000))
    if score.folds < 2:
        r.fail("score", "folds", "need at least two folds")
    if score.n_pred < 2:
        r.fail("score", "n_pred", "need at least two predictive draws")

    sim = _simulate_section(r)
    r.check_unused()
    return RunConfig(seed, data, fit, model, models, score, sim, source=name)


def _simulate_section(r: _Reader) -> SimulateSpec:
    sec = "simulate"
    fams = r.get(sec, "families", _list, ["gumbel"])
    for f in fams:
        if f.lower() not in FAMILIES:
            r.fail(sec, "families", f"unknown copula family {f!r}; expected one of {', '.join(FAMILIES)}")
    deps = r.get(sec, "dependence", _list, ["constant"])
    for d in deps:
        if d not in DEPENDENCE:
            r.fail(sec, "dependence", f"unknown dependence {d!r}; expected constant or varying")
    default = ScenarioConfig()
    margins = {}
    for name in ("circular", "linear"):
        base = getattr(default, name)
        kw = {}
        for f in dataclasses.fields(MarginTruth):
            key = f"{name}_{f.name}"
            if r.has(sec, key):
                kw[f.name] = r.get(sec, key, float)
        margins[name] = dataclasses.replace(base, **kw)
    common = {}
    for key, conv in (("n", int), ("replications", int), ("seed", int), ("eta0", float), ("eta1", float)):
        if r.has(sec, key):
            common[key] = r.get(sec, key, conv)
    scenarios = []
    for f in fams:
        for d in deps:
            try:
                scenarios.append(ScenarioConfig(family=f.lower(), dependence=d, **common, **margins))
            except ValueError as exc:
                r.fail(sec, "n" if "positive" in str(exc) else "families", str(exc))
    return SimulateSpec(tuple(scenarios), r.get(sec, "mesh_resolution", int, 20))


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path), path.parent)
