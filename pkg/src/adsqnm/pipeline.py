"""Run configuration, stage orchestration, manifest and export."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import AdsQnmError, ConfigInvalid, MissingStageOutput, NotFound, StageFailure
from .geometry import BlackHoleParams, HorizonData, find_horizon
from .io import CSV_SCHEMA_VERSION, CSV_SCHEMAS, canonical_json, load_schema, read_csv, write_csv

__all__ = [
    "STAGES",
    "DEFAULTS",
    "RunConfig",
    "RunManifest",
    "load_config",
    "validate_config",
    "run",
    "export",
    "plot",
    "resolve_output_dir",
]

log = logging.getLogger("adsqnm")

MANIFEST_SCHEMA_VERSION = 1

STAGES = ("horizon", "assemble", "solve", "scan", "quasimodes", "match", "verify", "flow",
          "indicial", "probe")

DEPENDS = {
    "horizon": (),
    "assemble": ("horizon",),
    "solve": ("assemble",),
    "scan": ("assemble",),
    "quasimodes": ("horizon",),
    "match": ("solve", "quasimodes"),
    "verify": ("horizon",),
    "flow": ("horizon",),
    "indicial": ("horizon",),
    "probe": ("assemble",),
}

NU_ONE_EXCLUSION = 0.02

DEFAULTS = {
    "schema_version": 1,
    "params": {"nu": 1.5, "k": 0},
    "grid": {"n_radial": 32, "n_angular": 12, "delta_factor": 0.05, "fine_factor": 2},
    "bc": {"kind": "dirichlet"},
    "pipeline": ["horizon"],
    "optional_stages": [],
    "solve": {"re": [2.0, 15.0], "im": [-8.0, 1.0], "residual_tol": 1e-8, "stability_tol": 1e-6},
    "scan": {"re": [2.0, 15.0], "im": [-0.9, 1.0], "n_re": 40, "n_im": 12, "h": 1.0,
             "threshold": 1e4},
    "quasimodes": {"ell_min": 3, "ell_max": 9, "n_radial": 40, "n_angular": 24, "r1": None,
                   "transition_width": None},
    "match": {"c_match": 1e3, "gamma": 10.0},
    "verify": {"lambda": [2.0, 1.0], "n_radial": 32, "n_angular": 8, "fields": ["T", "K"]},
    "flow": {"n_seeds": 20, "z_range": [1.0, 2.0], "t_max": 200.0},
    "indicial": {"lambdas": []},
    "probe": {"c0": 2.0},
    "output_dir": "adsqnm_out",
    "seed": 0,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass(frozen=True)
class RunConfig:
    """A validated configuration with defaults filled in."""

    raw: dict
    data: dict
    params: BlackHoleParams
    horizon: HorizonData
    stages: tuple
    config_hash: str

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def section(self, name: str) -> dict:
        return self.data[name]


def _expand_stages(requested) -> tuple:
    need = set()

    def add(s):
        if s in need:
            return
        need.add(s)
        for d in DEPENDS[s]:
            add(d)

    for s in requested:
        add(s)
    return tuple(s for s in STAGES if s in need)


def _physical_checks(data: dict):
    p = data["params"]
    try:
        params = BlackHoleParams(float(p["M"]), float(p["a"]), float(p.get("nu", 1.5)),
                                 int(p.get("k", 0)))
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(f"params: {exc}") from exc
    try:
        hz = find_horizon(params)
    except AdsQnmError as exc:
        raise ConfigInvalid(f"params: {exc}") from exc
    if abs(params.nu - 1.0) < NU_ONE_EXCLUSION:
        raise ConfigInvalid(
            f"params.nu: nu={params.nu} lies within {NU_ONE_EXCLUSION} of 1, where the two "
            "boundary branches coincide and a logarithmic term appears; not supported")
    bc = data["bc"]
    if bc["kind"] == "robin" and not 0.0 < params.nu < 1.0:
        raise ConfigInvalid(f"bc: robin conditions need 0 < nu < 1, got nu={params.nu}")
    q = data["quasimodes"]
    if q["ell_min"] > q["ell_max"]:
        raise ConfigInvalid("quasimodes: ell_min must not exceed ell_max")
    for sec in ("solve", "scan"):
        for key in ("re", "im"):
            lo, hi = data[sec][key]
            if not lo < hi:
                raise ConfigInvalid(f"{sec}.{key}: interval must be increasing, got [{lo}, {hi}]")
    lo, hi = data["flow"]["z_range"]
    if not 0 < lo <= hi:
        raise ConfigInvalid("flow.z_range: need 0 < z_min <= z_max")
    return params, hz


def validate_config(raw: dict) -> RunConfig:
    """Validate against the packaged schema and re-check physical invariants.

    Raises
    ------
    ConfigInvalid
    """
    if not isinstance(raw, dict):
        raise ConfigInvalid("configuration must be a JSON object")
    p = raw.get("params")
    if isinstance(p, dict) and isinstance(p.get("a"), (int, float)) and not abs(p["a"]) < 1:
        raise ConfigInvalid(f"params.a: rotation must satisfy |a| < 1, got a={p['a']}")
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        msgs = [f"{'.'.join(str(x) for x in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigInvalid("; ".join(msgs))
    data = _merge(DEFAULTS, raw)
    params, hz = _physical_checks(data)
    stages = _expand_stages(data["pipeline"])
    digest = hashlib.sha256(canonical_json(data).encode()).hexdigest()
    return RunConfig(raw, data, params, hz, stages, digest)


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a JSON configuration file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"configuration file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"configuration is not valid JSON: {exc}") from exc
    return validate_config(raw)


def resolve_output_dir(cfg: RunConfig, cli_out: str | None = None) -> Path:
    """``--out`` beats ``ADSQNM_OUT``, which beats the config entry."""
    env = os.environ.get("ADSQNM_OUT")
    return Path(cli_out or env or cfg.data["output_dir"])


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    config_hash: str
    out_dir: str
    stages: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    status: str = "running"
    failed_stage: str | None = None
    partial_success: bool = False

    def to_dict(self) -> dict:
        import matplotlib
        import scipy

        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "csv_schema_version": CSV_SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "versions": {
                "adsqnm": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "matplotlib": matplotlib.__version__,
                "python": platform.python_version(),
            },
            "status": self.status,
            "partial_success": self.partial_success,
            "failed_stage": self.failed_stage,
            "stages": self.stages,
            "outputs": self.outputs,
            "summary": _jsonable(self.summary),
        }

    def write(self, path: Path) -> Path:
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# ---------------------------------------------------------------------------
# stages


@dataclass
class _Context:
    cfg: RunConfig
    out: Path
    workers: int
    results: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def params(self) -> BlackHoleParams:
        return self.cfg.params

    @property
    def horizon(self) -> HorizonData:
        return self.cfg.horizon


def _bc(cfg: RunConfig):
    from .stationary import BoundaryCondition

    bc = cfg.section("bc")
    if bc["kind"] == "robin":
        return BoundaryCondition.robin(float(bc["beta"]))
    return BoundaryCondition.dirichlet()


def _stage_horizon(ctx: _Context):
    hz = ctx.horizon
    delta = ctx.cfg.section("grid")["delta_factor"] * hz.r_plus
    ctx.summary.update(r_plus=hz.r_plus, surface_gravity=hz.surface_gravity,
                       killing_coeff=hz.killing_coeff, hawking_reall=hz.hawking_reall,
                       delta=delta)
    return []


def _stage_assemble(ctx: _Context):
    from .stationary import assemble, build_grid

    g = ctx.cfg.section("grid")
    delta = g["delta_factor"] * ctx.horizon.r_plus
    bc = _bc(ctx.cfg)
    coarse = build_grid(ctx.params, g["n_radial"], g["n_angular"], delta=delta, horizon=ctx.horizon)
    ff = g["fine_factor"]
    fine = build_grid(ctx.params, ff * g["n_radial"], ff * g["n_angular"], delta=delta,
                      horizon=ctx.horizon)
    ctx.results["op"] = assemble(ctx.params, coarse, bc)
    ctx.results["op_fine"] = assemble(ctx.params, fine, bc)
    ctx.summary["operator_size"] = [ctx.results["op"].n, ctx.results["op_fine"].n]
    return []


def _stage_solve(ctx: _Context):
    from .spectra import SearchRegion, solve_qnf

    s = ctx.cfg.section("solve")
    region = SearchRegion(s["re"][0], s["re"][1], s["im"][0], s["im"][1])
    spec = solve_qnf(ctx.results["op"], region, ctx.results["op_fine"],
                     residual_tol=s["residual_tol"], stability_tol=s["stability_tol"])
    ctx.results["spectrum"] = spec
    entries = sorted(spec.entries, key=lambda e: (e.lam.real, e.lam.imag))
    rows = [(e.ell_hint, ctx.params.k, e.lam.real, e.lam.imag, e.residual, bool(e.converged))
            for e in entries]
    path = write_csv(ctx.out / "qnf.csv", "qnf", rows)
    ctx.summary["n_qnf"] = len(rows)
    ctx.summary["n_qnf_converged"] = sum(1 for r in rows if r[-1])
    return [path]


def _stage_scan(ctx: _Context):
    from .spectra import scan_rectangle

    s = ctx.cfg.section("scan")
    kappa = ctx.horizon.surface_gravity
    lo = max(s["im"][0], -0.45 * kappa / s["h"])
    if lo != s["im"][0]:
        log.info("scan: lower edge raised to %.4g to stay inside Im z > -kappa/2", lo)
    scan = scan_rectangle(ctx.results["op"], tuple(s["re"]), (lo, s["im"][1]), s["n_re"],
                          s["n_im"], h=s["h"], kappa=kappa, threshold=s["threshold"],
                          workers=ctx.workers)
    ctx.results["scan"] = scan
    rows = [(float(x), float(y), float(v))
            for y, row in zip(scan.im_z, scan.values) for x, v in zip(scan.re_z, row)]
    path = write_csv(ctx.out / "scan.csv", "scan", rows)
    ctx.summary["scan_candidates"] = [complex(c) for c in scan.candidates]
    return [path]


def _stage_quasimodes(ctx: _Context):
    from .quasimodes import residual_sequence

    q = ctx.cfg.section("quasimodes")
    table = residual_sequence(ctx.params, range(q["ell_min"], q["ell_max"] + 1), _bc(ctx.cfg),
                              n_radial=q["n_radial"], n_angular=q["n_angular"], r1=q["r1"],
                              transition_width=q["transition_width"])
    ctx.results["quasimodes"] = table
    rows = [(int(qm.ell), qm.lambda_sharp, qm.residual, qm.r1, qm.transition_width)
            for qm in table.quasimodes]
    path = write_csv(ctx.out / "quasimodes.csv", "quasimodes", rows)
    ctx.summary.update(quasimode_slope=table.slope, quasimode_slope_stderr=table.slope_stderr,
                       quasimode_lam_slope=table.lam_slope)
    return [path]


def _stage_match(ctx: _Context):
    from .spectra import match_pole

    m = ctx.cfg.section("match")
    spec = ctx.results["spectrum"]
    rows, unmatched = [], []
    for qm in ctx.results["quasimodes"].quasimodes:
        try:
            pm = match_pole(spec, qm.lambda_sharp, qm.residual, c_match=m["c_match"],
                            gamma=m["gamma"])
        except NotFound as exc:
            unmatched.append({"ell": int(qm.ell), "nearest": exc.nearest, "distance": exc.distance})
            continue
        rows.append((int(qm.ell), qm.lambda_sharp, qm.residual, pm.found.real, pm.found.imag,
                     pm.distance))
    path = write_csv(ctx.out / "match.csv", "match", rows)
    ctx.summary["unmatched_quasimodes"] = unmatched
    return [path]


def _manufactured(s, x):
    s = np.asarray(s, dtype=float)[:, None]
    x = np.asarray(x, dtype=float)[None, :]
    with np.errstate(divide="ignore", over="ignore"):
        prof = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return prof * np.ones_like(x)


def _stage_verify(ctx: _Context):
    from .energy import verify_identity

    v = ctx.cfg.section("verify")
    lam = complex(*v["lambda"])
    rows = []
    for Y in v["fields"]:
        rep = verify_identity(ctx.params, _manufactured, lam, _bc(ctx.cfg), Y=Y,
                              n_radial=v["n_radial"], n_angular=v["n_angular"])
        (nc, rc), (nf, rf) = rep.refinement
        rows.append(("manufactured", Y, lam.real, lam.imag, nc, rc, nf, rf,
                     rep.time_derivative_term, rep.boundary_Y_term, rep.horizon_term,
                     rep.bulk_term, rep.horizon_integrand_min))
    path = write_csv(ctx.out / "energy.csv", "energy", rows)
    return [path]


def _flow_one(args):
    from .symbol_flow import check_dichotomy

    params, seed, delta, t_max, hz = args
    return check_dichotomy(params, seed, delta, t_forward=t_max, t_backward=t_max, horizon=hz)


def _stage_flow(ctx: _Context):
    from .geometry import default_delta
    from .symbol_flow import characteristic_seeds

    f = ctx.cfg.section("flow")
    rng = np.random.default_rng(ctx.cfg.seed)
    hz = ctx.horizon
    delta = default_delta(hz)
    seeds = characteristic_seeds(ctx.params, f["n_seeds"], rng, z_range=tuple(f["z_range"]),
                                 delta=delta, horizon=hz)
    jobs = [(ctx.params, s, delta, f["t_max"], hz) for s in seeds]
    if ctx.workers > 1:
        with ProcessPoolExecutor(max_workers=ctx.workers) as ex:
            results = list(ex.map(_flow_one, jobs))
    else:
        results = [_flow_one(j) for j in jobs]
    tdir = ctx.out / "trajectories"
    tdir.mkdir(exist_ok=True)
    paths, summary = [], []
    for i, (s, res) in enumerate(zip(seeds, results)):
        paths.append(write_csv(tdir / f"traj_{i:03d}.csv", "trajectory", res.forward.rows()))
        drift = max(res.forward.drift, res.backward.drift if res.backward else 0.0)
        summary.append((i, s.r, s.theta, s.z, res.outcome, res.forward.exit_reason.value, drift))
    paths.insert(0, write_csv(ctx.out / "flow_summary.csv", "flow_summary", summary))
    outcomes = [row[4] for row in summary]
    ctx.summary["flow_outcomes"] = {o: outcomes.count(o) for o in sorted(set(outcomes))}
    ctx.summary["flow_max_drift"] = max(row[6] for row in summary)
    if "failure" in outcomes:
        raise StageFailure(f"escape dichotomy failed for {outcomes.count('failure')} seed(s)")
    return paths


def _stage_indicial(ctx: _Context):
    from .energy import indicial_roots

    lams = [complex(*z) for z in ctx.cfg.section("indicial")["lambdas"]]
    if not lams and "spectrum" in ctx.results:
        lams = list(ctx.results["spectrum"].values(converged_only=True))
    if not lams:
        lams = [complex(*ctx.cfg.section("verify")["lambda"])]
    rows = []
    for lam in lams:
        ind = indicial_roots(ctx.params, lam, horizon=ctx.horizon)
        s, r2 = ind["s_value"], ind["roots"][1]
        rows.append((ctx.params.k, lam.real, lam.imag, s.real, s.imag, r2.real, r2.imag))
    return [write_csv(ctx.out / "indicial.csv", "indicial", rows)]


def _stage_probe(ctx: _Context):
    from .energy import upper_bound_probe

    p = ctx.cfg.section("probe")
    samples = np.array([complex(*z) for z in p["samples"]]) if p.get("samples") else None
    res = upper_bound_probe(ctx.results["op"], samples, c0=p["c0"], workers=ctx.workers)
    rows = [(z.real, z.imag, v) for z, v in zip(res["lam"], res["product"])]
    ctx.summary["probe_spread"] = res["spread"]
    return [write_csv(ctx.out / "probe.csv", "probe", rows)]


_STAGE_FUNCS = {
    "horizon": _stage_horizon,
    "assemble": _stage_assemble,
    "solve": _stage_solve,
    "scan": _stage_scan,
    "quasimodes": _stage_quasimodes,
    "match": _stage_match,
    "verify": _stage_verify,
    "flow": _stage_flow,
    "indicial": _stage_indicial,
    "probe": _stage_probe,
}

_FIGURES = {
    "solve": "spectrum",
    "match": "spectrum",
    "scan": "scan_heatmap",
    "quasimodes": "residual_trend",
    "flow": "flow_portrait",
}


def run(cfg: RunConfig, out_dir: str | Path | None = None, *, workers: int = 1,
        figures: bool = True) -> RunManifest:
    """Execute the configured stages in dependency order.

    A failing stage listed in ``optional_stages`` is recorded and its
    dependents are skipped; any other failure stops the run and raises
    :class:`StageFailure` after the manifest is written.
    """
    out = Path(out_dir) if out_dir is not None else resolve_output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(cfg, out, max(1, int(workers)))
    man = RunManifest(cfg.config_hash, str(out))
    (out / "config.json").write_text(json.dumps(cfg.data, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    optional = set(cfg.data["optional_stages"])
    failed: set = set()
    for stage in cfg.stages:
        if any(d in failed for d in DEPENDS[stage]):
            man.stages[stage] = {"status": "skipped", "seconds": 0.0, "outputs": []}
            failed.add(stage)
            continue
        log.info("stage %s", stage)
        t0 = time.perf_counter()
        try:
            paths = _STAGE_FUNCS[stage](ctx)
            if figures and stage in _FIGURES:
                fig = _render(out, _FIGURES[stage], ctx.summary)
                if fig is not None:
                    paths = list(paths) + [fig]
        except Exception as exc:  # noqa: BLE001 - every stage error is recorded
            dt = time.perf_counter() - t0
            man.stages[stage] = {"status": "failed", "seconds": dt, "outputs": [],
                                 "error": f"{type(exc).__name__}: {exc}"}
            log.error("stage %s failed: %s", stage, exc)
            failed.add(stage)
            if stage in optional:
                man.partial_success = True
                continue
            man.status = "failed"
            man.failed_stage = stage
            man.summary = ctx.summary
            man.write(out / "manifest.json")
            raise StageFailure(f"stage {stage!r} failed: {exc}") from exc
        dt = time.perf_counter() - t0
        rel = [str(Path(p).relative_to(out)) for p in paths]
        man.stages[stage] = {"status": "ok", "seconds": dt, "outputs": rel}
        for r in rel:
            if r not in man.outputs:
                man.outputs.append(r)
    man.status = "partial" if man.partial_success else "success"
    man.summary = ctx.summary
    for rel in man.outputs:
        p = out / rel
        if not p.is_file() or p.stat().st_size == 0:
            raise StageFailure(f"declared output {rel} is missing or empty")
    man.write(out / "manifest.json")
    return man


# ---------------------------------------------------------------------------
# export and plots


def _load_manifest(path: str | Path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.is_file():
        raise MissingStageOutput(f"manifest not found: {path}")
    return json.loads(path.read_text(encoding="utf-8")), path.parent


def _table_name(rel: str) -> str | None:
    stem = Path(rel).stem
    if rel.startswith("trajectories/"):
        return "trajectory"
    return stem if stem in CSV_SCHEMAS else None


def export(manifest_path: str | Path, fmt: str = "csv", out: str | Path | None = None) -> list:
    """Export the tables of a run.

    ``csv`` checks that every listed table exists with the documented
    header and returns the paths; ``json`` writes ``results.json`` holding
    every table and validates it against the packaged results schema.

    Raises
    ------
    MissingStageOutput
    """
    man, base = _load_manifest(manifest_path)
    csvs = [r for r in man["outputs"] if r.endswith(".csv")]
    for rel in csvs:
        p = base / rel
        if not p.is_file():
            raise MissingStageOutput(f"listed output {rel} is missing")
        name = _table_name(rel)
        header = p.read_text(encoding="utf-8").split("\n", 1)[0]
        if name and header != ",".join(CSV_SCHEMAS[name]):
            raise MissingStageOutput(f"{rel} has header {header!r}, expected schema {name!r}")
    if not csvs:
        raise MissingStageOutput("the run produced no tables")
    if fmt == "csv":
        return [base / r for r in csvs]
    if fmt != "json":
        raise ValueError(f"unknown export format {fmt!r}")
    tables = {}
    for rel in csvs:
        recs = read_csv(base / rel)
        cols = list(CSV_SCHEMAS[_table_name(rel)])
        tables[rel] = {"columns": cols,
                       "rows": [[_jsonable(rec[c]) for c in cols] for rec in recs]}
    doc = {"schema_version": 1, "config_hash": man["config_hash"], "summary": man["summary"],
           "tables": tables}
    jsonschema.validate(doc, load_schema("results"))
    target = Path(out) if out else base / "results.json"
    target.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return [target]


def _render(base: Path, kind: str, summary: dict, target: Path | None = None) -> Path | None:
    from . import plotting

    def need(name):
        p = base / name
        if not p.is_file():
            raise MissingStageOutput(f"plot {kind!r} needs {name}")
        return read_csv(p)

    target = target or base / f"{kind}.svg"
    if kind == "spectrum":
        qnf = need("qnf.csv")
        match = read_csv(base / "match.csv") if (base / "match.csv").is_file() else None
        return plotting.plot_spectrum(qnf, target, match)
    if kind == "residual_trend":
        return plotting.plot_residual_trend(need("quasimodes.csv"), target)
    if kind == "scan_heatmap":
        return plotting.plot_scan_heatmap(need("scan.csv"), target)
    if kind == "flow_portrait":
        need("flow_summary.csv")
        trajs = [read_csv(p) for p in sorted((base / "trajectories").glob("traj_*.csv"))]
        return plotting.plot_flow_portrait(trajs, target, summary.get("r_plus"))
    raise ValueError(f"unknown plot kind {kind!r}")


def plot(manifest_path: str | Path, kind: str, out: str | Path | None = None) -> Path:
    """Render one figure kind from the tables referenced by a manifest."""
    man, base = _load_manifest(manifest_path)
    return _render(base, kind, man.get("summary", {}), Path(out) if out else None)
