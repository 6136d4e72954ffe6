"""Experiment harness: config-driven studies that emit versioned CSV tables.

Every study takes a plain dict (parsed from TOML) merged over its defaults and
returns an :class:`ExperimentResult`. Rows are produced in sweep order; worker
pools only change where points are computed, never their order or values.
"""

from __future__ import annotations

import copy
import datetime as _dt
import logging
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import grid as fd
from .coefficients import homogenized_matrix, homogenized_matrix_extrapolated, parse_coefficient, preset
from .errors import ConfigError, FixedPointDivergence, InstabilityDetected, NumericalError
from .integrators import (
    EXPLICIT_METHODS,
    STAGES,
    estimate_stability_limit,
    homogenized_provider,
    integrate,
    linear_dt_limit,
    ray_stability_extent,
    seeded_perturbation,
)
from .macro import HmmConfig, run_hmm
from .micro import MicroSetup, error_decomposition, solve_and_upscale
from .problems import initial_data_for
from .reference import (
    cell_average,
    dump_lattice,
    l2_error,
    run_averaged_baseline,
    run_dns,
    run_homogenized,
    unit_grid,
)

log = logging.getLogger("llhmm")

CSV_VERSION = 1
SETUPS = {  # (eta / eps^2, mu' / eps)
    "s1": (0.15, 4.0),
    "s2": (0.45, 5.5),
    "s3": (0.7, 7.5),
    "s4": (1.0, 10.0),
}
# homogenized matrices of the periodic presets, computed once per process
_AH_CACHE: dict = {}


def reference_AH(name: str) -> np.ndarray:
    """High-accuracy A^H of a periodic preset (eps does not matter)."""
    key = name.upper()
    if key not in _AH_CACHE:
        coef = preset(key, 0.5)
        if coef.dim == 1:
            _AH_CACHE[key] = homogenized_matrix(coef, 2048).matrix
        else:
            _AH_CACHE[key] = homogenized_matrix_extrapolated(coef, 128).matrix
    return _AH_CACHE[key]


# -- results -------------------------------------------------------------------

@dataclass
class ExperimentResult:
    experiment: str
    columns: list  # (name, unit)
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    # columns whose values are wall-clock measurements
    timing_columns: tuple = ()

    def add(self, **row):
        missing = [c for c, _ in self.columns if c not in row]
        if missing:
            raise ValueError(f"row is missing columns {missing}")
        self.rows.append(row)

    def column(self, name):
        return [r[name] for r in self.rows]

    def select(self, **match):
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = "; ".join(f"{k}={v}" for k, v in sorted(self.metadata.items()))
        lines = [
            f"# llhmm-csv v{CSV_VERSION}; experiment={self.experiment}",
            f"# generated={_dt.datetime.now().isoformat(timespec='seconds')}; {meta}",
            ",".join(f"{name} [{unit}]" for name, unit in self.columns),
        ]
        for row in self.rows:
            lines.append(",".join(_fmt(row[name]) for name, _ in self.columns))
        path.write_text("\n".join(lines) + "\n")
        return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if not np.isfinite(v) else f"{float(v):.10e}"
    return str(v)


def read_csv(path):
    """Parse a result CSV back into ``(experiment, header_names, rows)``."""
    lines = Path(path).read_text().splitlines()
    experiment = lines[0].split("experiment=")[1].strip()
    names = [h.split(" [")[0] for h in lines[2].split(",")]
    rows = []
    for line in lines[3:]:
        vals = []
        for v in line.split(","):
            try:
                vals.append(float(v))
            except ValueError:
                vals.append(v)
        rows.append(dict(zip(names, vals)))
    return experiment, names, rows


def metric_bytes(path, exclude=("wall", "seconds")) -> bytes:
    """CSV content without the timestamp line and wall-clock columns."""
    lines = Path(path).read_text().splitlines()
    header = lines[2].split(",")
    keep = [i for i, h in enumerate(header) if not any(e in h for e in exclude)]
    body = [lines[0]] + [",".join(line.split(",")[i] for i in keep) for line in lines[2:]]
    return "\n".join(body).encode()


# -- config helpers ------------------------------------------------------------

def merge(defaults: dict, overrides: dict | None) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in (overrides or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def _nonempty(cfg, *keys):
    for key in keys:
        val = cfg
        for part in key.split("."):
            val = val[part]
        if not isinstance(val, (list, tuple)) or len(val) == 0:
            raise ConfigError(f"sweep list {key!r} must be a non-empty list")


def _pmap(func, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(workers, mp_context=ctx) as pool:
        return list(pool.map(func, items))


def _slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


# -- integrators ---------------------------------------------------------------

INTEGRATOR_DEFAULTS = {
    "problems": ["EX1", "EX2"],
    "n_macro": 50,
    "alpha": 0.01,
    "T": 0.01,
    "order": 2,
    "methods": ["heunp", "rk4p", "mpe", "mpea", "imp"],
    # dt / dX^2
    "dt_factors": [0.8, 0.4, 0.2, 0.1, 0.05, 0.025],
    "reference_dt_factor": 0.002,
}


def _integrator_point(args):
    name, method, factor, cfg = args
    dim = 1 if name.upper() in ("EX1", "LOC1D") else 2
    n = int(cfg["n_macro"])
    grid = fd.Grid.periodic(n, dim)
    AH = reference_AH(name)
    provider = homogenized_provider(AH, grid, cfg["order"])
    m0 = initial_data_for(name).on_grid(grid)
    dt = factor * grid.spacing[0] ** 2
    kwargs = {"solver": "newton"} if method == "imp" and factor > 0.3 else {}
    try:
        _, snaps = integrate(m0, provider, cfg["alpha"], dt, cfg["T"], method, **kwargs)
        m = snaps[-1]
        stable = bool(np.all(np.isfinite(m)) and fd.max_gradient(m, grid) < 10 * fd.max_gradient(m0, grid))
    except (InstabilityDetected, FixedPointDivergence, FloatingPointError):
        m, stable = None, False
    return m, stable


def cmd_integrator_study(config: dict | None = None, workers: int = 1) -> ExperimentResult:
    cfg = merge(INTEGRATOR_DEFAULTS, config)
    _nonempty(cfg, "problems", "methods", "dt_factors")
    res = ExperimentResult("integrators", [
        ("problem", "-"), ("method", "-"), ("dt_factor", "dX^2"), ("dt", "1"),
        ("l2_error", "1"), ("stable", "bool"), ("observed_order", "1"),
    ])
    factors = sorted(cfg["dt_factors"], reverse=True)
    for name in cfg["problems"]:
        dim = 1 if name.upper() in ("EX1", "LOC1D") else 2
        grid = fd.Grid.periodic(int(cfg["n_macro"]), dim)
        ref, _ = _integrator_point((name, "rk4p", cfg["reference_dt_factor"], cfg))
        points = [(name, m, f, cfg) for m in cfg["methods"] for f in factors]
        outs = _pmap(_integrator_point, points, workers)
        for method in cfg["methods"]:
            prev = None
            for (nm, mt, f, _), (m, stable) in zip(points, outs):
                if mt != method:
                    continue
                err = l2_error(m, grid, ref, grid).l2 if stable else float("nan")
                order = float("nan")
                if prev is not None and stable and np.isfinite(prev[1]):
                    order = float(np.log(prev[1] / err) / np.log(prev[0] / f))
                res.add(problem=name, method=method, dt_factor=f, dt=f * grid.spacing[0] ** 2,
                        l2_error=err, stable=stable, observed_order=order)
                prev = (f, err)
    return res


def fitted_orders(result: ExperimentResult, problem: str, max_error: float = 1e-2) -> dict:
    """Least-squares log-log slope of error vs dt over the stable, asymptotic points."""
    out = {}
    for method in dict.fromkeys(result.column("method")):
        rows = [r for r in result.select(problem=problem, method=method)
                if r["stable"] and np.isfinite(r["l2_error"]) and 1e-12 < r["l2_error"] < max_error]
        out[method] = _slope([r["dt"] for r in rows], [r["l2_error"] for r in rows])
    return out


# -- stability -----------------------------------------------------------------

STABILITY_DEFAULTS = {
    "problem": "EX1",
    "alpha": 0.01,
    "n_list": [20, 30, 40, 50],
    "methods": list(EXPLICIT_METHODS),
    "alpha_problem": "EX2",
    "alpha_n": 16,
    "alphas": [0.001, 0.01, 0.1, 0.3, 0.5, 1.0, 2.0],
    "perturbation": 1e-3,
    "probe_steps": 50,
    "iterations": 12,
}


def _stability_problem(name, perturbation):
    AH = reference_AH(name)
    dim = AH.shape[0]
    data = initial_data_for(name)

    def problem(dx):
        grid = unit_grid(dx, dim)
        m0 = data.on_grid(grid)
        if perturbation:
            m0 = seeded_perturbation(m0, perturbation, seed=0)
        return m0, homogenized_provider(AH, grid, 2), grid

    return problem, float(np.abs(AH).max()), dim


def _stability_dx_point(args):
    method, cfg = args
    problem, _, _ = _stability_problem(cfg["problem"], cfg["perturbation"])
    return estimate_stability_limit(method, problem, [1.0 / n for n in cfg["n_list"]], cfg["alpha"],
                                    cfg["iterations"], cfg["probe_steps"])


def _stability_alpha_point(args):
    method, alpha, cfg = args
    problem, _, _ = _stability_problem(cfg["alpha_problem"], cfg["perturbation"])
    r = estimate_stability_limit(method, problem, [1.0 / cfg["alpha_n"]], alpha, cfg["iterations"],
                                 cfg["probe_steps"])
    return float(r.c_stab[0])


def cmd_stability_study(config: dict | None = None, workers: int = 1) -> ExperimentResult:
    cfg = merge(STABILITY_DEFAULTS, config)
    _nonempty(cfg, "n_list", "methods", "alphas")
    res = ExperimentResult("stability", [
        ("table", "-"), ("problem", "-"), ("method", "-"), ("alpha", "1"), ("dx", "1"),
        ("dt_max", "1"), ("c_stab", "1"), ("c_stab_linear", "1"), ("slope", "1"),
        ("stages", "1"), ("cost", "stages/c_stab"),
    ])
    _, scale, dim = _stability_problem(cfg["problem"], 0)
    outs = _pmap(_stability_dx_point, [(m, cfg) for m in cfg["methods"]], workers)
    for method, r in zip(cfg["methods"], outs):
        lin = linear_dt_limit(method, cfg["alpha"], scale, dim, 1.0, 2)
        for dx, dt in zip(r.dx, r.dt_max):
            c = dt / dx**2
            res.add(table="dx", problem=cfg["problem"], method=method, alpha=cfg["alpha"], dx=dx,
                    dt_max=dt, c_stab=c, c_stab_linear=lin, slope=r.slope, stages=STAGES[method],
                    cost=STAGES[method] / c)
    _, scale2, dim2 = _stability_problem(cfg["alpha_problem"], 0)
    points = [(m, a, cfg) for m in cfg["methods"] for a in cfg["alphas"]]
    outs = _pmap(_stability_alpha_point, points, workers)
    dx = 1.0 / cfg["alpha_n"]
    for (method, alpha, _), c in zip(points, outs):
        res.add(table="alpha", problem=cfg["alpha_problem"], method=method, alpha=alpha, dx=dx,
                dt_max=c * dx * dx, c_stab=c,
                c_stab_linear=linear_dt_limit(method, alpha, scale2, dim2, 1.0, 2),
                slope=float("nan"), stages=STAGES[method], cost=STAGES[method] / c)
    return res


# -- micro sweeps --------------------------------------------------------------

MICRO_DEFAULTS = {
    "problem": "EX2",
    "eps": 0.01,
    "parameter": "mu",  # mu, mu_prime, eta, alpha, eps
    "values": [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0],
    "macro_point": [0.0, 0.0],
    "n_macro": 12,
    "base": {"mu": 3.9, "mu_prime": 10.0, "eta": 1.0, "alpha": 1.2, "points_per_eps": 8,
             "interp_order": 4},
    # for mu sweeps: keep mu' = mu + mu_prime_margin when set
    "mu_prime_margin": 6.0,
    # for eta sweeps, repeat the sweep for each of these alphas
    "alphas": [],
}


def _micro_point(args):
    problem, eps, params, macro_point, n_macro = args
    coef = preset(problem, eps)
    setup = MicroSetup.scaled(eps, params["mu"], params["mu_prime"], params["eta"],
                              alpha_micro=params["alpha"], points_per_eps=int(params["points_per_eps"]),
                              interp_order=int(params["interp_order"]))
    split = error_decomposition(macro_point, initial_data_for(problem), 1.0 / n_macro, setup, coef,
                                reference_AH(problem))
    return split


def micro_sweep_points(cfg):
    points = []
    alphas = cfg["alphas"] or [cfg["base"]["alpha"]]
    for alpha in alphas:
        for v in cfg["values"]:
            params = dict(cfg["base"], alpha=alpha)
            eps = cfg["eps"]
            p = cfg["parameter"]
            if p == "eps":
                eps = float(v)
            elif p in params:
                params[p] = float(v)
                if p == "mu" and cfg.get("mu_prime_margin") is not None:
                    params["mu_prime"] = max(params["mu_prime"], float(v) + cfg["mu_prime_margin"])
            else:
                raise ConfigError(f"unknown sweep parameter {p!r}")
            points.append((cfg["problem"], eps, params, list(cfg["macro_point"]), cfg["n_macro"]))
    return points


def cmd_micro_sweep(config: dict | None = None, workers: int = 1) -> ExperimentResult:
    cfg = merge(MICRO_DEFAULTS, config)
    _nonempty(cfg, "values")
    res = ExperimentResult("micro-sweep", [
        ("problem", "-"), ("parameter", "-"), ("eps", "1"), ("mu", "eps"), ("mu_prime", "eps"),
        ("eta", "eps^2"), ("alpha", "1"), ("points_per_eps", "1"), ("e_avg", "1"),
        ("e_disc", "1"), ("e_approx", "1"),
    ])
    points = micro_sweep_points(cfg)
    outs = _pmap(_micro_point, points, workers)
    for (problem, eps, params, _, _), split in zip(points, outs):
        res.add(problem=problem, parameter=cfg["parameter"], eps=eps, mu=params["mu"],
                mu_prime=params["mu_prime"], eta=params["eta"], alpha=params["alpha"],
                points_per_eps=int(params["points_per_eps"]), e_avg=split.e_avg,
                e_disc=split.e_disc, e_approx=split.e_approx)
    return res


# -- HMM convergence -----------------------------------------------------------

HMM_DEFAULTS = {
    "problem": "EX2",
    "eps": 0.01,
    "alpha": 0.01,
    "T": 0.05,
    "n_macro": [8, 12, 16],
    "setups": ["s1", "s2", "s3", "s4"],
    "mu": 3.9,
    "alpha_micro": 1.2,
    "points_per_eps": 8,
    "interp_order": 4,
    "integrator": "mpea",
    # scale of the macro operator in the stability bound: "AH" uses max |A^H_ij|,
    # a number overrides it
    "field_scale": "AH",
    "safety": 0.9,
    "reference_n": 96,
    "reference_order": 4,
    "baseline": True,
}


def cmd_hmm_convergence(config: dict | None = None, workers: int = 1, out=None) -> ExperimentResult:
    """HMM vs homogenized reference over macro spacings and micro setups.

    With ``out`` set, the CSV is rewritten after every completed point so a
    long run leaves usable partial results.
    """
    cfg = merge(HMM_DEFAULTS, config)
    _nonempty(cfg, "n_macro", "setups")
    problem, eps = cfg["problem"], cfg["eps"]
    coef = preset(problem, eps)
    data = initial_data_for(problem)
    AH = reference_AH(problem)
    field_scale = float(np.abs(AH).max()) if cfg["field_scale"] == "AH" else cfg["field_scale"]
    res = ExperimentResult("hmm-convergence", [
        ("problem", "-"), ("n_macro", "1"), ("dX", "1"), ("setup", "-"), ("eta", "eps^2"),
        ("mu_prime", "eps"), ("dt_macro", "1"), ("steps", "1"), ("l2_error", "1"),
        ("linf_error", "1"), ("micro_solves", "1"), ("wall_seconds", "s"),
    ], metadata={"eps": eps, "T": cfg["T"], "alpha": cfg["alpha"]}, timing_columns=("wall_seconds",))
    for n in cfg["n_macro"]:
        grid = fd.Grid.periodic(int(n), coef.dim)
        dX = grid.spacing[0]
        m0 = data.on_grid(grid)
        # reference and HMM share the macro step so only the field differs
        dt = cfg["safety"] * linear_dt_limit(cfg["integrator"], cfg["alpha"], field_scale, coef.dim,
                                             dX, cfg["interp_order"])
        ref = run_homogenized(AH, data, 1.0 / cfg["reference_n"], None, cfg["alpha"], cfg["T"],
                              cfg["reference_order"], cfg["integrator"])
        steps = int(np.ceil(cfg["T"] / dt - 1e-9))
        for name in cfg["setups"]:
            eta, mu_prime = SETUPS[name]
            setup = MicroSetup.scaled(eps, cfg["mu"], mu_prime, eta, alpha_micro=cfg["alpha_micro"],
                                      points_per_eps=cfg["points_per_eps"],
                                      interp_order=cfg["interp_order"])
            hc = HmmConfig(grid, coef, setup, cfg["alpha"], cfg["T"], dt, cfg["integrator"],
                           field_scale=field_scale, safety=cfg["safety"], workers=workers)
            log.info("hmm-convergence: n=%d setup=%s steps=%d", n, name, steps)
            traj = run_hmm(hc, m0)
            err = l2_error(traj.final, grid, ref.final, ref.grid)
            res.add(problem=problem, n_macro=int(n), dX=dX, setup=name, eta=eta, mu_prime=mu_prime,
                    dt_macro=traj.stats["dt_macro"], steps=steps, l2_error=err.l2, linf_error=err.linf,
                    micro_solves=traj.stats["micro_solves"], wall_seconds=traj.stats["wall_seconds"])
            if out is not None:
                res.to_csv(out)
        if cfg["baseline"]:
            base = run_averaged_baseline(coef, eps, data, dX, dt, cfg["alpha"], cfg["T"],
                                         cfg["interp_order"], cfg["integrator"])
            err = l2_error(base.final, grid, ref.final, ref.grid)
            res.add(problem=problem, n_macro=int(n), dX=dX, setup="baseline", eta=0.0, mu_prime=0.0,
                    dt_macro=dt, steps=steps, l2_error=err.l2, linf_error=err.linf, micro_solves=0,
                    wall_seconds=base.stats["wall_seconds"])
            if out is not None:
                res.to_csv(out)
    return res


# -- showcase ------------------------------------------------------------------

SHOWCASE_DEFAULTS = {
    "cases": ["LOC1D"],
    "long_cases": ["QUASI2D", "LOC2D"],
    "dump_dir": None,
    "LOC1D": {"eps": 0.01, "alpha": 0.01, "T": 0.1, "n_macro": 24, "mu": 3.9, "mu_prime": 8.0,
              "eta": 0.9, "points_per_eps": 15, "dns_points_per_eps": 15, "baseline_window": 1.0},
    "QUASI2D": {"eps": 0.02, "alpha": 0.01, "T": 0.2, "n_macro": 16, "mu": 6.5, "mu_prime": 9.0,
                "eta": 0.7, "points_per_eps": 8, "dns_points_per_eps": 15, "baseline_window": 1.0},
    "LOC2D": {"eps": 0.02, "alpha": 0.1, "T": 0.05, "n_macro": 16, "mu": 5.0, "mu_prime": 7.0,
              "eta": 1.1, "points_per_eps": 8, "dns_points_per_eps": 15, "baseline_window": 1.0},
}


def _commensurate_dns_n(n_macro, eps, points_per_eps):
    """Smallest multiple of ``n_macro`` giving at least ``points_per_eps`` nodes per eps."""
    target = points_per_eps / eps
    return int(n_macro * np.ceil(target / n_macro - 1e-9))


def run_showcase_case(name: str, p: dict, workers: int = 1, dump_dir=None):
    coef = preset(name, p["eps"])
    data = initial_data_for(name)
    grid = fd.Grid.periodic(int(p["n_macro"]), coef.dim)
    setup = MicroSetup.scaled(p["eps"], p["mu"], p["mu_prime"], p["eta"],
                              points_per_eps=int(p["points_per_eps"]))
    hc = HmmConfig(grid, coef, setup, p["alpha"], p["T"], workers=workers)
    hmm = run_hmm(hc, data.on_grid(grid))
    n_dns = _commensurate_dns_n(int(p["n_macro"]), p["eps"], p["dns_points_per_eps"])
    dns = run_dns(coef, data, 1.0 / n_dns, None, p["alpha"], p["T"])
    base = run_averaged_baseline(coef, p["baseline_window"] * p["eps"], data, grid.spacing[0],
                                 hc.dt_macro, p["alpha"], p["T"], 2, "mpea")
    if dump_dir is not None:
        d = Path(dump_dir)
        d.mkdir(parents=True, exist_ok=True)
        dump_lattice(d / f"{name.lower()}_hmm.csv", grid, hmm.final)
        dump_lattice(d / f"{name.lower()}_baseline.csv", grid, base.final)
        dump_lattice(d / f"{name.lower()}_dns_restricted.csv", grid,
                     dns.final[tuple(slice(None, None, n_dns // int(p["n_macro"])) for _ in range(coef.dim))])
    return {
        "hmm": l2_error(hmm.final, grid, dns.final, dns.grid),
        "baseline": l2_error(base.final, grid, dns.final, dns.grid),
        "hmm_seconds": hmm.stats["wall_seconds"],
        "dns_seconds": dns.stats["wall_seconds"],
        "n_dns": n_dns,
    }


def cmd_showcase(config: dict | None = None, workers: int = 1, long: bool = False) -> ExperimentResult:
    cfg = merge(SHOWCASE_DEFAULTS, config)
    cases = list(cfg["cases"]) + (list(cfg["long_cases"]) if long else [])
    if not cases:
        raise ConfigError("no showcase cases selected")
    res = ExperimentResult("showcase", [
        ("case", "-"), ("eps", "1"), ("n_macro", "1"), ("n_dns", "1"), ("T", "1"), ("alpha", "1"),
        ("hmm_vs_dns_l2", "1"), ("baseline_vs_dns_l2", "1"), ("hmm_wall_seconds", "s"),
        ("dns_wall_seconds", "s"), ("dns_over_hmm_wall", "1"),
    ], timing_columns=("hmm_wall_seconds", "dns_wall_seconds", "dns_over_hmm_wall"))
    for name in cases:
        if name not in cfg:
            raise ConfigError(f"unknown showcase case {name!r}")
        p = cfg[name]
        out = run_showcase_case(name, p, workers, cfg["dump_dir"])
        res.add(case=name, eps=p["eps"], n_macro=int(p["n_macro"]), n_dns=out["n_dns"], T=p["T"],
                alpha=p["alpha"], hmm_vs_dns_l2=out["hmm"].l2, baseline_vs_dns_l2=out["baseline"].l2,
                hmm_wall_seconds=out["hmm_seconds"], dns_wall_seconds=out["dns_seconds"],
                dns_over_hmm_wall=out["dns_seconds"] / out["hmm_seconds"])
    return res


# -- cost ----------------------------------------------------------------------

COST_DEFAULTS = {
    "problem": "EX2",
    "eps_list": [0.02, 0.01, 0.005],
    "points_per_eps": [8],
    "mu": 3.9,
    "mu_prime": 7.5,
    "eta": 0.7,
    "n_macro": 12,
    "repeats": 3,
}


def _time_micro(problem, eps, K, cfg):
    coef = preset(problem, eps)
    data = initial_data_for(problem)
    setup = MicroSetup.scaled(eps, cfg["mu"], cfg["mu_prime"], cfg["eta"], points_per_eps=int(K))
    dX = 1.0 / cfg["n_macro"]
    k = setup.k
    ax = np.arange(-k, k + 1) * dX
    nodes = np.stack(np.meshgrid(*[ax] * coef.dim, indexing="ij"), axis=-1)
    stencil = data.value(nodes)
    solve_and_upscale(stencil, dX, np.zeros(coef.dim), coef, setup)  # compile / warm caches
    best = np.inf
    for _ in range(int(cfg["repeats"])):
        start = time.perf_counter()
        solve_and_upscale(stencil, dX, np.zeros(coef.dim), coef, setup)
        best = min(best, time.perf_counter() - start)
    dt, n_steps = setup.time_step(coef.bounds[1], coef.dim)
    nodes_micro = (2 * setup.half_nodes + 1) ** coef.dim
    return best, n_steps, nodes_micro


def cmd_cost_model(config: dict | None = None, workers: int = 1) -> ExperimentResult:
    cfg = merge(COST_DEFAULTS, config)
    _nonempty(cfg, "eps_list", "points_per_eps")
    res = ExperimentResult("cost", [
        ("problem", "-"), ("eps", "1"), ("points_per_eps", "1"), ("micro_steps", "1"),
        ("micro_nodes", "1"), ("predicted_work", "node-steps"), ("predicted_relative", "1"),
        ("wall_seconds", "s"), ("wall_relative", "1"), ("wall_over_predicted", "1"),
        ("seconds_per_node_step", "s"),
    ], timing_columns=("wall_seconds", "wall_relative", "wall_over_predicted", "seconds_per_node_step"))
    # work ~ steps * nodes = (eta/dt) * (2 mu' K/eps + 1)^d with dt ~ C_stab eps^2 / K^2;
    # both relative columns are normalized by the first sweep point
    first = None
    for K in cfg["points_per_eps"]:
        for eps in cfg["eps_list"]:
            secs, steps, nodes = _time_micro(cfg["problem"], eps, K, cfg)
            work = steps * nodes
            first = first or (work, secs)
            res.add(problem=cfg["problem"], eps=eps, points_per_eps=int(K), micro_steps=steps,
                    micro_nodes=nodes, predicted_work=work, predicted_relative=work / first[0],
                    wall_seconds=secs, wall_relative=secs / first[1],
                    wall_over_predicted=(secs / first[1]) / (work / first[0]),
                    seconds_per_node_step=secs / work)
    return res


# -- homogenize ----------------------------------------------------------------

def cmd_homogenize(coefficient: str, eps: float = 0.01, resolution: int = 256, dim: int | None = None):
    coef = parse_coefficient(coefficient, eps, dim, periodic=True)
    if coef.dim == 1:
        return homogenized_matrix(coef, max(resolution, 1024))
    return homogenized_matrix(coef, resolution)


COMMANDS = {
    "integrators": cmd_integrator_study,
    "stability": cmd_stability_study,
    "micro-sweep": cmd_micro_sweep,
    "hmm-convergence": cmd_hmm_convergence,
    "showcase": cmd_showcase,
    "cost": cmd_cost_model,
}
