"""Scenario runners behind the command line interface.

Every runner takes a resolved configuration and an output directory, writes
its artifacts there and returns a dict of residuals/summaries.  The manifest
(config echo, version, timing, residuals, file hashes) is written last and
atomically.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .config import resolve
from .diagnostics import (
    MaterialLoop,
    SyntheticScalar,
    audit_report,
    corruption_study,
    fit_order,
    kelvin_series,
    lie_chain_rule_residual,
    mollified_levels,
    particle_solver,
    pde_solver,
    write_audit,
    wong_zakai_report,
)
from .errors import ConfigError
from .expressions import compile_vector_field, grid_values, path_function, perp_gradient_values
from .fluids import Burgers1D, make_model, solve_pde
from .gaussian_lift import GaussianSpec, lift_gaussian, sample_path
from .rde_flow import VectorFieldFamily, flow_composition_residual, solve_flow
from .rough_core import (
    TimeGrid,
    chen_residual,
    coarsen,
    geometricity_residual,
    holder_estimate,
    lift_piecewise_linear,
    lift_smooth,
    true_roughness_score,
    write_csv,
)

DEFAULT_TOLERANCES = {"enstrophy": 1e-6, "casimir4": 1e-6, "circulation": 1e-3, "mean_omega": 1e-12}


# ---------------------------------------------------------------------------
# builders


def build_grid(cfg):
    g = cfg.get("grid", {})
    t0 = float(g.get("t0", 0.0))
    steps = int(g.get("steps", 64))
    if steps < 1:
        raise ConfigError("grid.steps must be >= 1")
    horizon = float(g.get("T", 1.0))
    if horizon <= 0:
        raise ConfigError("grid.T must be positive")
    return TimeGrid.uniform(t0, t0 + horizon, steps)


def gaussian_spec(cfg):
    d = cfg.get("driver", {})
    try:
        return GaussianSpec(
            kind=d.get("kind", "fbm"),
            hurst=float(d.get("H", 0.5)),
            dim=int(d.get("K", 1)),
            seed=int(d.get("seed", cfg.get("seed", 0))),
            fine_resolution=int(d.get("fine_resolution", 64)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_driver(cfg, grid=None):
    """Rough path described by the ``[driver]`` block on ``grid``."""
    grid = grid or build_grid(cfg)
    d = cfg.get("driver", {})
    kind = d.get("kind", "fbm")
    if kind in ("fbm", "brownian"):
        spec = gaussian_spec(cfg)
        return lift_gaussian(spec, grid, alpha=float(d.get("alpha", 0.4)))
    if kind == "smooth":
        if "path" not in d:
            raise ConfigError("smooth driver needs driver.path expressions")
        fn, der = path_function(d["path"])
        return lift_smooth(fn, grid, derivative=der, alpha=float(d.get("alpha", 1.0)))
    if kind == "samples":
        samples = np.asarray(d.get("samples", []), dtype=float)
        if samples.ndim != 2 or samples.shape[0] < 2:
            raise ConfigError("driver.samples must be a list of at least two points")
        return lift_piecewise_linear(samples, TimeGrid.uniform(grid.times[0], grid.times[-1], samples.shape[0] - 1))
    raise ConfigError(f"unknown driver kind {kind!r}")


def build_fields(cfg):
    f = cfg.get("fields", {})
    dim = int(f.get("dim", 0))
    if dim < 1:
        raise ConfigError("fields.dim must be a positive integer")
    xi = []
    jac = []
    for comps in f.get("xi", []):
        fn, jn = compile_vector_field(comps, dim)
        xi.append(fn)
        jac.append(jn)
    drift = None
    if "drift" in f:
        drift, _ = compile_vector_field(f["drift"], dim, with_time=True)
    periods = f.get("periods")
    return VectorFieldFamily(dim, drift, xi, jac, periods)


def build_fluid(cfg):
    scenario = cfg.get("base_scenario", cfg["scenario"])
    if scenario == "audit":
        scenario = "euler2d"
    m = cfg.get("model", {})
    n = int(cfg.get("grid", {}).get("n", 128))
    try:
        if scenario in ("burgers", "camassa_holm"):
            from .spectral import Spectral1D

            x = Spectral1D(n).x
            xi = np.array([grid_values(e, [x]) for e in m.get("xi", [])]).reshape(-1, n)
            model = make_model(scenario, n, xi, float(m.get("alpha_ch", 0.0)))
            return model, grid_values(m.get("initial", "0"), [x])
        if scenario == "euler2d":
            from .spectral import mesh

            xx, yy = mesh(n)
            if "xi_stream" in m and "xi" in m:
                raise ConfigError("give either model.xi or model.xi_stream, not both")
            if "xi_stream" in m:
                xi = np.array([perp_gradient_values(e, [xx, yy]) for e in m["xi_stream"]])
            else:
                xi = np.array([[grid_values(c, [xx, yy]) for c in comps] for comps in m.get("xi", [])])
            xi = xi.reshape(-1, 2, n, n)
            w0 = grid_values(m.get("initial", "0"), [xx, yy])
            return make_model("euler2d", n, xi), w0 - np.mean(w0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"scenario {scenario!r} has no fluid model")


# ---------------------------------------------------------------------------
# manifest


def sha256(filename):
    h = hashlib.sha256()
    with open(filename, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def inventory(out_dir, names):
    return [
        {"path": name, "sha256": sha256(os.path.join(out_dir, name)), "bytes": os.path.getsize(os.path.join(out_dir, name))}
        for name in sorted(names)
    ]


def write_atomic_json(data, filename):
    directory = os.path.dirname(os.path.abspath(filename))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, filename)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# scenarios


class Outputs:
    """Tracks emitted files so the manifest lists every artifact."""

    def __init__(self, out_dir):
        self.dir = out_dir
        self.names = []

    def path(self, name):
        self.names.append(name)
        return os.path.join(self.dir, name)


def path_residuals(path):
    hz, hzz = holder_estimate(path)
    return {
        "chen_residual": chen_residual(path),
        "geometricity_residual": geometricity_residual(path),
        "holder_Z": hz,
        "holder_zz": hzz,
        "alpha": path.alpha,
    }


def run_lift(cfg, out, levels=None):
    path = build_driver(cfg)
    write_csv(path, out.path("level1.csv"), out.path("level2.csv"))
    res = {"driver": path_residuals(path)}
    if path.alpha <= 0.5:
        score = true_roughness_score(path, path.alpha)
        res["driver"]["true_roughness_max"] = float(np.max(score))
    if levels:
        res["refinement"] = refinement_study(cfg, levels, out)
    return res


def run_rde(cfg, out, levels=None):
    path = build_driver(cfg)
    fields = build_fields(cfg)
    f = cfg.get("fields", {})
    particles = np.asarray(f.get("particles", [[0.0] * fields.dim]), dtype=float)
    scheme = f.get("scheme", "davie")
    flow = solve_flow(fields, path, particles, scheme=scheme, ode_substeps=int(f.get("ode_substeps", 4)))
    flow.to_csv(out.path("trajectories.csv"))
    n = path.n_intervals
    res = {
        "driver": path_residuals(path),
        "final_positions": flow.final,
        "flow_composition_residual": flow_composition_residual(flow, 0, n // 2, n, particles),
    }
    if "tau" in f:
        tau = SyntheticScalar.from_expression(f["tau"], fields.dim, path.dim)
        res["lie_chain_rule_residual"] = lie_chain_rule_residual(flow, tau)
    if levels:
        res["refinement"] = refinement_study(cfg, levels, out)
    return res


def _pde_outputs(run, cfg, out):
    every = int(cfg.get("output", {}).get("snapshot_every", max(1, run.times.size // 8)))
    run.snapshot_csv(out.path("snapshots.csv"), every=every)
    if cfg.get("output", {}).get("binary", True):
        data, header = run.write_binary(os.path.join(out.dir, "state"))
        out.names.extend([os.path.basename(data), os.path.basename(header)])
    run.invariants_csv(out.path("invariants.csv"))


def run_pde(cfg, out, levels=None, force_kelvin=False):
    path = build_driver(cfg)
    model, initial = build_fluid(cfg)
    m = cfg.get("model", {})
    audit = cfg.get("audit", {})
    kelvin = force_kelvin or bool(audit.get("kelvin", False))
    run = solve_pde(
        model,
        initial,
        path,
        scheme=m.get("scheme", "exponential"),
        keep_stages=kelvin,
        cfl_safety=float(m.get("cfl_safety", 0.5)),
        rough_safety=float(m.get("rough_safety", 0.5)),
    )
    _pde_outputs(run, cfg, out)
    channels = dict(run.invariants)
    res = {"driver": path_residuals(path)}
    if kelvin:
        if model.dim != 2:
            raise ConfigError("Kelvin audit needs the 2D Euler model")
        loop = MaterialLoop.circle(
            audit.get("loop_center", [0.0, 0.0]), float(audit.get("loop_radius", 0.8)), int(audit.get("loop_points", 256))
        )
        flow, circ = kelvin_series(loop, run, audit.get("loop_scheme", "davie"))
        channels["circulation"] = circ
        flow.to_csv(out.path("loop.csv"), wrap=False)
        with open(out.path("circulation.csv"), "w") as fh:
            fh.write("t,circulation\n")
            for t, c in zip(run.times, circ):
                fh.write(f"{t:.17g},{c:.17g}\n")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(audit.get("tolerances", {}))
    report = audit_report(channels, tol if model.dim == 2 else audit.get("tolerances", {}))
    write_audit(report, out.path("audit.json"))
    res["audit"] = report
    if m.get("compare_burgers") and model.name == "camassa_holm":
        ref = solve_pde(Burgers1D(model.n, model.xi), initial, path, scheme=m.get("scheme", "exponential"))
        res["burgers_equivalence_max_diff"] = float(np.max(np.abs(ref.states - run.states)))
    if levels:
        res["refinement"] = refinement_study(cfg, levels, out)
    return res, run


# ---------------------------------------------------------------------------
# studies


def refinement_study(cfg, levels, out=None):
    """Errors against the finest level for ``steps * 2**l``, with fitted order.

    All levels see one realization: the driver is built on the finest grid and
    coarsened.  The quantity compared is the final state (positions for
    ``rde``, the nodal field for PDEs, the full second level for ``lift``).
    """
    if levels < 3:
        raise ConfigError("refinement study needs at least 3 levels")
    scenario = cfg.get("base_scenario", cfg["scenario"])
    base = build_grid(cfg)
    n0 = base.n_intervals
    finest = TimeGrid.uniform(base.times[0], base.times[-1], n0 * 2 ** levels)
    fine_path = build_driver(cfg, finest)
    grids = [TimeGrid.uniform(base.times[0], base.times[-1], n0 * 2**l) for l in range(levels)]

    if scenario == "lift":
        def quantity(p):
            return p.span(0, p.n_intervals)
        paths = [_driver_on(cfg, g, fine_path) for g in grids] + [fine_path]
    else:
        paths = [coarsen(fine_path, g) for g in grids] + [fine_path]
        if scenario == "rde":
            fields = build_fields(cfg)
            f = cfg.get("fields", {})
            particles = np.asarray(f.get("particles", [[0.0] * fields.dim]), dtype=float)

            def quantity(p):
                return solve_flow(fields, p, particles, scheme=f.get("scheme", "davie")).final
        else:
            model, initial = build_fluid(cfg)
            scheme = cfg.get("model", {}).get("scheme", "exponential")

            def quantity(p):
                return solve_pde(model, initial, p, scheme=scheme, monitor=False).final

    values = [quantity(p) for p in paths]
    errors = [float(np.max(np.abs(v - values[-1]))) for v in values[:-1]]
    steps = [g.n_intervals for g in grids]
    order, r2 = fit_order(steps, errors) if min(errors) > 0 else (float("inf"), 1.0)
    if out is not None:
        with open(out.path("refinement.csv"), "w") as fh:
            fh.write("steps,error\n")
            for s, e in zip(steps, errors):
                fh.write(f"{s},{e:.17g}\n")
    return {"steps": steps, "errors": errors, "reference_steps": finest.n_intervals, "order": order, "r2": r2}


def _driver_on(cfg, grid, fine_path):
    """For lifts the level-l object is the lift computed on that grid itself."""
    kind = cfg.get("driver", {}).get("kind", "fbm")
    if kind in ("fbm", "brownian"):
        # a piecewise-linear lift through the realization's grid points
        idx = fine_path.grid.locate(grid.times)
        return lift_piecewise_linear(fine_path.values[idx], grid, alpha=fine_path.alpha)
    return build_driver(cfg, grid)


def run_wong_zakai(cfg, out, levels=None):
    w = cfg.get("wong_zakai", {})
    target = w.get("target", cfg.get("base_scenario", "rde"))
    levels = int(levels or w.get("levels", 4))
    if levels < 3:
        raise ConfigError("Wong-Zakai report needs at least 3 levels")
    base = int(w.get("base", 2))
    ratio = int(w.get("ratio", 4))
    coarse = build_grid(cfg)
    spec = gaussian_spec(cfg)
    fine_res = base * ratio**levels
    spec = replace(spec, fine_resolution=fine_res)
    fine, values = sample_path(spec, coarse)
    paths = mollified_levels(values, fine, coarse, base, levels, ratio=ratio)
    reference = lift_piecewise_linear(values, fine)
    if target == "rde":
        fields = build_fields(cfg)
        particles = np.asarray(cfg.get("fields", {}).get("particles", [[0.0] * fields.dim]), dtype=float)
        solve = particle_solver(fields, particles, cfg.get("fields", {}).get("scheme", "magnus"))
        corrupt_solve = particle_solver(fields, particles, "davie")
    elif target in ("burgers", "camassa_holm"):
        sub = dict(cfg, base_scenario=target)
        model, initial = build_fluid(sub)
        solve = pde_solver(model, initial, cfg.get("model", {}).get("scheme", "exponential"))
        corrupt_solve = pde_solver(model, initial, "davie")
    else:
        raise ConfigError(f"unsupported Wong-Zakai target {target!r}")
    report, _ = wong_zakai_report(solve, paths, coarse.times, [base * ratio**l for l in range(levels)])
    if w.get("corruption", True):
        steps = w.get("corruption_steps", [coarse.n_intervals * base * ratio**l for l in range(min(levels, 3))])
        ref_steps = int(w.get("reference_steps", fine.n_intervals))
        ref_grid = TimeGrid.uniform(coarse.times[0], coarse.times[-1], ref_steps)
        ref_path = coarsen(reference, ref_grid)
        ref_sol = corrupt_solve(ref_path)
        report.corrupted = corruption_study(
            corrupt_solve, ref_path, ref_sol, [TimeGrid.uniform(coarse.times[0], coarse.times[-1], int(s)) for s in steps]
        )
    with open(out.path("wong_zakai.json"), "w") as fh:
        json.dump(_jsonable(report.as_dict()), fh, indent=2, sort_keys=True)
    with open(out.path("wong_zakai.csv"), "w") as fh:
        fh.write("pieces_fine,pieces_coarse,distance\n")
        for a, b, d in zip(report.pieces[1:], report.pieces[:-1], report.distances):
            fh.write(f"{a},{b},{d:.17g}\n")
    return {"wong_zakai": report.as_dict()}


def run_audit(cfg, out, levels=None):
    res, _ = run_pde(dict(cfg, base_scenario=cfg.get("base_scenario", "euler2d")), out, levels, force_kelvin=True)
    passes = [e["pass"] for e in res["audit"].values() if e["pass"] is not None]
    res["all_pass"] = bool(all(passes))
    return res


def run(cfg, out_dir, scenario=None, seed=None, levels=None, figures=False):
    """Run one scenario; returns the manifest dict (also written to disk)."""
    cfg = resolve(cfg, scenario, seed)
    os.makedirs(out_dir, exist_ok=True)
    out = Outputs(out_dir)
    started = time.perf_counter()
    scen = cfg["scenario"]
    runner = {
        "lift": run_lift,
        "rde": run_rde,
        "wong_zakai": run_wong_zakai,
        "audit": run_audit,
    }.get(scen)
    if runner is None:
        res, _ = run_pde(cfg, out, levels)
    else:
        res = runner(cfg, out, levels)
    if figures or cfg.get("output", {}).get("figures", False):
        from .plotting import render_figures

        out.names.extend(render_figures(out_dir, scen, out.names))
    manifest = {
        "scenario": scen,
        "config": cfg,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_clock_seconds": time.perf_counter() - started,
        "residuals": res,
        "files": inventory(out_dir, out.names),
        "status": "ok",
    }
    write_atomic_json(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest
