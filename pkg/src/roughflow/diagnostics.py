"""Structural audits: Kelvin circulation, enstrophy and Casimirs, the rough Lie
chain rule for scalars, and Wong-Zakai refinement reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fluids import Euler2D, solve_pde
from .rde_flow import VectorFieldFamily, solve_flow
from .rough_core import GeometricRoughPath, TimeGrid, coarsen, lift_piecewise_linear
from .spectral import enstrophy_casimirs  # noqa: F401  (re-exported audit)

# ---------------------------------------------------------------------------
# loops and circulation


@dataclass
class MaterialLoop:
    """Closed polyline; the last vertex connects back to the first."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 3:
            raise ValueError("a loop needs at least three vertices")
        edges = np.roll(pts, -1, axis=0) - pts
        if np.any(np.linalg.norm(edges, axis=1) == 0.0):
            raise ValueError("degenerate loop: repeated consecutive vertices")
        self.points = pts

    @classmethod
    def circle(cls, center, radius, m):
        s = 2.0 * np.pi * np.arange(m) / m
        c = np.asarray(center, dtype=float)
        return cls(np.stack([c[0] + radius * np.cos(s), c[1] + radius * np.sin(s)], axis=1))

    def __len__(self):
        return self.points.shape[0]


def circulation(points, velocity):
    """``oint u . dx`` along the closed polyline by the edge trapezoid rule.

    ``velocity(points)`` returns (M, 2); points live in the universal cover.
    """
    pts = np.asarray(points, dtype=float)
    u = np.asarray(velocity(pts), dtype=float)
    edges = np.roll(pts, -1, axis=0) - pts
    avg = 0.5 * (u + np.roll(u, -1, axis=0))
    return float(np.sum(avg * edges))


def spectral_velocity(model, wh):
    """Closure evaluating the Biot-Savart velocity of ``wh`` off the grid."""
    uh, vh = model.velocity_hat(wh)
    sp = model.sp

    def u(points):
        return np.stack([sp.evaluate(uh, points), sp.evaluate(vh, points)], axis=1)

    return u


class SnapshotVelocityFields(VectorFieldFamily):
    """Particle fields of a 2D Euler run: Biot-Savart drift plus the rough fields.

    On each half step the velocity is interpolated linearly in time between
    the two spectral states bracketing the matching drift half step of the
    PDE solver, so the particle splitting mirrors the field splitting.
    """

    def __init__(self, run):
        if run.stages is None:
            raise ValueError("run must be solved with keep_stages=True")
        model = run.model
        self.model = model
        self.run = run
        sp = model.sp
        fields = []
        jacs = []
        for k in range(model.n_fields):
            fh = model.xi_hat[k]
            fields.append(self._field(sp, fh))
            jacs.append(self._jacobian(sp, fh))
        super().__init__(2, None, fields, jacs, periods=2.0 * np.pi)
        self._cache = {}

    @staticmethod
    def _field(sp, fh):
        return lambda x: np.stack([sp.evaluate(fh[0], x), sp.evaluate(fh[1], x)], axis=1)

    @staticmethod
    def _jacobian(sp, fh):
        def jac(x):
            out = np.empty((np.shape(x)[0], 2, 2))
            for a in range(2):
                out[:, a, 0] = sp.evaluate(fh[a], x, (1, 0))
                out[:, a, 1] = sp.evaluate(fh[a], x, (0, 1))
            return out

        return jac

    def _vel_hat(self, i, which):
        key = (i, which)
        if key not in self._cache:
            st = self.run.stages[i]
            self._cache[key] = self.model.velocity_hat(getattr(st, which))
        return self._cache[key]

    def drift_on(self, interval, part):
        t0 = self.run.times[interval]
        t1 = self.run.times[interval + 1]
        tm = 0.5 * (t0 + t1)
        a, b = ("start", "after_drift") if part == 0 else ("before_drift", "end")
        ta, tb = (t0, tm) if part == 0 else (tm, t1)
        ua = self._vel_hat(interval, a)
        ub = self._vel_hat(interval, b)
        sp = self.model.sp

        def drift(t, x):
            w = (t - ta) / (tb - ta)
            uh = (1.0 - w) * ua[0] + w * ub[0]
            vh = (1.0 - w) * ua[1] + w * ub[1]
            return np.stack([sp.evaluate(uh, x), sp.evaluate(vh, x)], axis=1)

        return drift


def advect_loop(loop, run, scheme="davie"):
    """Trajectories of the loop vertices under the Euler run's particle flow."""
    fields = SnapshotVelocityFields(run)
    return solve_flow(fields, run.path, loop.points, scheme=scheme)


def kelvin_series(loop, run, scheme="davie"):
    """Circulation of the advected loop at every rough-grid time."""
    flow = advect_loop(loop, run, scheme)
    model = run.model
    circ = np.array(
        [circulation(flow.trajectories[i], spectral_velocity(model, model.fwd(run.states[i]))) for i in range(len(run.times))]
    )
    return flow, circ


# ---------------------------------------------------------------------------
# audits


@dataclass
class InvariantSeries:
    times: np.ndarray
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name, vals in self.channels.items():
            if len(vals) != len(self.times):
                raise ValueError(f"channel {name!r} has {len(vals)} samples for {len(self.times)} times")

    def add(self, name, values):
        values = np.asarray(values, dtype=float)
        if len(values) != len(self.times):
            raise ValueError(f"channel {name!r} has wrong length")
        self.channels[name] = values

    def to_csv(self, filename):
        names = list(self.channels)
        with open(filename, "w") as fh:
            fh.write(",".join(["t"] + names) + "\n")
            for i, t in enumerate(self.times):
                fh.write(",".join([f"{t:.17g}"] + [f"{self.channels[n][i]:.17g}" for n in names]) + "\n")


def audit_entry(values, tolerance=None, floor=1e-12):
    """``{initial, final, max_abs_drift, relative_drift, pass}`` for one channel.

    The relative drift divides by ``|initial|``; channels that start at
    (numerically) zero report the absolute drift instead.
    """
    v = np.asarray(values, dtype=float)
    drift = np.abs(v - v[0])
    max_abs = float(np.max(drift))
    scale = abs(float(v[0]))
    rel = max_abs / scale if scale > floor else max_abs
    entry = {
        "initial": float(v[0]),
        "final": float(v[-1]),
        "max_abs_drift": max_abs,
        "relative_drift": rel,
        "pass": None if tolerance is None else bool(np.isfinite(rel) and rel <= tolerance),
    }
    return entry


def audit_report(series, tolerances):
    """Audit every channel that has a tolerance (others are reported only)."""
    channels = series.channels if isinstance(series, InvariantSeries) else series
    return {name: audit_entry(vals, tolerances.get(name)) for name, vals in channels.items()}


def write_audit(report, filename):
    with open(filename, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# rough Lie chain rule for scalars


class SyntheticScalar:
    """``tau(t, x) = F(x, Z_t, t)`` with ``dtau = dF/dt dt + dF/dz_k dZ^k``.

    ``F`` and its derivatives are callables of ``(x (M, d), z (K,), t)``:
    ``grad_x`` (M, d), ``hess_x`` (M, d, d), ``d_t`` (M,), ``d_z`` (M, K),
    ``d_zz`` (M, K, K) and ``d_zx`` (M, K, d).  :meth:`from_expression`
    builds them symbolically.
    """

    def __init__(self, value, grad_x, hess_x, d_t, d_z, d_zz, d_zx):
        self.value = value
        self.grad_x = grad_x
        self.hess_x = hess_x
        self.d_t = d_t
        self.d_z = d_z
        self.d_zz = d_zz
        self.d_zx = d_zx

    @classmethod
    def from_expression(cls, text, dim, n_noise):
        from .expressions import compile_scalar_family

        return cls(*compile_scalar_family(text, dim, n_noise))


def lie_chain_rule_residual(flow, tau):
    """Max over grid times and particles of the pull-back identity defect.

    Checks ``tau_t(Y_t) - tau_0(Y_0) = int (pi + u.grad tau) dr
    + int (gamma_k + xi_k.grad tau) dZ^k`` along the computed trajectories
    ``Y``; the dZ integral is a compensated sum whose Gubinelli derivative is
    ``d/dz_l (gamma_k + xi_k.grad tau) + xi_l.grad(gamma_k + xi_k.grad tau)``.
    The dt integral uses the trapezoid rule.
    """
    path = flow.path
    fields = flow.fields
    times = path.times
    z = path.values
    kdim = path.dim
    traj = flow.trajectories
    n = len(times)
    lhs = np.array([tau.value(traj[j], z[j], times[j]) for j in range(n)])
    lhs = lhs - lhs[0]

    def drift_density(j):
        y = traj[j]
        out = tau.d_t(y, z[j], times[j])
        if fields.drift is not None:
            out = out + np.sum(fields.drift(times[j], y) * tau.grad_x(y, z[j], times[j]), axis=1)
        return out

    dens = np.array([drift_density(j) for j in range(n)])
    dt = np.diff(times)[:, None]
    drift_int = np.concatenate([np.zeros((1, dens.shape[1])), np.cumsum(0.5 * (dens[1:] + dens[:-1]) * dt, axis=0)])

    dz = path.increments
    area = path.levy_area
    g = np.empty(traj.shape[:2] + (kdim,))
    gp = np.empty(traj.shape[:2] + (kdim, kdim))
    for j in range(n):
        y = traj[j]
        zj, tj = z[j], times[j]
        grad = tau.grad_x(y, zj, tj)
        hess = tau.hess_x(y, zj, tj)
        dzf = tau.d_z(y, zj, tj)
        dzz = tau.d_zz(y, zj, tj)
        dzx = tau.d_zx(y, zj, tj)
        xis = [fields.xi(y, k) for k in range(kdim)]
        jacs = [fields.jac(y, k) for k in range(kdim)]
        for k in range(kdim):
            g[j, :, k] = dzf[:, k] + np.sum(xis[k] * grad, axis=1)
            # grad_x g_k = d_zx F[k] + Dxi_k^T grad F + Hess F xi_k
            grad_g = dzx[:, k] + np.einsum("mab,ma->mb", jacs[k], grad) + np.einsum("mab,mb->ma", hess, xis[k])
            for l in range(kdim):
                dz_g = dzz[:, k, l] + np.sum(xis[k] * dzx[:, l], axis=1)
                gp[j, :, k, l] = dz_g + np.sum(xis[l] * grad_g, axis=1)
    # trapezoid germ: on geometric paths it equals g dZ + g' zz up to the
    # dt-dZ cross term, which it integrates to second order
    germ = 0.5 * np.einsum("jmk,jk->jm", g[:-1] + g[1:], dz) + np.einsum("jmkl,jlk->jm", gp[:-1], area)
    rough = np.concatenate([np.zeros((1, germ.shape[1])), np.cumsum(germ, axis=0)])
    return float(np.max(np.abs(lhs - drift_int - rough)))


# ---------------------------------------------------------------------------
# refinement studies


def fit_order(steps, errors):
    """Least-squares slope of ``log(error)`` against ``log(1/steps)`` and its R^2."""
    x = np.log(1.0 / np.asarray(steps, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    pred = a @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def mollified_levels(values, fine_grid, coarse_grid, base, levels, alpha=0.4, ratio=2):
    """Piecewise-linear interpolants of one fine sample path.

    Level ``l`` keeps every ``stride``-th fine point so that each coarse
    interval holds ``base * ratio**l`` linear pieces (``ratio`` a power of
    two keeps every level dyadic); each lift lives on its own grid.
    """
    n_coarse = len(coarse_grid) - 1
    per = (len(fine_grid) - 1) // n_coarse
    out = []
    for lev in range(levels):
        pieces = base * ratio**lev
        if per % pieces:
            raise ValueError("fine grid is not a dyadic refinement of the requested levels")
        stride = per // pieces
        g = TimeGrid(fine_grid.times[::stride])
        out.append(lift_piecewise_linear(values[::stride], g, alpha=alpha))
    return out


def sup_distance_on(a_times, a, b_times, b, at):
    """``max |a(t) - b(t)|`` over the common times ``at`` (leading axis = time)."""
    ia = np.searchsorted(a_times, at)
    ib = np.searchsorted(b_times, at)
    return float(np.max(np.abs(a[ia] - b[ib])))


@dataclass
class WongZakaiReport:
    pieces: list
    distances: list
    monotone: bool
    corrupted: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "pieces_per_interval": self.pieces,
            "successive_distances": self.distances,
            "monotone": self.monotone,
            "corrupted": self.corrupted,
        }


def wong_zakai_report(solve, paths, coarse_times, pieces=None):
    """Successive sup distances of ``solve(path)`` across mollification levels.

    ``solve`` maps a rough path to an array indexed by that path's grid times.
    """
    if len(paths) < 3:
        raise ValueError("need at least three levels")
    sols = [solve(p) for p in paths]
    dists = [
        sup_distance_on(paths[i].times, sols[i], paths[i + 1].times, sols[i + 1], coarse_times)
        for i in range(len(paths) - 1)
    ]
    mono = all(b < a for a, b in zip(dists, dists[1:]))
    return WongZakaiReport(list(pieces or range(len(paths))), dists, mono), sols


def antisymmetrized(path):
    """The same first level with ``zz`` replaced by its Levy area (not geometric)."""
    return GeometricRoughPath(path.grid, path.values, path.levy_area, path.alpha, dict(path.meta, corrupted=True))


def corruption_study(solve, reference_path, reference_solution, grids):
    """Distances to the geometric reference for honest and corrupted coarse lifts."""
    honest = []
    corrupt = []
    for g in grids:
        sub = coarsen(reference_path, g)
        t = sub.times
        honest.append(sup_distance_on(reference_path.times, reference_solution, t, solve(sub), t))
        corrupt.append(sup_distance_on(reference_path.times, reference_solution, t, solve(antisymmetrized(sub)), t))
    return {"steps": [len(g) - 1 for g in grids], "geometric": honest, "antisymmetrized": corrupt}


def particle_solver(fields, particles, scheme):
    return lambda p: solve_flow(fields, p, particles, scheme=scheme).trajectories


def pde_solver(model, initial, scheme):
    return lambda p: solve_pde(model, initial, p, scheme=scheme, monitor=False).states


def euler_enstrophy_series(run):
    """``int w^2`` channel recomputed from the run's states (audit cross-check)."""
    if not isinstance(run.model, Euler2D):
        raise TypeError("enstrophy audit needs a 2D Euler run")
    return np.array([enstrophy_casimirs(w)[0] for w in run.states])


def relative_drift(values):
    v = np.asarray(values, dtype=float)
    return float(np.max(np.abs(v - v[0])) / max(abs(v[0]), math.ulp(1.0)))
