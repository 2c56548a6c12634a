"""Particle flows of ``dY = u_t(Y) dt + xi(Y) dZ`` driven by a level-2 path.

Two one-step schemes are provided for the rough increment over a grid
interval:

* ``davie``: ``Y + xi_k(Y) dZ^k + (D xi_k . xi_l)(Y) zz^{lk}``
* ``magnus``: time-one map of the frozen field
  ``xi_k dZ^k + sum_{k<l} [xi_k, xi_l] A^{kl}``, integrated with RK4 substeps,
  where ``A`` is the Levy area and ``[X, Y] = DY.X - DX.Y``.

Both couple to the drift by Strang splitting: half a step of drift (RK4),
the rough increment, another half step of drift.  Integration happens in the
universal cover; torus coordinates are reduced only on output.

On the level-1 term of the approximate flow the exponent is read as
``xi_k dZ^k``; an alternative reading with ``xi_k zz^k`` is not dimensionally
consistent for K > 1 and is not implemented.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, NumericalAbort
from .rough_core import coarsen

FD_STEP = 1e-6


def _fd_jacobian(func, x, h=FD_STEP):
    x = np.asarray(x, dtype=float)
    m, d = x.shape
    jac = np.empty((m, d, d))
    for b in range(d):
        e = np.zeros(d)
        e[b] = h * (1.0 + np.max(np.abs(x[:, b]), initial=0.0))
        jac[:, :, b] = (func(x + e) - func(x - e)) / (2 * e[b])
    return jac


class VectorFieldFamily:
    """Drift ``u(t, x)`` and rough fields ``xi_k(x)`` on R^d or a torus.

    All callables are vectorized over particles: ``x`` has shape (M, d).
    ``jacobians[k](x)`` returns (M, d, d) with ``J[m, a, b] = d xi^a / d x^b``;
    missing Jacobians fall back to central differences.
    """

    def __init__(self, dim, drift=None, fields=(), jacobians=None, periods=None, drift_jacobian=None):
        self.dim = int(dim)
        self.drift = drift
        self.drift_jacobian = drift_jacobian
        self.fields = list(fields)
        self.jacobians = list(jacobians) if jacobians is not None else [None] * len(self.fields)
        if len(self.jacobians) != len(self.fields):
            raise ValueError("one Jacobian per rough field")
        self.periods = None if periods is None else np.broadcast_to(np.asarray(periods, float), (self.dim,))

    @property
    def n_fields(self):
        return len(self.fields)

    @property
    def is_torus(self):
        return self.periods is not None

    def drift_on(self, interval, part):
        """Drift used on half ``part`` (0 or 1) of grid interval ``interval``."""
        return self.drift

    def xi(self, x, k):
        return np.asarray(self.fields[k](x), dtype=float)

    def jac(self, x, k):
        j = self.jacobians[k]
        if j is None:
            return _fd_jacobian(self.fields[k], x)
        return np.asarray(j(x), dtype=float)

    def bracket(self, x, k, l):
        """``[xi_k, xi_l] = D xi_l . xi_k - D xi_k . xi_l``."""
        xk = self.xi(x, k)
        xl = self.xi(x, l)
        return np.einsum("mab,mb->ma", self.jac(x, l), xk) - np.einsum("mab,mb->ma", self.jac(x, k), xl)

    def wrap(self, x):
        if self.periods is None:
            return x
        return np.mod(x, self.periods)

    def check_jacobians(self, points, h=FD_STEP):
        """Largest deviation between supplied Jacobians and finite differences."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        worst = 0.0
        for k, jf in enumerate(self.jacobians):
            if jf is None:
                continue
            fd = _fd_jacobian(self.fields[k], points, h)
            worst = max(worst, float(np.max(np.abs(np.asarray(jf(points)) - fd))))
        return worst

    def time_reversed(self, t_first, t_last, n_intervals):
        """Fields for the reversed driver on ``[t_first, t_last]``."""
        return _ReversedFamily(self, t_first, t_last, n_intervals)

    # common families ------------------------------------------------------

    @classmethod
    def constant(cls, vectors, drift=None, periods=None):
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        d = vectors.shape[1]

        def const(v):
            return lambda x: np.broadcast_to(v, np.shape(x)).copy()

        zero = lambda x: np.zeros((np.shape(x)[0], d, d))
        return cls(d, drift, [const(v) for v in vectors], [zero] * len(vectors), periods)

    @classmethod
    def linear(cls, matrices, drift=None):
        """Fields ``xi_k(x) = A_k x``."""
        mats = [np.asarray(a, dtype=float) for a in matrices]
        d = mats[0].shape[0]
        fields = [(lambda a: lambda x: x @ a.T)(a) for a in mats]
        jacs = [(lambda a: lambda x: np.broadcast_to(a, (np.shape(x)[0], d, d)).copy())(a) for a in mats]
        return cls(d, drift, fields, jacs)

    @classmethod
    def area(cls):
        """``xi_1 = (1, 0, -x_2/2)``, ``xi_2 = (0, 1, x_1/2)`` on R^3."""

        def xi1(x):
            out = np.zeros_like(x)
            out[:, 0] = 1.0
            out[:, 2] = -0.5 * x[:, 1]
            return out

        def xi2(x):
            out = np.zeros_like(x)
            out[:, 1] = 1.0
            out[:, 2] = 0.5 * x[:, 0]
            return out

        def j1(x):
            out = np.zeros((x.shape[0], 3, 3))
            out[:, 2, 1] = -0.5
            return out

        def j2(x):
            out = np.zeros((x.shape[0], 3, 3))
            out[:, 2, 0] = 0.5
            return out

        return cls(3, None, [xi1, xi2], [j1, j2])


class _ReversedFamily(VectorFieldFamily):
    def __init__(self, base, t_first, t_last, n_intervals):
        super().__init__(base.dim, None, base.fields, base.jacobians, base.periods)
        self.base = base
        self.t_sum = t_first + t_last
        self.n = n_intervals
        if base.drift is not None:
            self.drift = self._flip(base.drift)

    def _flip(self, drift):
        if drift is None:
            return None
        return lambda t, x: -np.asarray(drift(self.t_sum - t, x))

    def drift_on(self, interval, part):
        return self._flip(self.base.drift_on(self.n - 1 - interval, 1 - part))


# ---------------------------------------------------------------------------
# one-step maps


def rk4(func, t0, t1, x, substeps=1):
    """Classical RK4 for ``x' = func(t, x)`` with ``substeps`` equal steps."""
    h = (t1 - t0) / substeps
    t = t0
    for _ in range(substeps):
        k1 = func(t, x)
        k2 = func(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = func(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = func(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + h
    return x


def davie_increment(x, dz, zz, fields):
    """``x + xi_k(x) dZ^k + (D xi_k . xi_l)(x) zz^{lk}``."""
    out = np.array(x, dtype=float, copy=True)
    vals = [fields.xi(x, k) for k in range(fields.n_fields)]
    for k in range(fields.n_fields):
        if dz[k] != 0.0:
            out += vals[k] * dz[k]
        jk = None
        for l in range(fields.n_fields):
            if zz[l, k] == 0.0:
                continue
            if jk is None:
                jk = fields.jac(x, k)
            out += np.einsum("mab,mb->ma", jk, vals[l]) * zz[l, k]
    return out


def frozen_field(fields, dz, area):
    """Autonomous field ``xi_k dZ^k + sum_{k<l} [xi_k, xi_l] A^{kl}``."""
    n = fields.n_fields

    def f(_, x):
        out = np.zeros_like(x)
        for k in range(n):
            if dz[k] != 0.0:
                out += fields.xi(x, k) * dz[k]
        for k in range(n):
            for l in range(k + 1, n):
                if area[k, l] != 0.0:
                    out += fields.bracket(x, k, l) * area[k, l]
        return out

    return f


def magnus_increment(x, dz, area, fields, substeps=4):
    return rk4(frozen_field(fields, dz, area), 0.0, 1.0, np.asarray(x, dtype=float), substeps)


def _drift_half(fields, interval, part, t0, t1, x, substeps):
    drift = fields.drift_on(interval, part)
    if drift is None:
        return x
    return rk4(drift, t0, t1, x, substeps)


def _check(x, t):
    if not np.all(np.isfinite(x)):
        raise NumericalAbort(f"non-finite particle state after t={t:g}", last_time=t)
    return x


def davie_step(y, interval, fields, path, drift_substeps=1):
    """Advance particles ``y`` (M, d) across grid interval ``interval``."""
    t0, t1 = path.times[interval], path.times[interval + 1]
    tm = 0.5 * (t0 + t1)
    y = _drift_half(fields, interval, 0, t0, tm, y, drift_substeps)
    y = davie_increment(y, path.increments[interval], path.second_level[interval], fields)
    y = _drift_half(fields, interval, 1, tm, t1, y, drift_substeps)
    return _check(y, t0)


def magnus_step(y, interval, fields, path, ode_substeps=4, drift_substeps=1):
    t0, t1 = path.times[interval], path.times[interval + 1]
    tm = 0.5 * (t0 + t1)
    y = _drift_half(fields, interval, 0, t0, tm, y, drift_substeps)
    y = magnus_increment(y, path.increments[interval], path.levy_area[interval], fields, ode_substeps)
    y = _drift_half(fields, interval, 1, tm, t1, y, drift_substeps)
    return _check(y, t0)


SCHEMES = ("davie", "magnus")


def _stepper(scheme, ode_substeps, drift_substeps):
    if scheme == "davie":
        return lambda y, i, f, p: davie_step(y, i, f, p, drift_substeps)
    if scheme == "magnus":
        return lambda y, i, f, p: magnus_step(y, i, f, p, ode_substeps, drift_substeps)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


# ---------------------------------------------------------------------------
# flows


@dataclass
class FlowMap:
    """Particle trajectories on the driver grid (universal-cover coordinates)."""

    times: np.ndarray
    initial: np.ndarray
    trajectories: np.ndarray
    scheme: str
    fields: VectorFieldFamily = field(repr=False)
    path: object = field(repr=False)
    options: dict = field(default_factory=dict, repr=False)

    @property
    def final(self):
        return self.trajectories[-1]

    def at(self, i):
        return self.trajectories[i]

    def wrapped(self):
        return self.fields.wrap(self.trajectories)

    def apply(self, x, i, j):
        """``eta_{t_j t_i}(x)`` recomputed on the grid (requires ``i <= j``)."""
        step = _stepper(self.scheme, **self.options)
        y = np.atleast_2d(np.asarray(x, dtype=float))
        for n in range(i, j):
            y = step(y, n, self.fields, self.path)
        return y

    def to_csv(self, filename, wrap=True):
        traj = self.wrapped() if wrap else self.trajectories
        d = traj.shape[2]
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["particle_id", "t"] + [f"x_{a + 1}" for a in range(d)])
            for m in range(traj.shape[1]):
                for i, t in enumerate(self.times):
                    w.writerow([m, f"{t:.17g}"] + [f"{v:.17g}" for v in traj[i, m]])


def solve_flow(fields, path, particles, scheme="davie", ode_substeps=4, drift_substeps=1):
    """Trajectories of every particle on the grid of ``path``."""
    if fields.n_fields != path.dim:
        raise GridError(f"{fields.n_fields} rough fields but driver has K={path.dim}")
    x0 = np.atleast_2d(np.asarray(particles, dtype=float))
    if x0.shape[1] != fields.dim:
        raise ValueError(f"particles must have dimension {fields.dim}")
    step = _stepper(scheme, ode_substeps, drift_substeps)
    traj = np.empty((path.n_intervals + 1,) + x0.shape)
    traj[0] = x0
    y = x0
    for i in range(path.n_intervals):
        y = step(y, i, fields, path)
        traj[i + 1] = y
    return FlowMap(
        path.times.copy(),
        x0,
        traj,
        scheme,
        fields,
        path,
        {"ode_substeps": ode_substeps, "drift_substeps": drift_substeps},
    )


def flow_composition_residual(flow, s, theta, t, probes):
    """``max |mu_{t theta}(mu_{theta s}(X)) - mu_{ts}(X)|`` for one-step maps.

    ``mu_{ba}`` is a single step of the flow's scheme over ``[t_a, t_b]`` with
    the second level merged by Chen's relation, so the defect measures how far
    the approximate flow is from a two-parameter flow (order ``3 alpha`` in
    ``|t - s|``).  Indices refer to the flow's grid.
    """
    if not s <= theta <= t:
        raise ValueError("need s <= theta <= t")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))

    def one_step(a, b, x):
        if a == b:
            return x
        sub = coarsen(flow.path, np.array([a, b]))
        fam = flow.fields
        step = _stepper(flow.scheme, **flow.options)
        return step(x, 0, _Shifted(fam, a), sub)

    lhs = one_step(theta, t, one_step(s, theta, probes))
    rhs = one_step(s, t, probes)
    return float(np.max(np.abs(lhs - rhs)))


class _Shifted(VectorFieldFamily):
    """Re-indexes ``drift_on`` for a single-interval sub-path starting at ``offset``."""

    def __init__(self, base, offset):
        super().__init__(base.dim, base.drift, base.fields, base.jacobians, base.periods)
        self.base = base
        self.offset = offset

    def drift_on(self, interval, part):
        return self.base.drift_on(self.offset + interval, part)


def inverse_flow(fields, path, points, upto, scheme="davie", **options):
    """``eta_{t_upto, t_0}^{-1}(points)`` by solving with the reversed driver."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if upto == 0:
        return points.copy()
    sub = path.restrict(0, upto).reversed()
    rev = fields.time_reversed(path.times[0], path.times[upto], upto)
    return solve_flow(rev, sub, points, scheme, **options).final


@dataclass
class ScalarAdvection:
    times: np.ndarray
    probes: np.ndarray
    values: np.ndarray
    residual: float


def advect_scalar(f0, flow, probes=None, upto=None):
    """Transported scalar ``f(t, y) = f0(eta_{t0}^{-1}(y))`` at ``probes``.

    ``values[j]`` holds the field at grid time ``j`` (all times up to
    ``upto``).  ``residual`` is ``max |f(t, eta_t X) - f0(X)|`` over the flow's
    own particles, i.e. how well the reversed-driver inverse undoes the flow.
    """
    upto = flow.path.n_intervals if upto is None else upto
    probes = flow.initial if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    vals = np.empty((upto + 1, probes.shape[0]))
    for j in range(upto + 1):
        back = inverse_flow(flow.fields, flow.path, probes, j, flow.scheme, **flow.options)
        vals[j] = f0(back)
    back_particles = inverse_flow(
        flow.fields, flow.path, flow.trajectories[upto], upto, flow.scheme, **flow.options
    )
    residual = float(np.max(np.abs(f0(back_particles) - f0(flow.initial))))
    return ScalarAdvection(flow.times[: upto + 1].copy(), probes, vals, residual)
