"""Pseudo-spectral solvers for rough Burgers, rough Camassa-Holm and rough 2D Euler.

Each model works on masked spectral coefficients and exposes

* ``drift(vh)``: the deterministic tendency (dealiased),
* ``rough_op(vh, k)``: the linear rough operator ``G_k``,
* ``symbol(k)``: the Fourier multiplier of ``G_k`` when it is diagonal
  (spatially constant field), else ``None``.

One step over a grid interval is Strang split: half a drift step (RK4), the
rough increment, another half drift step.  The rough increment is either

* ``"exponential"`` (default): ``exp(E) v`` with the log-ODE exponent
  ``E = G_k dZ^k + sum_{k<l} (G_l G_k - G_k G_l) A^{kl}``, evaluated by a
  substepped Taylor series (or exactly, through the symbols, when every
  ``G_k`` is diagonal), or
* ``"davie"``: ``v + G_k v dZ^k + G_k G_l v zz^{lk}``, which is only stable
  while ``||G|| |dZ|`` stays small.

Both agree to third order in the driver; the exponential form keeps transport
by a large rough displacement exact, which the truncated expansion cannot.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CFLError, ConfigError, NumericalAbort
from .spectral import TWO_PI, Spectral1D, Spectral2D, enstrophy_casimirs, kmax

logger = logging.getLogger(__name__)

CFL_SAFETY = 0.5
ROUGH_SAFETY = 0.5
TAIL_WARN = 0.01
TAIL_ABORT = 0.10
TAYLOR_TOL = 1e-16
TAYLOR_MAX_TERMS = 60
TAYLOR_HUMP = 8.0
TAYLOR_MAX_SUBSTEPS = 4096


class ResolutionWarning(RuntimeWarning):
    """Spectral tail energy suggests the grid is under-resolving the state."""


def _as_fields(xi, shape):
    if xi is None:
        return np.zeros((0,) + shape)
    arr = np.asarray(xi, dtype=float)
    if arr.shape == shape:
        arr = arr[None]
    if arr.shape[1:] != shape:
        raise ValueError(f"rough fields must have shape (K, {', '.join(map(str, shape))})")
    return arr


def _is_constant(f):
    return bool(np.ptp(f) <= 1e-14 * (1.0 + np.max(np.abs(f))))


# ---------------------------------------------------------------------------
# 1D models


class Burgers1D:
    """``du + 3 u u_x dt + (xi u_x + 2 u xi_x) dZ = 0`` on the circle."""

    dim = 1
    name = "burgers"

    def __init__(self, n, xi=None):
        self.sp = Spectral1D(n)
        self.n = self.sp.n
        self.xi = _as_fields(xi, (self.n,))
        self.xi_hat = np.array([self.sp.dealias(self.sp.fwd(f)) for f in self.xi]).reshape(len(self.xi), self.n // 2 + 1)
        self.xi_x = np.array([self.sp.inv(self.sp.deriv(h)) for h in self.xi_hat]).reshape(self.xi.shape)
        self.xi_xx = np.array([self.sp.inv(self.sp.deriv(h, 2)) for h in self.xi_hat]).reshape(self.xi.shape)

    @property
    def n_fields(self):
        return len(self.xi)

    @property
    def state_shape(self):
        return (self.n,)

    def fwd(self, v):
        return self.sp.dealias(self.sp.fwd(v))

    def inv(self, vh):
        return self.sp.inv(vh)

    def _ux(self, vh):
        return self.sp.inv(self.sp.deriv(vh))

    def drift(self, vh):
        u = self.inv(vh)
        return self.fwd(-3.0 * u * self._ux(vh))

    def rough_op(self, vh, k):
        u = self.inv(vh)
        return self.fwd(-(self.xi[k] * self._ux(vh) + 2.0 * u * self.xi_x[k]))

    def symbol(self, k):
        if not _is_constant(self.xi[k]):
            return None
        return -self.xi[k][0] * self.sp.ik * self.sp.mask

    def op_norm(self, k):
        return float(np.max(np.abs(self.xi[k])) * kmax(self.n) + 2.0 * np.max(np.abs(self.xi_x[k])))

    def max_speed(self, vh):
        return 3.0 * float(np.max(np.abs(self.inv(vh))))

    def tail_fraction(self, vh):
        e = np.abs(vh) ** 2
        top = np.abs(self.sp.k) > (2.0 / 3.0) * kmax(self.n)
        total = float(np.sum(e))
        return float(np.sum(e[top]) / total) if total > 0 else 0.0

    def invariants(self, v):
        return {
            "energy": 0.5 * self.sp.integral(v**2),
            "mean_u": self.sp.integral(v) / TWO_PI,
        }


class CamassaHolm1D(Burgers1D):
    """Rough Camassa-Holm with ``Lambda^2 = 1 - alpha^2 d_x^2``.

    ``alpha = 0`` reproduces :class:`Burgers1D` operation for operation.
    """

    name = "camassa_holm"

    def __init__(self, n, alpha=1.0, xi=None):
        if alpha < 0:
            raise ConfigError("alpha_ch must be non-negative")
        super().__init__(n, xi)
        self.alpha = float(alpha)
        self.helmholtz = 1.0 / (1.0 + self.alpha**2 * self.sp.k**2)

    def helmholtz_inverse(self, f):
        """``Lambda^{-2} f`` for nodal ``f``."""
        if self.alpha == 0.0:
            return np.asarray(f, dtype=float)
        return self.sp.inv(self.sp.fwd(f) * self.helmholtz)

    def momentum(self, v):
        """``m = Lambda^2 u``."""
        vh = self.sp.fwd(v)
        return self.sp.inv(vh * (1.0 + self.alpha**2 * self.sp.k**2))

    def drift(self, vh):
        if self.alpha == 0.0:
            return super().drift(vh)
        u = self.inv(vh)
        ux = self._ux(vh)
        nonlocal_part = self.sp.fwd(u * u + 0.5 * self.alpha**2 * ux * ux) * self.helmholtz
        return self.fwd(-u * ux) - self.sp.dealias(self.sp.deriv(nonlocal_part))

    def rough_op(self, vh, k):
        if self.alpha == 0.0:
            return super().rough_op(vh, k)
        u = self.inv(vh)
        ux = self._ux(vh)
        inner = self.sp.fwd(2.0 * u * self.xi_x[k] + self.alpha**2 * self.xi_xx[k] * ux) * self.helmholtz
        return self.fwd(-self.xi[k] * ux) - self.sp.dealias(inner)

    def op_norm(self, k):
        return float(
            np.max(np.abs(self.xi[k])) * kmax(self.n)
            + 2.0 * np.max(np.abs(self.xi_x[k]))
            + 0.5 * self.alpha * np.max(np.abs(self.xi_xx[k]))
        )

    def max_speed(self, vh):
        return 2.0 * float(np.max(np.abs(self.inv(vh))))

    def invariants(self, v):
        out = super().invariants(v)
        out["momentum"] = self.sp.integral(self.momentum(v))
        return out


# ---------------------------------------------------------------------------
# 2D Euler


class Euler2D:
    """``d omega + u . grad omega dt + xi_k . grad omega dZ^k = 0`` on the 2-torus.

    ``xi`` has shape (K, 2, n, n); every field must be divergence free.
    """

    dim = 2
    name = "euler2d"

    def __init__(self, n, xi=None, div_tol=1e-12):
        self.sp = Spectral2D(n)
        self.n = self.sp.n
        self.xi = _as_fields(xi, (2, self.n, self.n))
        self.xi_hat = np.array([[self.sp.fwd(c) for c in f] for f in self.xi]).reshape(
            (len(self.xi), 2, self.n, self.n // 2 + 1)
        )
        for k, fh in enumerate(self.xi_hat):
            div = self.sp.inv(self.sp.dx_hat(fh[0]) + self.sp.dy_hat(fh[1]))
            scale = 1.0 + float(np.max(np.abs(self.xi[k])))
            if np.max(np.abs(div)) > div_tol * scale * self.n:
                raise ConfigError(f"rough field {k} is not divergence free (max |div| = {np.max(np.abs(div)):.2e})")
        self.xi_grad = np.array(
            [[[self.sp.inv(self.sp.dx_hat(c)), self.sp.inv(self.sp.dy_hat(c))] for c in fh] for fh in self.xi_hat]
        ).reshape((len(self.xi), 2, 2, self.n, self.n))

    @property
    def n_fields(self):
        return len(self.xi)

    @property
    def state_shape(self):
        return (self.n, self.n)

    def fwd(self, v):
        out = self.sp.dealias(self.sp.fwd(v))
        out[0, 0] = 0.0
        return out

    def inv(self, vh):
        return self.sp.inv(vh)

    def stream_hat(self, wh):
        return wh * self.sp.inv_k2

    def velocity_hat(self, wh):
        psi = self.stream_hat(wh)
        return self.sp.dy_hat(psi), -self.sp.dx_hat(psi)

    def velocity(self, wh):
        uh, vh = self.velocity_hat(wh)
        return self.sp.inv(uh), self.sp.inv(vh)

    def _grad(self, wh):
        return self.sp.inv(self.sp.dx_hat(wh)), self.sp.inv(self.sp.dy_hat(wh))

    def drift(self, wh):
        u, v = self.velocity(wh)
        wx, wy = self._grad(wh)
        return self.fwd(-(u * wx + v * wy))

    def rough_op(self, wh, k):
        wx, wy = self._grad(wh)
        return self.fwd(-(self.xi[k, 0] * wx + self.xi[k, 1] * wy))

    def symbol(self, k):
        if not (_is_constant(self.xi[k, 0]) and _is_constant(self.xi[k, 1])):
            return None
        c = self.xi[k, :, 0, 0]
        return -1j * (c[0] * self.sp.kx + c[1] * self.sp.ky) * self.sp.mask

    def op_norm(self, k):
        return float(np.max(np.hypot(self.xi[k, 0], self.xi[k, 1]))) * kmax(self.n) * math.sqrt(2.0)

    def max_speed(self, wh):
        u, v = self.velocity(wh)
        return float(np.max(np.hypot(u, v)))

    def tail_fraction(self, wh):
        e = np.abs(wh) ** 2
        e[:, 1:] *= 2.0
        kk = np.maximum(np.abs(self.sp.kx), np.abs(self.sp.ky))
        top = kk > (2.0 / 3.0) * kmax(self.n)
        total = float(np.sum(e))
        return float(np.sum(e[top]) / total) if total > 0 else 0.0

    def invariants(self, w):
        wh = self.fwd(w)
        u, v = self.velocity(wh)
        ens, cas4, mean = enstrophy_casimirs(w)
        return {
            "energy": 0.5 * self.sp.integral(u * u + v * v),
            "enstrophy": ens,
            "casimir4": cas4,
            "mean_omega": mean / TWO_PI**2,
        }

    # diagnostics ----------------------------------------------------------

    def biot_savart(self, w):
        """Velocity (u, v) from a mean-free vorticity."""
        w = np.asarray(w, dtype=float)
        if abs(np.mean(w)) > 1e-12 * (1.0 + np.max(np.abs(w))):
            raise ValueError("vorticity must have zero mean")
        return self.velocity(self.sp.fwd(w))

    def recover_pressures(self, w):
        """Mean-free ``(p, [q_1..q_K])`` solving the two pressure Poisson problems."""
        sp = self.sp
        wh = sp.fwd(w)
        uh = self.velocity_hat(wh)
        u = [sp.inv(c) for c in uh]
        grad_u = [[sp.inv(sp.dx_hat(c)), sp.inv(sp.dy_hat(c))] for c in uh]

        def solve(vec):
            # Delta p = -div(vec)  =>  p_hat = i k . vec_hat / |k|^2
            div = sp.dx_hat(sp.fwd(vec[0])) + sp.dy_hat(sp.fwd(vec[1]))
            return sp.inv(div * sp.inv_k2)

        adv = [u[0] * grad_u[i][0] + u[1] * grad_u[i][1] for i in range(2)]
        p = solve(adv)
        qs = []
        for k in range(self.n_fields):
            xi = self.xi[k]
            g = self.xi_grad[k]  # g[j, i] = d_i xi^j
            vec = [
                xi[0] * grad_u[i][0] + xi[1] * grad_u[i][1] + g[0, i] * u[0] + g[1, i] * u[1]
                for i in range(2)
            ]
            qs.append(solve(vec))
        return p, qs


def make_model(kind, n, xi=None, alpha=0.0):
    if kind == "burgers":
        return Burgers1D(n, xi)
    if kind == "camassa_holm":
        return CamassaHolm1D(n, alpha, xi)
    if kind == "euler2d":
        return Euler2D(n, xi)
    raise ConfigError(f"unknown model {kind!r}")


# ---------------------------------------------------------------------------
# stepping


def _rk4(model, vh, h):
    k1 = model.drift(vh)
    k2 = model.drift(vh + 0.5 * h * k1)
    k3 = model.drift(vh + 0.5 * h * k2)
    k4 = model.drift(vh + h * k3)
    return vh + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _exponent(model, dz, area):
    n = model.n_fields
    terms = [(k, dz[k]) for k in range(n) if dz[k] != 0.0]
    pairs = [(k, l, area[k, l]) for k in range(n) for l in range(k + 1, n) if area[k, l] != 0.0]
    if not terms and not pairs:
        return None

    def apply(vh):
        out = np.zeros_like(vh)
        for k, c in terms:
            out += c * model.rough_op(vh, k)
        for k, l, a in pairs:
            out += a * (model.rough_op(model.rough_op(vh, k), l) - model.rough_op(model.rough_op(vh, l), k))
        return out

    return apply


def _taylor(apply, vh, tau):
    """One Taylor pass of ``exp(tau E) vh``; returns (result or None, hump)."""
    scale = float(np.linalg.norm(vh)) or 1.0
    acc = vh.copy()
    term = vh
    hump = 1.0
    for j in range(1, TAYLOR_MAX_TERMS + 1):
        term = apply(term) * (tau / j)
        acc += term
        size = float(np.linalg.norm(term)) / scale
        hump = max(hump, size)
        if size <= TAYLOR_TOL:
            return acc, hump
    return None, hump


def rough_exponential(model, vh, dz, area):
    """``exp(E) vh`` for the log-ODE exponent of one grid increment.

    The number of Taylor substeps starts from the observed action
    ``|E v| / |v|`` and doubles until every pass converges without an
    intermediate term exceeding ``TAYLOR_HUMP`` times the state.
    """
    if model.n_fields == 0:
        return vh
    symbols = [model.symbol(k) for k in range(model.n_fields)]
    if all(s is not None for s in symbols):
        # commuting diagonal generators: brackets vanish and exp is exact
        total = sum(dz[k] * symbols[k] for k in range(model.n_fields))
        return vh * np.exp(total)
    apply = _exponent(model, dz, area)
    norm = float(np.linalg.norm(vh))
    if apply is None or norm == 0.0:
        return vh
    rate = float(np.linalg.norm(apply(vh))) / norm
    sub = max(1, math.ceil(2.0 * rate))
    while sub <= TAYLOR_MAX_SUBSTEPS:
        v = vh
        for _ in range(sub):
            v, hump = _taylor(apply, v, 1.0 / sub)
            if v is None or hump > TAYLOR_HUMP:
                break
        else:
            return v
        sub *= 2
    raise NumericalAbort("rough exponential failed to converge")


def rough_davie(model, vh, dz, zz, safety=ROUGH_SAFETY):
    """``v + G_k v dZ^k + G_k G_l v zz^{lk}``."""
    n = model.n_fields
    if n == 0:
        return vh
    size = sum(abs(dz[k]) * model.op_norm(k) for k in range(n))
    if size > safety:
        err = CFLError(f"rough increment bound {size:.3g} exceeds {safety}")
        err.ratio = size / safety
        raise err
    first = [model.rough_op(vh, l) for l in range(n)]
    out = vh.copy()
    for k in range(n):
        out = out + dz[k] * first[k]
        for l in range(n):
            if zz[l, k] != 0.0:
                out = out + zz[l, k] * model.rough_op(first[l], k)
    return out


ROUGH_SCHEMES = ("exponential", "davie")


@dataclass
class StepStages:
    """Spectral states inside one Strang step (used for particle advection)."""

    start: np.ndarray
    after_drift: np.ndarray
    before_drift: np.ndarray
    end: np.ndarray


def step_rough_pde(vh, interval, path, model, scheme="exponential", return_stages=False, rough_safety=ROUGH_SAFETY):
    """Advance spectral state ``vh`` across grid interval ``interval``."""
    t0, t1 = path.times[interval], path.times[interval + 1]
    h = 0.5 * (t1 - t0)
    a = _rk4(model, vh, h)
    if scheme == "exponential":
        b = rough_exponential(model, a, path.increments[interval], path.levy_area[interval])
    elif scheme == "davie":
        b = rough_davie(model, a, path.increments[interval], path.second_level[interval], rough_safety)
    else:
        raise ValueError(f"unknown rough scheme {scheme!r}; expected one of {ROUGH_SCHEMES}")
    c = _rk4(model, b, h)
    if return_stages:
        return c, StepStages(vh, a, b, c)
    return c


def _finite(vh):
    return bool(np.all(np.isfinite(vh)))


def check_cfl(model, vh, dt, safety=CFL_SAFETY):
    """Ratio ``dt max|speed| / dx``; raises :class:`CFLError` above ``safety``."""
    ratio = dt * model.max_speed(vh) / model.sp.dx
    if ratio > safety:
        raise CFLError(
            f"CFL number {ratio:.3g} exceeds {safety}",
            suggested_steps=None,
        )
    return ratio


@dataclass
class PDERun:
    model: object
    times: np.ndarray
    states: np.ndarray
    invariants: dict
    stages: list | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)
    path: object = field(default=None, repr=False)

    @property
    def final(self):
        return self.states[-1]

    def spectral(self, i):
        return self.model.fwd(self.states[i])

    def snapshot_csv(self, filename, every=1):
        """1D: ``t, x, u``; 2D: ``t, x, y, omega``."""
        sp = self.model.sp
        with open(filename, "w") as fh:
            if self.model.dim == 1:
                fh.write("t,x,u\n")
                for i in range(0, len(self.times), every):
                    t = self.times[i]
                    for x, u in zip(sp.x, self.states[i]):
                        fh.write(f"{t:.17g},{x:.17g},{u:.17g}\n")
            else:
                fh.write("t,x,y,omega\n")
                xs = sp.x.ravel()
                ys = sp.y.ravel()
                for i in range(0, len(self.times), every):
                    t = self.times[i]
                    for x, y, w in zip(xs, ys, self.states[i].ravel()):
                        fh.write(f"{t:.17g},{x:.17g},{y:.17g},{w:.17g}\n")

    def write_binary(self, stem):
        """Row-major float64 dump of all states plus a JSON header; returns both paths."""
        data = f"{stem}.bin"
        header = f"{stem}.json"
        np.ascontiguousarray(self.states, dtype="<f8").tofile(data)
        info = {
            "model": self.model.name,
            "shape": list(self.states.shape),
            "dtype": "float64-le",
            "order": "row-major",
            "grid": {"n": self.model.n, "dim": self.model.dim, "domain": "[0, 2pi)"},
            "times": [float(t) for t in self.times],
            "driver": self.meta.get("driver", {}),
        }
        with open(header, "w") as fh:
            json.dump(info, fh, indent=2, sort_keys=True)
        return data, header

    def invariants_csv(self, filename):
        keys = list(self.invariants)
        with open(filename, "w") as fh:
            fh.write(",".join(["t"] + keys) + "\n")
            for i, t in enumerate(self.times):
                row = [f"{t:.17g}"] + [f"{self.invariants[k][i]:.17g}" for k in keys]
                fh.write(",".join(row) + "\n")


def solve_pde(
    model,
    initial,
    path,
    scheme="exponential",
    keep_stages=False,
    cfl_safety=CFL_SAFETY,
    monitor=True,
    rough_safety=ROUGH_SAFETY,
):
    """Integrate ``model`` from nodal ``initial`` over the grid of ``path``.

    Raises :class:`CFLError` before a step whose drift CFL number exceeds
    ``cfl_safety`` and :class:`NumericalAbort` on non-finite states or when the
    spectral tail holds more than 10% of the energy.
    """
    if model.n_fields != path.dim:
        raise ValueError(f"model has {model.n_fields} rough fields but driver has K={path.dim}")
    vh = model.fwd(np.asarray(initial, dtype=float))
    times = path.times
    states = np.empty((len(times),) + model.state_shape)
    states[0] = model.inv(vh)
    series = {k: [v] for k, v in model.invariants(states[0]).items()}
    stages = [] if keep_stages else None
    for i in range(path.n_intervals):
        dt = times[i + 1] - times[i]
        try:
            check_cfl(model, vh, dt, cfl_safety)
        except CFLError as err:
            speed = model.max_speed(vh)
            need = math.ceil(path.n_intervals * dt * speed / model.sp.dx / cfl_safety)
            raise CFLError(str(err), last_time=float(times[i]), suggested_steps=need) from None
        try:
            out = step_rough_pde(vh, i, path, model, scheme, keep_stages, rough_safety)
        except CFLError as err:
            # |dZ| scales like dt^alpha
            need = math.ceil(path.n_intervals * getattr(err, "ratio", 2.0) ** (1.0 / path.alpha))
            raise CFLError(str(err), last_time=float(times[i]), suggested_steps=need) from None
        if keep_stages:
            vh, st = out
            stages.append(st)
        else:
            vh = out
        if not _finite(vh):
            raise NumericalAbort(f"non-finite state in step {i}", last_time=float(times[i]))
        if monitor:
            tail = model.tail_fraction(vh)
            if tail > TAIL_ABORT:
                raise NumericalAbort(
                    f"spectral tail holds {tail:.1%} of the energy at t={times[i + 1]:g}",
                    last_time=float(times[i]),
                )
            if tail > TAIL_WARN:
                warnings.warn(f"spectral tail at {tail:.2%}: increase resolution", ResolutionWarning, stacklevel=2)
        states[i + 1] = model.inv(vh)
        for k, v in model.invariants(states[i + 1]).items():
            series[k].append(v)
    return PDERun(
        model,
        times.copy(),
        states,
        {k: np.array(v) for k, v in series.items()},
        stages,
        {"scheme": scheme, "driver": dict(path.meta)},
        path,
    )


def solve_deterministic(model, initial, times):
    """Reference solver without noise: two half-step RK4 updates per interval."""
    times = np.asarray(times, dtype=float)
    vh = model.fwd(np.asarray(initial, dtype=float))
    out = np.empty((len(times),) + model.state_shape)
    out[0] = model.inv(vh)
    for i in range(len(times) - 1):
        h = 0.5 * (times[i + 1] - times[i])
        vh = _rk4(model, _rk4(model, vh, h), h)
        out[i + 1] = model.inv(vh)
    return out


def shift_field(model, v, displacement):
    """``v(x - displacement)`` by a Fourier phase (exact for band-limited data)."""
    vh = model.sp.fwd(v)
    if model.dim == 1:
        return model.sp.inv(vh * np.exp(-1j * model.sp.k * float(displacement)))
    d = np.asarray(displacement, dtype=float)
    return model.sp.inv(vh * np.exp(-1j * (model.sp.kx * d[0] + model.sp.ky * d[1])))
