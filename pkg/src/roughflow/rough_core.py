"""Level-2 geometric rough paths sampled on a time grid.

A path stores its first level ``Z_i`` at every grid time and its second
level only on consecutive intervals ``[t_i, t_{i+1}]``.  Second-level values
over longer spans are rebuilt on demand with Chen's relation::

    zz[s, t] = zz[s, u] + zz[u, t] + dZ[s, u] (x) dZ[u, t]

Index convention: ``zz[..., i, j] = int (Z^i_r - Z^i_s) dZ^j_r``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev, legendre

from .errors import GridError, QuadratureError

logger = logging.getLogger(__name__)

DEFAULT_QUAD_ORDER = 8
DEFAULT_QUAD_TOL = 1e-10
ROUNDOFF = 1e-12


def _readonly(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sampling instants ``t_0 < ... < t_N`` (N >= 1)."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        if t.size < 2:
            raise GridError("a time grid needs at least two instants")
        if not np.all(np.isfinite(t)):
            raise GridError("grid times must be finite")
        if np.any(np.diff(t) <= 0):
            raise GridError("grid times must be strictly increasing")
        object.__setattr__(self, "times", _readonly(t))

    @classmethod
    def uniform(cls, t0, t1, steps):
        if steps < 1:
            raise GridError("need at least one step")
        return cls(np.linspace(t0, t1, int(steps) + 1))

    @property
    def n_intervals(self):
        return self.times.size - 1

    @property
    def horizon(self):
        return float(self.times[-1] - self.times[0])

    @property
    def dt(self):
        return np.diff(self.times)

    @property
    def mesh(self):
        return float(np.max(self.dt))

    def __len__(self):
        return self.times.size

    def refine(self, factor):
        """Split every interval into ``factor`` equal sub-intervals."""
        factor = int(factor)
        if factor < 1:
            raise GridError("refinement factor must be >= 1")
        t = self.times
        frac = np.arange(factor) / factor
        inner = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()
        return TimeGrid(np.append(inner, t[-1]))

    def locate(self, times, rtol=1e-12):
        """Indices of ``times`` inside this grid; raises if any is missing."""
        times = np.asarray(times, dtype=float).ravel()
        scale = max(1.0, float(np.max(np.abs(self.times))))
        idx = np.searchsorted(self.times, times)
        idx = np.clip(idx, 0, self.times.size - 1)
        lower = np.clip(idx - 1, 0, self.times.size - 1)
        pick = np.where(
            np.abs(self.times[lower] - times) < np.abs(self.times[idx] - times), lower, idx
        )
        if np.any(np.abs(self.times[pick] - times) > rtol * scale):
            raise GridError("target times are not a subset of the source grid")
        return pick


class GeometricRoughPath:
    """Grid-sampled level-2 rough path ``(Z, zz)``.

    Parameters
    ----------
    grid : TimeGrid
    values : array (N+1, K)
        First level at the grid times.
    second_level : array (N, K, K)
        ``zz`` on each consecutive interval.
    alpha : float
        Hoelder exponent (metadata only, never mutated by estimators).
    """

    def __init__(self, grid, values, second_level, alpha=1.0, meta=None):
        if not isinstance(grid, TimeGrid):
            grid = TimeGrid(grid)
        z = np.asarray(values, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        n = grid.n_intervals
        if z.shape[0] != n + 1:
            raise GridError(f"expected {n + 1} samples, got {z.shape[0]}")
        k = z.shape[1]
        zz = np.asarray(second_level, dtype=float).reshape(n, k, k)
        if not (1.0 / 3.0 < alpha <= 1.0):
            raise ValueError("alpha must lie in (1/3, 1]")
        self.grid = grid
        self.values = _readonly(z)
        self.second_level = _readonly(zz)
        self.alpha = float(alpha)
        self.meta = dict(meta or {})

    def __repr__(self):
        return (
            f"GeometricRoughPath(K={self.dim}, N={self.n_intervals}, "
            f"T=[{self.times[0]:g}, {self.times[-1]:g}], alpha={self.alpha:g})"
        )

    @property
    def times(self):
        return self.grid.times

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def n_intervals(self):
        return self.grid.n_intervals

    @property
    def increments(self):
        return np.diff(self.values, axis=0)

    @property
    def levy_area(self):
        zz = self.second_level
        return 0.5 * (zz - np.swapaxes(zz, 1, 2))

    def increment(self, i, j):
        return self.values[j] - self.values[i]

    def spans_from(self, i):
        """``zz[t_i, t_j]`` for every ``j >= i`` as an array (N+1-i, K, K).

        Left fold of Chen's relation, written as a cumulative sum.
        """
        dz = self.increments[i:]
        off = self.values[i:-1] - self.values[i]
        terms = self.second_level[i:] + off[:, :, None] * dz[:, None, :]
        out = np.zeros((dz.shape[0] + 1, self.dim, self.dim))
        np.cumsum(terms, axis=0, out=out[1:])
        return out

    def span(self, i, j):
        """Second level over ``[t_i, t_j]``; ``i > j`` gives the reversed span."""
        if i == j:
            return np.zeros((self.dim, self.dim))
        if i > j:
            fwd = self.span(j, i)
            dz = self.increment(j, i)
            return -fwd + np.outer(dz, dz)
        return self.spans_from(i)[j - i]

    def span_right_fold(self, i, j):
        """Same as :meth:`span` but associated from the right."""
        dz = self.increments[i:j]
        tail = self.values[j] - self.values[i + 1 : j + 1]
        return np.sum(self.second_level[i:j] + dz[:, :, None] * tail[:, None, :], axis=0)

    def restrict(self, i, j):
        """Sub-path on grid indices ``i..j``."""
        if not 0 <= i < j <= self.n_intervals:
            raise GridError("invalid restriction range")
        return GeometricRoughPath(
            TimeGrid(self.times[i : j + 1]),
            self.values[i : j + 1],
            self.second_level[i:j],
            self.alpha,
            self.meta,
        )

    def reversed(self):
        """Time reversal ``t -> t_0 + t_N - t``.

        Increments flip sign and the Levy area is negated; for stored
        intervals ``zz_rev = -zz + dZ (x) dZ``.
        """
        t = self.times
        new_t = t[0] + t[-1] - t[::-1]
        dz = self.increments[::-1]
        zz = self.second_level[::-1]
        zz_rev = -zz + dz[:, :, None] * dz[:, None, :]
        return GeometricRoughPath(TimeGrid(new_t), self.values[::-1], zz_rev, self.alpha, self.meta)

    def with_second_level(self, second_level, **meta):
        return GeometricRoughPath(
            self.grid, self.values, second_level, self.alpha, {**self.meta, **meta}
        )

    def with_alpha(self, alpha):
        return GeometricRoughPath(self.grid, self.values, self.second_level, alpha, self.meta)

    def __call__(self, t):
        """Piecewise-linear interpolation of the first level."""
        t = np.asarray(t, dtype=float)
        return np.stack(
            [np.interp(t, self.times, self.values[:, k]) for k in range(self.dim)], axis=-1
        )


# ---------------------------------------------------------------------------
# constructors


def _as_grid(grid):
    return grid if isinstance(grid, TimeGrid) else TimeGrid(grid)


def _eval_path(path_fn, t):
    z = np.asarray(path_fn(t), dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] != t.size and z.shape[-1] == t.size:
        z = z.T
    return z


class _PanelRule:
    """Gauss-Legendre nodes plus a Chebyshev differentiation fallback."""

    def __init__(self, order):
        self.order = order
        self.x, self.w = legendre.leggauss(order)
        deg = 2 * order
        self.cheb_x = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        vander = chebyshev.chebvander(self.cheb_x, deg)
        basis_deriv = np.stack(
            [chebyshev.chebval(self.x, chebyshev.chebder(np.eye(deg + 1)[n])) for n in range(deg + 1)],
            axis=1,
        )
        self.diff = basis_deriv @ np.linalg.inv(vander)

    def second_level(self, path_fn, derivative, a, b):
        """zz over each panel ``[a_p, b_p]``; arrays of shape (P,)."""
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * self.x[None, :]
        p, q = nodes.shape
        z_nodes = _eval_path(path_fn, nodes.ravel()).reshape(p, q, -1)
        z_start = _eval_path(path_fn, a)
        z_end = _eval_path(path_fn, b)
        if derivative is not None:
            dz_nodes = _eval_path(derivative, nodes.ravel()).reshape(p, q, -1)
        else:
            cheb_t = mid[:, None] + half[:, None] * self.cheb_x[None, :]
            z_cheb = _eval_path(path_fn, cheb_t.ravel()).reshape(p, self.cheb_x.size, -1)
            dz_nodes = np.einsum("qc,pck->pqk", self.diff, z_cheb) / half[:, None, None]
        off = z_nodes - z_start[:, None, :]
        zz = np.einsum("q,pqi,pqj->pij", self.w, off, dz_nodes) * half[:, None, None]
        return z_start, z_end, zz


def _chain(z_start, z_end, zz):
    """Merge consecutive panels (axis 1) into one span per interval (axis 0)."""
    off = z_start - z_start[:, :1]
    dz = z_end - z_start
    return np.sum(zz + off[..., :, None] * dz[..., None, :], axis=1)


def lift_smooth(
    path_fn,
    grid,
    quad_order=DEFAULT_QUAD_ORDER,
    derivative=None,
    tol=DEFAULT_QUAD_TOL,
    alpha=1.0,
    max_panels=1 << 12,
    strict=False,
):
    """Canonical lift of a differentiable path by Gauss-Legendre quadrature.

    ``path_fn`` maps an array of times (m,) to values (m, K).  Each grid
    interval is split into ``1, 2, 4, ...`` panels whose second levels are
    joined with Chen's relation until two successive panel counts agree to
    ``tol`` (relative) and the panel-level geometricity residual is below
    ``tol``.  If ``derivative`` is omitted, the velocity is obtained by
    differentiating a Chebyshev interpolant of degree ``2 * quad_order`` on
    each panel.
    """
    if quad_order < 2:
        raise ValueError("quad_order must be >= 2")
    grid = _as_grid(grid)
    rule = _PanelRule(int(quad_order))
    t = grid.times
    n = grid.n_intervals
    values = _eval_path(path_fn, t)
    k = values.shape[1]
    zz = np.full((n, k, k), np.nan)
    prev = None
    pending = np.arange(n)
    panels = 1
    converged = True
    while pending.size:
        frac = np.linspace(0.0, 1.0, panels + 1)
        a = t[pending, None] + np.diff(t)[pending, None] * frac[None, :-1]
        b = t[pending, None] + np.diff(t)[pending, None] * frac[None, 1:]
        zs, ze, zzp = rule.second_level(path_fn, derivative, a.ravel(), b.ravel())
        zs = zs.reshape(pending.size, panels, k)
        ze = ze.reshape(pending.size, panels, k)
        zzp = zzp.reshape(pending.size, panels, k, k)
        cur = _chain(zs, ze, zzp)
        dz = values[pending + 1] - values[pending]
        sym = 0.5 * (cur + np.swapaxes(cur, 1, 2)) - 0.5 * dz[:, :, None] * dz[:, None, :]
        scale = 1.0 + np.max(np.abs(cur), axis=(1, 2))
        geo_ok = np.max(np.abs(sym), axis=(1, 2)) <= tol * scale
        if prev is not None:
            change_ok = np.max(np.abs(cur - prev), axis=(1, 2)) <= tol * scale
        else:
            change_ok = np.zeros(pending.size, dtype=bool)
        done = geo_ok & change_ok
        zz[pending] = cur
        if panels >= max_panels:
            converged = False
            break
        pending = pending[~done]
        prev = cur[~done]
        panels *= 2
    if not converged:
        msg = f"lift_smooth: quadrature did not converge on {pending.size} interval(s)"
        if strict:
            raise QuadratureError(msg)
        logger.warning(msg)
    path = GeometricRoughPath(grid, values, zz, alpha, {"constructor": "lift_smooth"})
    path.meta["quadrature_converged"] = converged
    return path


def lift_piecewise_linear(samples, grid=None, alpha=1.0):
    """Lift of the piecewise-linear interpolant of ``samples`` (N+1, K).

    On each linear segment ``zz = 1/2 dZ (x) dZ`` exactly.  ``grid``
    defaults to ``0, 1, ..., N``.
    """
    z = np.asarray(samples, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] < 2:
        raise GridError("need at least two samples")
    grid = TimeGrid(np.arange(z.shape[0], dtype=float)) if grid is None else _as_grid(grid)
    dz = np.diff(z, axis=0)
    zz = 0.5 * dz[:, :, None] * dz[:, None, :]
    return GeometricRoughPath(grid, z, zz, alpha, {"constructor": "lift_piecewise_linear"})


def coarsen(path, target):
    """Restrict a path to a sub-grid, merging second levels with Chen.

    ``target`` is a TimeGrid, an array of times, or an integer index array.
    """
    if isinstance(target, TimeGrid):
        idx = path.grid.locate(target.times)
    else:
        arr = np.asarray(target)
        idx = arr.astype(int) if np.issubdtype(arr.dtype, np.integer) else path.grid.locate(arr)
    idx = np.asarray(idx, dtype=int)
    if idx.size < 2 or np.any(np.diff(idx) <= 0):
        raise GridError("target grid must be strictly increasing with >= 2 points")
    if idx[0] < 0 or idx[-1] > path.n_intervals:
        raise GridError("target indices out of range")
    z = path.values
    dz = path.increments
    lo, hi = idx[0], idx[-1]
    owner = np.searchsorted(idx, np.arange(lo, hi), side="right") - 1
    off = z[lo:hi] - z[idx[owner]]
    terms = path.second_level[lo:hi] + off[:, :, None] * dz[lo:hi, None, :]
    zz = np.add.reduceat(terms, idx[:-1] - lo, axis=0)
    return GeometricRoughPath(
        TimeGrid(path.times[idx]), z[idx], zz, path.alpha, {**path.meta, "coarsened": True}
    )


# ---------------------------------------------------------------------------
# identities and seminorms


def _check_indices(n_points, max_points):
    if n_points <= max_points:
        return np.arange(n_points)
    return np.unique(np.linspace(0, n_points - 1, max_points).round().astype(int))


def chen_residual(path, spans=None, max_points=48):
    """Max-norm Chen defect ``|zz_st - zz_su - zz_ut - dZ_su (x) dZ_ut|``.

    Triples are taken over (a subset of at most ``max_points``) grid indices.
    By default span values come from the left-fold reconstruction and are also
    compared with the right-fold association.  ``spans`` may supply explicit
    span values instead, as a callable ``(i, j) -> (K, K)`` or a dense array
    indexed ``[i, j]``.
    """
    idx = _check_indices(path.n_intervals + 1, max_points)
    m = idx.size
    k = path.dim
    table = np.zeros((m, m, k, k))
    assoc = 0.0
    for a, i in enumerate(idx):
        if spans is None:
            row = path.spans_from(i)
            table[a, a:] = row[idx[a:] - i]
            for c in range(a + 1, m):
                right = path.span_right_fold(i, idx[c])
                assoc = max(assoc, float(np.max(np.abs(right - table[a, c]))))
        else:
            for c in range(a + 1, m):
                j = idx[c]
                table[a, c] = spans(i, j) if callable(spans) else np.asarray(spans)[i, j]
    z = path.values[idx]
    worst = assoc
    for b in range(1, m - 1):
        left = table[: b, b]  # (a<b)
        right = table[b, b + 1 :]  # (c>b)
        whole = table[:b, b + 1 :]
        dz1 = z[b] - z[:b]
        dz2 = z[b + 1 :] - z[b]
        defect = whole - left[:, None] - right[None, :] - dz1[:, None, :, None] * dz2[None, :, None, :]
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def geometricity_residual(path):
    """Max over stored intervals of ``|Sym(zz) - 1/2 dZ (x) dZ|``."""
    zz = path.second_level
    dz = path.increments
    sym = 0.5 * (zz + np.swapaxes(zz, 1, 2))
    return float(np.max(np.abs(sym - 0.5 * dz[:, :, None] * dz[:, None, :]), initial=0.0))


def holder_estimate(path, alpha=None):
    """Empirical seminorms ``([Z]_alpha, [zz]_{2 alpha})`` over all grid pairs.

    Costs O(N^2 K^2); norms are Euclidean (level 1) and Frobenius (level 2).
    """
    alpha = path.alpha if alpha is None else alpha
    t = path.times
    z = path.values
    best1 = 0.0
    best2 = 0.0
    for i in range(path.n_intervals):
        gap = t[i + 1 :] - t[i]
        d1 = np.linalg.norm(z[i + 1 :] - z[i], axis=1)
        d2 = np.linalg.norm(path.spans_from(i)[1:], axis=(1, 2))
        best1 = max(best1, float(np.max(d1 / gap**alpha)))
        best2 = max(best2, float(np.max(d2 / gap ** (2 * alpha))))
    return best1, best2


def true_roughness_score(path, alpha=None):
    """``max_{t > s} |dZ_st| / |t - s|^{2 alpha}`` for each grid time s < t_N.

    A diagnostic only: blow-up of these scores under refinement is evidence of
    true roughness, boundedness is evidence against it.
    """
    alpha = path.alpha if alpha is None else alpha
    t = path.times
    z = path.values
    out = np.zeros(path.n_intervals)
    for i in range(path.n_intervals):
        gap = t[i + 1 :] - t[i]
        out[i] = np.max(np.linalg.norm(z[i + 1 :] - z[i], axis=1) / gap ** (2 * alpha))
    return out


# ---------------------------------------------------------------------------
# CSV round trip


def write_csv(path, level1_file, level2_file):
    """Write ``t, Z_1..Z_K`` and ``i, ZZ_11..ZZ_KK`` with 17 significant digits."""
    k = path.dim
    with open(level1_file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"Z_{a + 1}" for a in range(k)])
        for t, row in zip(path.times, path.values):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
    with open(level2_file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i"] + [f"ZZ_{a + 1}{b + 1}" for a in range(k) for b in range(k)])
        for i, m in enumerate(path.second_level):
            w.writerow([str(i)] + [f"{v:.17g}" for v in m.ravel()])
    return Path(level1_file), Path(level2_file)


def read_csv(level1_file, level2_file, alpha=1.0):
    lvl1 = np.loadtxt(level1_file, delimiter=",", skiprows=1, ndmin=2)
    lvl2 = np.loadtxt(level2_file, delimiter=",", skiprows=1, ndmin=2)
    k = lvl1.shape[1] - 1
    order = np.argsort(lvl2[:, 0])
    zz = lvl2[order, 1:].reshape(-1, k, k)
    return GeometricRoughPath(TimeGrid(lvl1[:, 0]), lvl1[:, 1:], zz, alpha, {"source": "csv"})
