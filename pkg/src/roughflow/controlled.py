"""Controlled rough paths and compensated Riemann-sum integration.

Shapes: a controlled path with values in a finite-dimensional space of shape
``vshape`` stores ``Y`` as (N+1, *vshape) and the Gubinelli derivative ``Y'``
as (N+1, *vshape, K), so that ``dY ~ Y' dZ`` reads
``dY[..., ] ~ sum_l Y'[..., l] dZ^l``.  The infinite-dimensional seminorm
families of the general theory are replaced by plain finite-dimensional norms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridError
from .rough_core import GeometricRoughPath


def _same_grid(a, b):
    if a is b:
        return
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise GridError("controlled paths live on different grids")


@dataclass(frozen=True)
class ControlledPath:
    base: GeometricRoughPath
    values: np.ndarray
    derivative: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.values, dtype=float)
        yp = np.asarray(self.derivative, dtype=float)
        n = self.base.n_intervals + 1
        if y.shape[0] != n:
            raise GridError(f"expected {n} values, got {y.shape[0]}")
        if yp.shape != y.shape + (self.base.dim,):
            raise ValueError(f"derivative shape {yp.shape} does not match {y.shape + (self.base.dim,)}")
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "derivative", yp)

    @classmethod
    def of_path(cls, path):
        """``Z`` itself, with ``Z' = id``."""
        k = path.dim
        return cls(path, path.values.copy(), np.broadcast_to(np.eye(k), (path.n_intervals + 1, k, k)))

    @classmethod
    def from_values(cls, path, values, derivative=None):
        """Wrap ``values``; a missing derivative means ``Y' = 0``."""
        y = np.asarray(values, dtype=float)
        if derivative is None:
            derivative = np.zeros(y.shape + (path.dim,))
        return cls(path, y, derivative)

    @property
    def vshape(self):
        return self.values.shape[1:]

    def remainder(self, i, j):
        """``R_st = dY_st - Y'_s dZ_st`` for grid indices ``i < j``."""
        dz = self.base.increment(i, j)
        return self.values[j] - self.values[i] - self.derivative[i] @ dz


def remainder_seminorm(y, alpha=None, window=0.25):
    """Empirical ``[R^Y]_{2 alpha}`` over pairs with ``|t - s| <= window * T``."""
    path = y.base
    alpha = path.alpha if alpha is None else alpha
    t = path.times
    z = path.values
    horizon = window * path.grid.horizon
    vals = y.values.reshape(len(t), -1)
    der = y.derivative.reshape(len(t), -1, path.dim)
    best = 0.0
    for i in range(path.n_intervals):
        stop = np.searchsorted(t, t[i] + horizon * (1 + 1e-12), side="right")
        stop = max(stop, i + 2)
        gap = t[i + 1 : stop] - t[i]
        dz = z[i + 1 : stop] - z[i]
        r = vals[i + 1 : stop] - vals[i] - dz @ der[i].T
        best = max(best, float(np.max(np.linalg.norm(r, axis=1) / gap ** (2 * alpha))))
    return best


def _cumulative(germs, n):
    out = np.zeros((n + 1,) + germs.shape[1:])
    np.cumsum(germs, axis=0, out=out[1:])
    return out


def rough_integral(y):
    """``int Y dZ`` as a controlled path with derivative ``Y``.

    Left-point compensated sum of the germ ``Y_s dZ_st + Y'_s zz_st``, where
    ``Y`` takes values in ``vshape = (..., K)``; the last axis pairs with dZ.
    """
    path = y.base
    k = path.dim
    if y.vshape[-1:] != (k,):
        raise ValueError(f"integrand must end in an axis of size K={k}")
    dz = path.increments
    zz = path.second_level
    first = np.einsum("n...k,nk->n...", y.values[:-1], dz)
    # Y'[..., k, l] = dY^k/dZ^l pairs with zz^{lk}
    second = np.einsum("n...kl,nlk->n...", y.derivative[:-1], zz)
    total = _cumulative(first + second, path.n_intervals)
    return ControlledPath(path, total, y.values.copy())


def _pairing(bilinear):
    return bilinear if bilinear is not None else (lambda a, b: a * b)


def integral_controlled_vs_controlled(x, y, bilinear=None):
    """Cumulative values of ``int B(X, dY)`` on the grid.

    Germ: ``B(X_s, dY_st) + sum_{k,l} B(X'_s[k], Y'_s[l]) zz_st^{kl}``.  ``B``
    must broadcast over a leading grid axis; the default is the elementwise
    product.
    """
    _same_grid(x.base, y.base)
    b = _pairing(bilinear)
    path = x.base
    zz = path.second_level
    dy = np.diff(y.values, axis=0)
    germ = np.asarray(b(x.values[:-1], dy), dtype=float)
    k = path.dim
    for i in range(k):
        for j in range(k):
            term = np.asarray(b(x.derivative[:-1, ..., i], y.derivative[:-1, ..., j]), dtype=float)
            germ = germ + term * zz[:, i, j].reshape((-1,) + (1,) * (term.ndim - 1))
    return _cumulative(germ, path.n_intervals)


def compose_with_map(y, func, jacobian):
    """``Phi(Y)`` with derivative ``DPhi(Y) Y'``.

    ``func`` maps a value of shape ``vshape`` to ``wshape``; ``jacobian``
    returns an array (*wshape, *vshape).
    """
    vals = []
    ders = []
    nv = len(y.vshape)
    for yi, ypi in zip(y.values, y.derivative):
        vals.append(np.asarray(func(yi), dtype=float))
        jac = np.asarray(jacobian(yi), dtype=float)
        ders.append(np.tensordot(jac, ypi, axes=(list(range(jac.ndim - nv, jac.ndim)), list(range(nv)))))
    return ControlledPath(y.base, np.array(vals), np.array(ders))


def product(x, y, bilinear=None):
    """``B(X, Y)`` with Leibniz derivative ``B(X', Y) + B(X, Y')``."""
    _same_grid(x.base, y.base)
    b = _pairing(bilinear)
    vals = np.asarray(b(x.values, y.values), dtype=float)
    ders = np.stack(
        [
            np.asarray(b(x.derivative[..., k], y.values), dtype=float)
            + np.asarray(b(x.values, y.derivative[..., k]), dtype=float)
            for k in range(x.base.dim)
        ],
        axis=-1,
    )
    return ControlledPath(x.base, vals, ders)


def riemann_integral(values, times):
    """Trapezoidal cumulative ``int f dt`` on the grid (for drift terms)."""
    values = np.asarray(values, dtype=float)
    dt = np.diff(times).reshape((-1,) + (1,) * (values.ndim - 1))
    return _cumulative(0.5 * (values[1:] + values[:-1]) * dt, len(times) - 1)
