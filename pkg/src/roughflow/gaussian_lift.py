"""Brownian and fractional Brownian drivers lifted to geometric rough paths.

Samples are exact-covariance Gaussian vectors.  On uniform grids starting at
zero, fractional Gaussian noise increments come from the circulant embedding
of their Toeplitz covariance (Davies-Harte, O(n log n)).  If the embedding is
not nonnegative the Durbin-Levinson recursion (Hosking's method) applies the
Toeplitz Cholesky factor instead.  Any other grid, or a user covariance, uses a
dense Cholesky factorization with escalating diagonal jitter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import FactorizationError
from .rough_core import TimeGrid, coarsen, lift_piecewise_linear

logger = logging.getLogger(__name__)

JITTERS = (0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10)
DEFAULT_FINE_RESOLUTION = 64
STOCHASTIC_ALPHA = 0.4


@dataclass(frozen=True)
class GaussianSpec:
    kind: str = "fbm"
    hurst: float = 0.5
    dim: int = 1
    seed: int = 0
    fine_resolution: int = DEFAULT_FINE_RESOLUTION

    def __post_init__(self):
        if self.kind not in ("brownian", "fbm"):
            raise ValueError(f"unknown driver kind {self.kind!r}")
        if self.kind == "brownian":
            object.__setattr__(self, "hurst", 0.5)
        if not (1.0 / 3.0 < self.hurst <= 1.0):
            raise ValueError("hurst must lie in (1/3, 1]")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.fine_resolution < 1:
            raise ValueError("fine_resolution must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_mapping(cls, block):
        block = dict(block)
        if "H" in block:
            block["hurst"] = block.pop("H")
        if "K" in block:
            block["dim"] = block.pop("K")
        return cls(**block)


def fbm_covariance(s, t, hurst):
    """``R(s, t) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2`` (broadcasting)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("fBm covariance is defined for non-negative times")
    if not 0.0 < hurst <= 1.0:
        raise ValueError("hurst must lie in (0, 1]")
    h2 = 2.0 * hurst
    out = 0.5 * (s**h2 + t**h2 - np.abs(t - s) ** h2)
    return out[()] if out.ndim == 0 else out


def covariance_matrix(times, hurst=None, covariance=None):
    """Symmetric covariance matrix of the process at ``times``."""
    times = np.asarray(times, dtype=float)
    cov = covariance or (lambda s, t: fbm_covariance(s, t, hurst))
    r = cov(times[:, None], times[None, :])
    return 0.5 * (r + r.T)


def cholesky_with_jitter(r, jitters=JITTERS):
    """Lower Cholesky factor of ``r + eps * mean(diag) * I``, escalating eps."""
    scale = float(np.mean(np.diag(r))) or 1.0
    eye = np.eye(r.shape[0])
    for eps in jitters:
        try:
            factor = np.linalg.cholesky(r + eps * scale * eye)
        except np.linalg.LinAlgError:
            continue
        if eps:
            logger.info("covariance factorized with jitter %.1e", eps)
        return factor
    cond = float(np.linalg.cond(r))
    raise FactorizationError(
        f"covariance not positive definite after jitter {jitters[-1]:.0e} "
        f"(condition estimate {cond:.3e})",
        condition=cond,
    )


def fgn_autocovariance(n, hurst):
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)


def _hosking(gamma, noise):
    """Innovations form of the Toeplitz Cholesky factor applied to ``noise``.

    ``noise`` has shape (K, n); returns correlated samples of the same shape.
    Returns None if the prediction variance degenerates.
    """
    k, n = noise.shape
    out = np.empty_like(noise)
    phi = np.zeros(n)
    v = gamma[0]
    out[:, 0] = np.sqrt(v) * noise[:, 0]
    for i in range(1, n):
        head = phi[: i - 1]
        kappa = (gamma[i] - head @ gamma[i - 1 : 0 : -1]) / v
        phi[: i - 1] = head - kappa * head[::-1]
        phi[i - 1] = kappa
        v = v * (1.0 - kappa * kappa)
        if not v > 0:
            return None
        out[:, i] = out[:, i - 1 :: -1] @ phi[:i] + np.sqrt(v) * noise[:, i]
    return out


def circulant_fgn(n, hurst, noise):
    """Unit-step fGn of length ``n`` by circulant embedding.

    ``noise`` is standard normal of shape (K, 2, 2n) (real and imaginary
    parts).  Returns (K, n), or None if the embedding has a negative
    eigenvalue.
    """
    gamma = fgn_autocovariance(n + 1, hurst)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    m = row.size
    lam = np.fft.fft(row).real
    if np.min(lam) < -1e-10 * np.max(lam):
        return None
    scale = np.sqrt(np.clip(lam, 0.0, None) / m)
    out = np.fft.fft(scale * (noise[:, 0] + 1j * noise[:, 1]), axis=-1)
    return out.real[:, :n]


def _is_uniform(t):
    d = np.diff(t)
    return np.allclose(d, d[0], rtol=1e-12, atol=0.0)


def sample_values(times, hurst, noise, covariance=None):
    """Correlated values at ``times`` from standard normal ``noise``.

    ``noise`` is (K, n) for the triangular factorizations, n the number of
    nonzero times.  A (K, 2, 2n) array selects the circulant route on uniform
    grids; its leading (K, n) block feeds the fallbacks.
    """
    noise = np.asarray(noise, dtype=float)
    extended = noise.ndim == 3
    flat = noise[:, 0, :] if extended else noise
    times = np.asarray(times, dtype=float)
    k = noise.shape[0]
    out = np.zeros((times.size, k))
    if covariance is None and hurst == 1.0:
        # perfectly correlated increments: a straight line through the origin
        return times[:, None] * flat[None, :, 0]
    active = times > 0 if covariance is None else np.ones(times.size, dtype=bool)
    t_act = times[active]
    if t_act.size == 0:
        return out
    if covariance is None and times[0] == 0.0 and _is_uniform(times):
        h = times[1] - times[0]
        n = t_act.size
        if hurst == 0.5:
            inc = flat[:, :n] * np.sqrt(h)
        else:
            inc = circulant_fgn(n, hurst, noise) if extended else None
            if inc is None:
                inc = _hosking(fgn_autocovariance(n, hurst), flat[:, :n])
            if inc is not None:
                inc = inc * h**hurst
        if inc is not None:
            out[1:] = np.cumsum(inc, axis=1).T
            return out
        logger.info("Durbin-Levinson degenerated; falling back to dense factorization")
    factor = cholesky_with_jitter(covariance_matrix(t_act, hurst, covariance))
    out[active] = factor @ flat[:, : t_act.size].T
    return out


def sample_path(spec, grid, covariance=None):
    """Exact-covariance samples on the dyadic fine grid of ``grid``.

    Returns ``(fine_grid, values)`` with values of shape (N_fine + 1, K).  The
    fine grid splits each interval of ``grid`` into ``spec.fine_resolution``
    equal sub-steps.  ``covariance`` optionally replaces the fBm kernel.
    """
    grid = grid if isinstance(grid, TimeGrid) else TimeGrid(grid)
    fine = grid.refine(spec.fine_resolution)
    rng = np.random.default_rng(int(spec.seed))
    n_active = int(np.sum(fine.times > 0)) if covariance is None else len(fine)
    if covariance is None:
        noise = rng.standard_normal((spec.dim, 2, 2 * max(n_active, 1)))
    else:
        noise = rng.standard_normal((spec.dim, max(n_active, 1)))
    return fine, sample_values(fine.times, spec.hurst, noise, covariance)


def lift_gaussian(spec, grid, alpha=STOCHASTIC_ALPHA, covariance=None):
    """Piecewise-linear lift on the fine grid, coarsened back onto ``grid``."""
    grid = grid if isinstance(grid, TimeGrid) else TimeGrid(grid)
    fine, values = sample_path(spec, grid, covariance)
    path = coarsen(lift_piecewise_linear(values, fine, alpha=alpha), grid)
    path.meta.update(
        constructor="lift_gaussian",
        kind=spec.kind,
        hurst=spec.hurst,
        seed=int(spec.seed),
        fine_resolution=spec.fine_resolution,
    )
    return path


def lift_refinement_sequence(spec, grid, levels, alpha=STOCHASTIC_ALPHA):
    """Lifts of one realization at fine resolutions ``r, 2r, ..., r 2^(L-1)``.

    The realization is drawn once at the finest resolution; coarser levels see
    its values at the coarser dyadic points, so each finer level adds a bridge
    interpolation of the same path.
    """
    grid = grid if isinstance(grid, TimeGrid) else TimeGrid(grid)
    top = spec.fine_resolution * 2 ** (levels - 1)
    fine, values = sample_path(replace(spec, fine_resolution=top), grid)
    out = []
    for lev in range(levels):
        stride = 2 ** (levels - 1 - lev)
        sub = lift_piecewise_linear(values[::stride], TimeGrid(fine.times[::stride]), alpha)
        out.append(coarsen(sub, grid))
    return out


def increment_variance(tau, covariance, t=0.0):
    """``sigma^2(tau) = E|Z_{t+tau} - Z_t|^2`` for a scalar covariance kernel."""
    tau = np.asarray(tau, dtype=float)
    return covariance(t, t) + covariance(t + tau, t + tau) - 2.0 * covariance(t, t + tau)


def admissibility_report(covariance, q, taus=None, t=0.0):
    """Diagnostic (not a gate) for ``sigma^2(tau) <= C |tau|^{1/q}``.

    Reports the smallest admissible constant on the probe lags together with
    monotonicity and concavity flags of ``sigma^2``.
    """
    if taus is None:
        taus = np.geomspace(1e-4, 1e-1, 25)
    taus = np.asarray(taus, dtype=float)
    sig = increment_variance(taus, covariance, t)
    d1 = np.diff(sig)
    slopes = d1 / np.diff(taus)
    return {
        "q": float(q),
        "constant": float(np.max(sig / taus ** (1.0 / q))),
        "nondecreasing": bool(np.all(d1 >= -1e-15)),
        "concave": bool(np.all(np.diff(slopes) <= 1e-12)) if slopes.size > 1 else True,
        "taus": taus.tolist(),
        "sigma2": sig.tolist(),
    }
