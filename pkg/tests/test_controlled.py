import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughflow.controlled import (
    ControlledPath,
    compose_with_map,
    integral_controlled_vs_controlled,
    product,
    remainder_seminorm,
    riemann_integral,
    rough_integral,
)
from roughflow.errors import GridError
from roughflow.gaussian_lift import GaussianSpec, lift_gaussian
from roughflow.rough_core import TimeGrid, lift_piecewise_linear, lift_smooth


def _fbm(k=2, n=64, seed=0):
    return lift_gaussian(GaussianSpec("fbm", 0.4, k, seed=seed), TimeGrid.uniform(0, 1, n))


def _coordinate_integrand(p):
    """``Y^{(i,j),k} = (Z^i - Z^i_0) delta_jk`` so that ``int Y dZ = int Z^i dZ^j``."""
    k = p.dim
    eye = np.eye(k)
    vals = np.einsum("ni,jk->nijk", p.values - p.values[0], eye)
    der = np.broadcast_to(np.einsum("il,jk->ijkl", eye, eye), vals.shape + (k,))
    return ControlledPath(p, vals, der)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_iterated_integral_recovers_second_level(seed):
    p = _fbm(2, 32, seed)
    out = rough_integral(_coordinate_integrand(p)).values
    np.testing.assert_allclose(out[-1], p.span(0, p.n_intervals), atol=1e-12)
    # diagonal: int Z^i dZ^i = (dZ^i)^2 / 2 at every grid time
    diag = np.diagonal(out, axis1=1, axis2=2)
    np.testing.assert_allclose(diag, 0.5 * (p.values - p.values[0]) ** 2, atol=1e-12)


def test_circle_integral_is_zero():
    p = lift_smooth(lambda t: np.stack([np.cos(t), np.sin(t)], -1), TimeGrid.uniform(0, 2 * np.pi, 64))
    z = ControlledPath.of_path(p)
    res = rough_integral(z)
    np.testing.assert_allclose(res.values[-1], 0.0, atol=1e-12)


def test_integrand_axis_mismatch():
    p = _fbm(2, 8)
    with pytest.raises(ValueError):
        rough_integral(ControlledPath.from_values(p, np.zeros((9, 3))))


def test_shape_checks():
    p = _fbm(2, 8)
    with pytest.raises(GridError):
        ControlledPath.from_values(p, np.zeros((5, 2)))
    with pytest.raises(ValueError):
        ControlledPath(p, np.zeros((9, 2)), np.zeros((9, 2, 3)))


def test_remainder_of_path_itself_vanishes():
    p = _fbm(2, 32)
    z = ControlledPath.of_path(p)
    np.testing.assert_allclose(z.remainder(3, 17), 0.0, atol=1e-14)
    assert remainder_seminorm(z) < 1e-12


def test_compose_and_product_derivatives():
    p = lift_piecewise_linear(np.linspace(0, 1, 5)[:, None], TimeGrid.uniform(0, 1, 4))
    z = ControlledPath.of_path(p)
    sq = compose_with_map(z, lambda y: y**2, lambda y: np.diag(2 * y))
    np.testing.assert_allclose(sq.derivative[:, 0, 0], 2 * p.values[:, 0])
    pr = product(z, z)
    np.testing.assert_allclose(pr.values, sq.values)
    np.testing.assert_allclose(pr.derivative, sq.derivative)


def _parts_defect(p):
    z = ControlledPath.of_path(p)
    x = compose_with_map(z, lambda v: np.array([np.sin(v[0])]), lambda v: np.array([[np.cos(v[0]), 0.0]]))
    y = compose_with_map(z, lambda v: np.array([v[1] ** 2]), lambda v: np.array([[0.0, 2 * v[1]]]))
    lhs = integral_controlled_vs_controlled(x, y) + integral_controlled_vs_controlled(y, x)
    return float(np.max(np.abs(lhs - (x.values * y.values - x.values[0] * y.values[0]))))


def test_integration_by_parts_defect_vanishes_under_refinement():
    from roughflow.rough_core import coarsen

    fine = _fbm(2, 1024, 3)
    defects = [_parts_defect(coarsen(fine, TimeGrid.uniform(0, 1, n))) for n in (16, 1024)]
    assert defects[1] < 0.5 * defects[0]


def test_riemann_integral_exact_for_linear():
    t = np.linspace(0, 2, 11)
    np.testing.assert_allclose(riemann_integral(3 * t, t)[-1], 6.0)
