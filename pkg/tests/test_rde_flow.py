import numpy as np
import pytest

from roughflow.errors import GridError, NumericalAbort
from roughflow.expressions import compile_vector_field
from roughflow.gaussian_lift import GaussianSpec, lift_gaussian
from roughflow.rde_flow import (
    VectorFieldFamily,
    advect_scalar,
    davie_increment,
    flow_composition_residual,
    inverse_flow,
    magnus_increment,
    solve_flow,
)
from roughflow.rough_core import TimeGrid, coarsen, lift_piecewise_linear, lift_smooth

SCHEMES = ["davie", "magnus"]


def _circle(n=128):
    return lift_smooth(lambda t: np.stack([np.cos(t), np.sin(t)], -1), TimeGrid.uniform(0, 2 * np.pi, n))


def _family():
    fields = [compile_vector_field(c, 2) for c in (["sin(x2)", "0.5*cos(x1)"], ["0.3*x2", "-0.4*sin(x1)"])]
    return VectorFieldFamily(2, None, [f for f, _ in fields], [j for _, j in fields])


@pytest.mark.parametrize("scheme", SCHEMES)
def test_area_fields_gain_pi_on_the_circle(scheme):
    flow = solve_flow(VectorFieldFamily.area(), _circle(), [[1.0, 0.0, 0.0]], scheme=scheme)
    assert flow.final[0, 2] == pytest.approx(np.pi, abs=1e-10)
    np.testing.assert_allclose(flow.final[0, :2], [1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_constant_fields_translate_by_the_increment(scheme):
    p = lift_gaussian(GaussianSpec("fbm", 0.4, 2, seed=1), TimeGrid.uniform(0, 1, 16))
    vecs = np.array([[1.0, 0.5], [-0.2, 2.0]])
    flow = solve_flow(VectorFieldFamily.constant(vecs), p, [[0.3, 0.4]], scheme=scheme)
    np.testing.assert_allclose(flow.trajectories[:, 0], np.array([0.3, 0.4]) + (p.values - p.values[0]) @ vecs, atol=1e-12)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_commuting_linear_fields_are_exponential(scheme):
    a = np.array([[0.0, -1.0], [1.0, 0.0]])
    b = np.eye(2) * 0.3
    p = lift_gaussian(GaussianSpec("fbm", 0.45, 2, seed=2), TimeGrid.uniform(0, 1, 512))
    flow = solve_flow(VectorFieldFamily.linear([a, b]), p, [[1.0, 0.0]], scheme=scheme, ode_substeps=8)
    dz = p.values[-1] - p.values[0]
    th, s = dz
    expect = np.exp(0.3 * s) * np.array([np.cos(th), np.sin(th)])
    tol = 1e-8 if scheme == "magnus" else 5e-2
    np.testing.assert_allclose(flow.final[0], expect, atol=tol)


def test_davie_and_magnus_agree_to_second_order():
    x = np.array([[0.2, -0.1]])
    dz = np.array([1e-2, -2e-2])
    zz = 0.5 * np.outer(dz, dz) + np.array([[0, 3e-5], [-3e-5, 0]])
    area = 0.5 * (zz - zz.T)
    d = davie_increment(x, dz, zz, _family())
    m = magnus_increment(x, dz, area, _family())
    assert np.max(np.abs(d - m)) < 1e-5


def test_jacobians_match_finite_differences():
    assert _family().check_jacobians(np.random.default_rng(0).standard_normal((5, 2))) < 1e-6


def test_bracket_of_constant_fields_vanishes():
    fam = VectorFieldFamily.constant([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(fam.bracket(np.zeros((3, 2)), 0, 1), 0.0)


def test_area_bracket_is_vertical():
    fam = VectorFieldFamily.area()
    np.testing.assert_allclose(fam.bracket(np.zeros((1, 3)), 0, 1), [[0.0, 0.0, 1.0]])


@pytest.mark.parametrize("scheme", SCHEMES)
def test_flow_composition_is_third_order(scheme):
    p = lift_gaussian(GaussianSpec("fbm", 0.45, 2, seed=4), TimeGrid.uniform(0, 1, 256))
    flow = solve_flow(_family(), p, [[0.1, 0.2]], scheme=scheme)
    probes = np.array([[0.1, 0.2], [-0.5, 0.4]])
    big = flow_composition_residual(flow, 0, 32, 64, probes)
    small = flow_composition_residual(flow, 0, 4, 8, probes)
    assert small < big


@pytest.mark.parametrize("scheme", SCHEMES)
def test_inverse_flow_undoes_the_flow(scheme):
    p = lift_gaussian(GaussianSpec("fbm", 0.45, 2, seed=5), TimeGrid.uniform(0, 1, 64))
    x0 = np.array([[0.1, 0.2], [0.7, -0.3]])
    flow = solve_flow(_family(), p, x0, scheme=scheme)
    back = inverse_flow(flow.fields, p, flow.final, p.n_intervals, scheme)
    assert np.max(np.abs(back - x0)) < 1e-2
    adv = advect_scalar(lambda y: np.sin(y[:, 0]) + y[:, 1], flow, upto=8)
    assert adv.values.shape == (9, 2)


def test_torus_wrap_only_at_output(tmp_path):
    fam = VectorFieldFamily.constant([[1.0, 0.0]], periods=2 * np.pi)
    p = lift_piecewise_linear(np.array([[0.0], [10.0]]))
    flow = solve_flow(fam, p, [[0.0, 0.0]])
    assert flow.final[0, 0] == pytest.approx(10.0)
    assert flow.wrapped()[-1, 0, 0] == pytest.approx(10.0 - 2 * np.pi)
    flow.to_csv(tmp_path / "traj.csv")
    header, *rows = (tmp_path / "traj.csv").read_text().splitlines()
    assert header == "particle_id,t,x_1,x_2"
    assert len(rows) == 2


def test_drift_enters_by_splitting():
    drift = lambda t, x: np.ones_like(x)
    fam = VectorFieldFamily(1, drift, [lambda x: np.zeros_like(x)], [lambda x: np.zeros((x.shape[0], 1, 1))])
    p = lift_piecewise_linear(np.zeros((5, 1)), TimeGrid.uniform(0, 2, 4))
    for scheme in SCHEMES:
        assert solve_flow(fam, p, [[0.0]], scheme).final[0, 0] == pytest.approx(2.0)


def test_dimension_checks():
    p = lift_piecewise_linear(np.zeros((3, 1)))
    with pytest.raises(GridError):
        solve_flow(VectorFieldFamily.area(), p, [[0.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        solve_flow(VectorFieldFamily.constant([[1.0, 0.0]]), p, [[0.0, 0.0, 0.0]])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_aborts():
    fam = VectorFieldFamily(1, None, [lambda x: x**2], [lambda x: (2 * x)[:, :, None]])
    p = lift_piecewise_linear(np.linspace(0, 50, 11)[:, None])
    with pytest.raises(NumericalAbort):
        solve_flow(fam, p, [[1.0]], "davie")


def test_coarsened_driver_gives_consistent_solutions():
    fine = lift_gaussian(GaussianSpec("fbm", 0.45, 2, seed=6), TimeGrid.uniform(0, 1, 1024))
    errs = []
    ref = solve_flow(_family(), fine, [[0.1, 0.2]], "magnus").final
    for n in (32, 128):
        errs.append(np.max(np.abs(solve_flow(_family(), coarsen(fine, TimeGrid.uniform(0, 1, n)), [[0.1, 0.2]], "magnus").final - ref)))
    assert errs[1] < errs[0]
