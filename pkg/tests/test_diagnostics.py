import numpy as np
import pytest

from roughflow.diagnostics import (
    MaterialLoop,
    SyntheticScalar,
    antisymmetrized,
    audit_entry,
    audit_report,
    circulation,
    corruption_study,
    euler_enstrophy_series,
    fit_order,
    kelvin_series,
    lie_chain_rule_residual,
    mollified_levels,
    particle_solver,
    relative_drift,
    wong_zakai_report,
)
from roughflow.expressions import compile_vector_field
from roughflow.fluids import Euler2D, solve_pde
from roughflow.gaussian_lift import GaussianSpec, lift_gaussian, sample_path
from roughflow.rde_flow import VectorFieldFamily, solve_flow
from roughflow.rough_core import TimeGrid, coarsen, geometricity_residual, lift_smooth
from roughflow.spectral import mesh


def _taylor_green_velocity(x):
    # psi = cos x cos y, u = (d_y psi, -d_x psi), vorticity 2 cos x cos y
    return np.stack([-np.cos(x[:, 0]) * np.sin(x[:, 1]), np.sin(x[:, 0]) * np.cos(x[:, 1])], axis=1)


def _enclosed_vorticity(radius, m=64):
    # fine polar Gauss-Legendre quadrature of int_disc 2 cos x cos y
    r, wr = np.polynomial.legendre.leggauss(m)
    r = 0.5 * radius * (r + 1)
    wr = 0.5 * radius * wr
    th = 2 * np.pi * np.arange(4 * m) / (4 * m)
    rr, tt = np.meshgrid(r, th, indexing="ij")
    f = 2 * np.cos(rr * np.cos(tt)) * np.cos(rr * np.sin(tt)) * rr
    return float(np.sum(wr[:, None] * f) * 2 * np.pi / (4 * m))


def test_zero_velocity_has_zero_circulation():
    loop = MaterialLoop.circle([0.3, 0.1], 0.5, 64)
    assert circulation(loop.points, lambda x: np.zeros_like(x)) == 0.0


@pytest.mark.parametrize("radius", [0.3, 0.8, 1.2])
def test_circulation_matches_stokes_oracle(radius):
    loop = MaterialLoop.circle([0.0, 0.0], radius, 2048)
    assert circulation(loop.points, _taylor_green_velocity) == pytest.approx(_enclosed_vorticity(radius), rel=1e-5)


def test_loop_validation():
    with pytest.raises(ValueError):
        MaterialLoop(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        MaterialLoop(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))


def test_kelvin_series_on_transported_taylor_green():
    n = 32
    xx, yy = mesh(n)
    vec = np.array([[0.4, -0.2]])
    model = Euler2D(n, np.broadcast_to(vec[:, :, None, None], (1, 2, n, n)).copy())
    p = lift_gaussian(GaussianSpec("fbm", 0.4, 1, seed=1), TimeGrid.uniform(0, 0.5, 64))
    run = solve_pde(model, 2 * np.cos(xx) * np.cos(yy), p, keep_stages=True)
    flow, circ = kelvin_series(MaterialLoop.circle([0.0, 0.0], 0.8, 128), run)
    assert relative_drift(circ) < 1e-3
    assert flow.trajectories.shape == (65, 128, 2)
    ens = euler_enstrophy_series(run)
    assert relative_drift(ens) < 1e-12


def test_fit_order_recovers_power_law():
    steps = np.array([8, 16, 32, 64])
    slope, r2 = fit_order(steps, 3.0 * steps**-2.5)
    assert slope == pytest.approx(2.5)
    assert r2 == pytest.approx(1.0)


def test_audit_entry_relative_and_absolute():
    e = audit_entry([2.0, 2.0 + 1e-7, 2.0 - 2e-7], tolerance=1e-6)
    assert e["relative_drift"] == pytest.approx(1e-7)
    assert e["pass"] is True
    z = audit_entry([0.0, 1e-15], tolerance=1e-12)
    assert z["relative_drift"] == pytest.approx(1e-15)
    rep = audit_report({"a": [1.0, 1.1], "b": [1.0, 1.0]}, {"a": 1e-3})
    assert rep["a"]["pass"] is False and rep["b"]["pass"] is None


def _lie_setup(path):
    xi = [compile_vector_field(c, 2) for c in (["sin(x2)", "0.5*cos(x1)"], ["0.3*x2", "-0.4*sin(x1)"])]
    drift, _ = compile_vector_field(["0.2*cos(t)", "-0.1*x1"], 2, with_time=True)
    fields = VectorFieldFamily(2, drift, [f for f, _ in xi], [j for _, j in xi])
    tau = SyntheticScalar.from_expression("sin(x1 + z1)*cos(x2 - z2) + t*x2", 2, 2)
    return solve_flow(fields, path, [[0.1, -0.3], [0.7, 0.4]]), tau


def test_lie_chain_rule_second_order_on_smooth_driver():
    fn = lambda t: np.stack([np.cos(2 * t), np.sin(t) + t], -1)
    steps = [16, 32, 64, 128]
    res = [lie_chain_rule_residual(*_lie_setup(lift_smooth(fn, TimeGrid.uniform(0, 1, n)))) for n in steps]
    order, _ = fit_order(steps, res)
    assert order >= 1.7


def test_mollified_levels_are_nested_interpolants():
    coarse = TimeGrid.uniform(0, 1, 4)
    fine, vals = sample_path(GaussianSpec("fbm", 0.45, 2, seed=2, fine_resolution=32), coarse)
    levels = mollified_levels(vals, fine, coarse, 2, 3, ratio=4)
    assert [p.n_intervals for p in levels] == [8, 32, 128]
    for p in levels:
        np.testing.assert_allclose(coarsen(p, coarse).values, vals[::32])
    with pytest.raises(ValueError):
        mollified_levels(vals, fine, coarse, 3, 2)


def test_wong_zakai_on_straight_line_is_exact():
    coarse = TimeGrid.uniform(0, 1, 4)
    fine = coarse.refine(64)
    vals = np.outer(fine.times, [1.0, -0.5])
    paths = mollified_levels(vals, fine, coarse, 2, 4)
    solve = particle_solver(VectorFieldFamily.constant([[1.0, 0.0], [0.3, 1.0]]), np.zeros((1, 2)), "magnus")
    report, _ = wong_zakai_report(solve, paths, coarse.times)
    assert max(report.distances) < 1e-14


def test_antisymmetrized_path_is_not_geometric_and_breaks_convergence():
    ref = lift_gaussian(GaussianSpec("fbm", 0.45, 2, seed=3), TimeGrid.uniform(0, 1, 1024))
    assert geometricity_residual(antisymmetrized(ref)) > 1e-6
    fields = VectorFieldFamily(
        2, None, *zip(*[compile_vector_field(c, 2) for c in (["sin(x2)", "0.5*cos(x1)"], ["0.3*x2", "-0.4*sin(x1)"])])
    )
    solve = particle_solver(fields, np.array([[0.2, 0.1]]), "davie")
    out = corruption_study(solve, ref, solve(ref), [TimeGrid.uniform(0, 1, n) for n in (64, 256)])
    assert out["geometric"][1] < out["geometric"][0]
    assert min(out["antisymmetrized"]) > 10 * max(out["geometric"])
