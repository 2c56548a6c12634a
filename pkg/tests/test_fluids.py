import warnings

import numpy as np
import pytest

from roughflow.errors import CFLError, ConfigError, NumericalAbort
from roughflow.fluids import (
    Burgers1D,
    CamassaHolm1D,
    Euler2D,
    ResolutionWarning,
    check_cfl,
    make_model,
    shift_field,
    solve_deterministic,
    solve_pde,
    step_rough_pde,
)
from roughflow.gaussian_lift import GaussianSpec, lift_gaussian
from roughflow.rough_core import TimeGrid, lift_piecewise_linear
from roughflow.spectral import mesh


def _fbm(k, n, T=0.25, seed=0):
    return lift_gaussian(GaussianSpec("fbm", 0.4, k, seed=seed), TimeGrid.uniform(0, T, n))


def test_zero_noise_matches_deterministic_solver():
    n = 64
    model = Burgers1D(n, np.zeros((1, n)))
    u0 = 0.3 * np.sin(model.sp.x)
    p = _fbm(1, 32)
    np.testing.assert_array_equal(solve_pde(model, u0, p).states, solve_deterministic(Burgers1D(n), u0, p.times))


@pytest.mark.parametrize("scheme", ["exponential", "davie"])
def test_constant_noise_is_a_shift(scheme):
    n, c = 32, 0.1
    model = Burgers1D(n, c * np.ones((1, n)))
    u0 = 0.2 * np.sin(model.sp.x)
    p = _fbm(1, 512, seed=2)
    rough = solve_pde(model, u0, p, scheme=scheme).final
    det = solve_deterministic(Burgers1D(n), u0, p.times)[-1]
    tol = 1e-12 if scheme == "exponential" else 1e-4
    np.testing.assert_allclose(rough, shift_field(model, det, c * (p.values[-1, 0] - p.values[0, 0])), atol=tol)


def test_varying_noise_takes_the_taylor_route():
    n = 64
    x = np.linspace(0, 2 * np.pi, n, endpoint=False)
    model = Burgers1D(n, (0.2 + 0.1 * np.cos(x))[None])
    assert model.symbol(0) is None
    u0 = 0.2 * np.sin(x) + 0.1
    p = _fbm(1, 64, seed=3)
    run = solve_pde(model, u0, p)
    assert np.all(np.isfinite(run.final))


def test_camassa_holm_reduces_to_burgers():
    n = 64
    x = np.linspace(0, 2 * np.pi, n, endpoint=False)
    xi = (0.2 + 0.1 * np.sin(x))[None]
    p = _fbm(1, 64, seed=4)
    u0 = 0.3 * np.sin(x)
    ch = solve_pde(CamassaHolm1D(n, 0.0, xi), u0, p).states
    bu = solve_pde(Burgers1D(n, xi), u0, p).states
    assert np.max(np.abs(ch - bu)) <= 1e-12


def test_camassa_holm_helmholtz_and_momentum():
    n = 32
    model = CamassaHolm1D(n, 0.5, np.ones((1, n)))
    u = np.sin(2 * model.sp.x)
    m = model.momentum(u)
    np.testing.assert_allclose(m, (1 + 0.25 * 4) * u, atol=1e-12)
    np.testing.assert_allclose(model.helmholtz_inverse(m), u, atol=1e-12)


def test_camassa_holm_constant_noise_conserves_momentum():
    n = 64
    model = CamassaHolm1D(n, 0.3, 0.4 * np.ones((1, n)))
    u0 = 0.2 * np.sin(model.sp.x) + 0.1
    run = solve_pde(model, u0, _fbm(1, 128, seed=5))
    mom = run.invariants["momentum"]
    assert np.max(np.abs(mom - mom[0])) < 1e-12


def test_cfl_guard():
    model = Burgers1D(32)
    vh = model.fwd(5 * np.sin(model.sp.x))
    with pytest.raises(CFLError):
        check_cfl(model, vh, 0.1)
    with pytest.raises(CFLError) as err:
        solve_pde(Burgers1D(32, np.zeros((1, 32))), 5 * np.sin(model.sp.x), _fbm(1, 2, T=1.0))
    assert err.value.suggested_steps > 2


def test_tail_monitor_aborts_on_unresolved_state():
    model = Burgers1D(32)
    u0 = np.sign(np.sin(model.sp.x))  # rough data with a heavy spectral tail
    p = lift_piecewise_linear(np.zeros((65, 1)), TimeGrid.uniform(0, 0.5, 64))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        with pytest.raises(NumericalAbort):
            solve_pde(Burgers1D(32, np.zeros((1, 32))), u0, p, cfl_safety=10.0)


def test_davie_substep_safety_bound():
    n = 64
    model = Burgers1D(n, 3.0 * np.ones((1, n)))
    p = _fbm(1, 4, T=1.0)
    with pytest.raises(CFLError) as err:
        solve_pde(model, 0.1 * np.sin(model.sp.x), p, scheme="davie")
    assert err.value.suggested_steps > 4


def test_euler_rejects_divergent_noise():
    n = 16
    xx, yy = mesh(n)
    xi = np.array([[np.sin(xx), np.zeros_like(xx)]])
    with pytest.raises(ConfigError):
        Euler2D(n, xi)


def test_biot_savart_taylor_green():
    n = 32
    model = Euler2D(n)
    xx, yy = mesh(n)
    u, v = model.biot_savart(2 * np.cos(xx) * np.cos(yy))
    # psi = cos x cos y, u = d_y psi, v = -d_x psi
    np.testing.assert_allclose(u, -np.cos(xx) * np.sin(yy), atol=1e-12)
    np.testing.assert_allclose(v, np.sin(xx) * np.cos(yy), atol=1e-12)
    with pytest.raises(ValueError):
        model.biot_savart(np.ones((n, n)))


def test_taylor_green_is_steady_and_transported():
    n = 32
    xx, yy = mesh(n)
    vec = np.array([[0.7, 0.3]])
    model = Euler2D(n, np.broadcast_to(vec[:, :, None, None], (1, 2, n, n)).copy())
    w0 = 2 * np.cos(xx) * np.cos(yy)
    p = _fbm(1, 64, T=0.5, seed=6)
    run = solve_pde(model, w0, p)
    disp = vec[0] * (p.values[-1, 0] - p.values[0, 0])
    np.testing.assert_allclose(run.final, shift_field(model, w0, disp), atol=1e-12)


def test_euler_invariants_with_varying_noise():
    n = 32
    xx, yy = mesh(n)
    # xi = perp grad of psi = 0.1 sin(x + y)
    c = 0.1 * np.cos(xx + yy)
    model = Euler2D(n, np.array([[c, -c]]))
    w0 = np.sin(xx) * np.cos(2 * yy)
    run = solve_pde(model, w0, _fbm(1, 64, T=0.25, seed=7))
    ens = run.invariants["enstrophy"]
    assert np.max(np.abs(ens - ens[0])) / ens[0] < 1e-10
    assert np.max(np.abs(run.invariants["mean_omega"])) < 1e-14


def test_pressure_recovery_shapes():
    n = 16
    xx, yy = mesh(n)
    c = 0.1 * np.cos(xx + yy)
    model = Euler2D(n, np.array([[c, -c]]))
    p, qs = model.recover_pressures(np.sin(xx) * np.cos(2 * yy))
    assert p.shape == (n, n) and len(qs) == 1
    assert abs(np.mean(p)) < 1e-14


def test_stages_are_returned():
    model = Burgers1D(32, np.ones((1, 32)))
    p = _fbm(1, 4)
    vh, st = step_rough_pde(model.fwd(0.1 * np.sin(model.sp.x)), 0, p, model, return_stages=True)
    np.testing.assert_array_equal(st.end, vh)


def test_make_model_and_driver_mismatch():
    with pytest.raises(ValueError):
        make_model("kdv", 32)
    with pytest.raises(ValueError):
        solve_pde(Burgers1D(32, np.ones((2, 32))), np.zeros(32), _fbm(1, 4))


def test_outputs(tmp_path):
    model = Burgers1D(16, np.ones((1, 16)))
    run = solve_pde(model, 0.1 * np.sin(model.sp.x), _fbm(1, 8))
    run.snapshot_csv(tmp_path / "s.csv", every=4)
    run.invariants_csv(tmp_path / "i.csv")
    data, header = run.write_binary(str(tmp_path / "state"))
    raw = np.fromfile(data, dtype="<f8").reshape(run.states.shape)
    np.testing.assert_array_equal(raw, run.states)
    assert (tmp_path / "i.csv").read_text().startswith("t,")
