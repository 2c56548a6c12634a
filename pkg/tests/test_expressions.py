import numpy as np
import pytest

from roughflow.errors import ConfigError
from roughflow.expressions import (
    compile_scalar_family,
    compile_vector_field,
    grid_values,
    path_function,
    perp_gradient_values,
)


@pytest.mark.parametrize(
    "text",
    ["__import__('os')", "x1.real", "lambda: 1", "sin(x1, x2)", "open('f')", "[1, 2]", "x1 if x2 else 0", "q + 1"],
)
def test_rejects_everything_outside_the_grammar(text):
    with pytest.raises(ConfigError):
        compile_vector_field([text], 2) if "x2" in text else compile_vector_field([text], 1)


def test_vector_field_and_symbolic_jacobian():
    f, j = compile_vector_field(["x*y", "sin(x) + 2"], 2)
    pts = np.array([[1.0, 2.0], [0.5, -1.0]])
    np.testing.assert_allclose(f(pts), [[2.0, np.sin(1) + 2], [-0.5, np.sin(0.5) + 2]])
    np.testing.assert_allclose(j(pts)[0], [[2.0, 1.0], [np.cos(1.0), 0.0]])


def test_constant_components_broadcast():
    f, j = compile_vector_field(["1", "-x1/2"], 2)
    assert f(np.zeros((3, 2))).shape == (3, 2)
    assert j(np.zeros((3, 2))).shape == (3, 2, 2)


def test_time_dependent_field():
    f, _ = compile_vector_field(["t*x1"], 1, with_time=True)
    np.testing.assert_allclose(f(2.0, np.array([[3.0]])), [[6.0]])


def test_grid_and_perp_gradient_values():
    x = np.linspace(0, 1, 5)
    np.testing.assert_allclose(grid_values("2*x + pi", [x]), 2 * x + np.pi)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    u, v = perp_gradient_values("x*y**2", [xx, yy])
    np.testing.assert_allclose(u, 2 * xx * yy)
    np.testing.assert_allclose(v, -(yy**2))


def test_path_function_and_derivative():
    fn, der = path_function(["t**2", "exp(t)"])
    t = np.array([0.0, 1.0])
    np.testing.assert_allclose(fn(t), [[0.0, 1.0], [1.0, np.e]])
    np.testing.assert_allclose(der(t), [[0.0, 1.0], [2.0, np.e]])


def test_scalar_family_derivatives():
    value, gx, hx, dt, dz, dzz, dzx = compile_scalar_family("x1**2*z1 + t*x2", 2, 1)
    x = np.array([[2.0, 3.0]])
    z = np.array([0.5])
    assert value(x, z, 1.5)[0] == pytest.approx(2.0 + 4.5)
    np.testing.assert_allclose(gx(x, z, 1.5), [[2.0, 1.5]])
    np.testing.assert_allclose(hx(x, z, 1.5), [[[1.0, 0.0], [0.0, 0.0]]])
    assert dt(x, z, 1.5)[0] == pytest.approx(3.0)
    np.testing.assert_allclose(dz(x, z, 1.5), [[4.0]])
    np.testing.assert_allclose(dzz(x, z, 1.5), [[[0.0]]])
    np.testing.assert_allclose(dzx(x, z, 1.5), [[[4.0, 0.0]]])


def test_component_count_checked():
    with pytest.raises(ConfigError):
        compile_vector_field(["x1"], 2)
