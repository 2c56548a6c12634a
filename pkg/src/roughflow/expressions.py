"""A small arithmetic/trig expression grammar compiled to numpy closures.

Expressions are parsed with :mod:`ast`, checked against a whitelist
(numbers, names, ``+ - * / **``, unary minus and a few elementary functions)
and translated node by node into sympy, so nothing is ever ``eval``-ed.
Derivatives are taken symbolically before lambdifying.

Variables: ``x1 .. xd`` (aliases ``x``, ``y`` for the first two), ``t``, and
``z1 .. zK`` where a driver value is meaningful; ``pi`` and ``e`` are
constants.
"""

from __future__ import annotations

import ast

import numpy as np
import sympy as sp

from .errors import ConfigError

FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
}
CONSTANTS = {"pi": sp.pi, "e": sp.E}
ALIASES = {"x": "x1", "y": "x2"}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def parse(text, allowed):
    """Sympy expression for ``text`` over the symbol table ``allowed``."""
    if not isinstance(text, (str, int, float)):
        raise ConfigError(f"expression must be a string or number, got {type(text).__name__}")
    if isinstance(text, (int, float)):
        return sp.Float(text)
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return sp.Float(node.value) if isinstance(node.value, float) else sp.Integer(node.value)
        if isinstance(node, ast.Name):
            name = ALIASES.get(node.id, node.id)
            if name in allowed:
                return allowed[name]
            if node.id in CONSTANTS:
                return CONSTANTS[node.id]
            raise ConfigError(f"unknown name {node.id!r} in {text!r}; allowed: {sorted(allowed)}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = walk(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            fn = FUNCTIONS.get(node.func.id)
            if fn is None or len(node.args) != 1:
                raise ConfigError(f"unsupported function call in {text!r}")
            return fn(walk(node.args[0]))
        raise ConfigError(f"unsupported syntax {type(node).__name__} in {text!r}")

    return walk(tree)


def space_symbols(dim):
    return [sp.Symbol(f"x{i + 1}", real=True) for i in range(dim)]


def noise_symbols(k):
    return [sp.Symbol(f"z{i + 1}", real=True) for i in range(k)]


T = sp.Symbol("t", real=True)


def _table(*groups):
    out = {}
    for g in groups:
        out.update({s.name: s for s in g})
    return out


def _lambdify(args, expr):
    fn = sp.lambdify(args, expr, "numpy")
    return fn


def _broadcast(val, shape):
    return np.broadcast_to(np.asarray(val, dtype=float), shape)


def compile_vector_field(components, dim, with_time=False):
    """Closures ``f(x) -> (M, d)`` and ``jac(x) -> (M, d, d)``.

    With ``with_time`` the closures take ``(t, x)`` and ``t`` may appear.
    """
    if len(components) != dim:
        raise ConfigError(f"vector field needs {dim} components, got {len(components)}")
    xs = space_symbols(dim)
    table = _table(xs, [T] if with_time else [])
    exprs = [parse(c, table) for c in components]
    args = ([T] if with_time else []) + xs
    vals = [_lambdify(args, e) for e in exprs]
    ders = [[_lambdify(args, sp.diff(e, x)) for x in xs] for e in exprs]

    def call(fns, t, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cols = [x[:, i] for i in range(dim)]
        pre = [t] if with_time else []
        return [_broadcast(f(*pre, *cols), (x.shape[0],)) for f in fns], x.shape[0]

    def field(*a):
        t, x = (a[0], a[1]) if with_time else (None, a[0])
        cols, _ = call(vals, t, x)
        return np.stack(cols, axis=1)

    def jac(*a):
        t, x = (a[0], a[1]) if with_time else (None, a[0])
        rows = []
        for row in ders:
            cols, _ = call(row, t, x)
            rows.append(np.stack(cols, axis=1))
        return np.stack(rows, axis=1)

    field.expressions = [str(e) for e in exprs]
    return field, jac


def grid_values(text, coords):
    """Evaluate a scalar expression on nodal coordinate arrays ``coords``."""
    xs = space_symbols(len(coords))
    expr = parse(text, _table(xs))
    fn = _lambdify(xs, expr)
    return np.array(_broadcast(fn(*coords), np.shape(coords[0])), dtype=float)


def perp_gradient_values(text, coords):
    """``(d_y psi, -d_x psi)`` of a scalar stream function on a 2D grid."""
    xs = space_symbols(2)
    psi = parse(text, _table(xs))
    shape = np.shape(coords[0])
    comps = [sp.diff(psi, xs[1]), -sp.diff(psi, xs[0])]
    return np.array([_broadcast(_lambdify(xs, c)(*coords), shape) for c in comps], dtype=float)


def path_function(components):
    """``t -> (..., K)`` closure and its derivative for a smooth driver."""
    table = _table([T])
    exprs = [parse(c, table) for c in components]
    vals = [_lambdify([T], e) for e in exprs]
    ders = [_lambdify([T], sp.diff(e, T)) for e in exprs]

    def stack(fns, t):
        t = np.asarray(t, dtype=float)
        return np.stack([_broadcast(f(t), t.shape) for f in fns], axis=-1)

    return (lambda t: stack(vals, t)), (lambda t: stack(ders, t))


def compile_scalar_family(text, dim, n_noise):
    """``F(x, z, t)`` and the derivatives used by the Lie chain-rule audit."""
    xs = space_symbols(dim)
    zs = noise_symbols(n_noise)
    expr = parse(text, _table(xs, zs, [T]))
    args = [T] + xs + zs

    def make(e):
        fn = _lambdify(args, e)

        def call(x, z, t):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            z = np.asarray(z, dtype=float)
            return _broadcast(fn(t, *[x[:, i] for i in range(dim)], *z), (x.shape[0],))

        return call

    def stacked(table):
        cells = [[make(e) for e in row] for row in table]

        def call(x, z, t):
            return np.stack([np.stack([c(x, z, t) for c in row], axis=-1) for row in cells], axis=1)

        return call

    def vector(es):
        cells = [make(e) for e in es]
        return lambda x, z, t: np.stack([c(x, z, t) for c in cells], axis=1)

    value = make(expr)
    grad_x = vector([sp.diff(expr, x) for x in xs])
    hess_x = stacked([[sp.diff(expr, a, b) for b in xs] for a in xs])
    d_t = make(sp.diff(expr, T))
    d_z = vector([sp.diff(expr, z) for z in zs])
    d_zz = stacked([[sp.diff(expr, a, b) for b in zs] for a in zs])
    d_zx = stacked([[sp.diff(expr, a, b) for b in xs] for a in zs])
    return value, grad_x, hess_x, d_t, d_z, d_zz, d_zx
