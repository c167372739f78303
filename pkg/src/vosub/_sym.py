"""Shared sympy plumbing: canonical variable names and vectorised lambdify."""
from functools import lru_cache

import numpy as np
import sympy as sp

S = sp.Symbol("s", nonnegative=True)


@lru_cache(maxsize=None)
def phase_symbols(n):
    """Return ``(xs, xis)`` for dimension ``n``.

    One-dimensional problems use the names ``x`` and ``xi``; higher
    dimensions use ``x1, x2, ...`` and ``xi1, xi2, ...``.
    """
    if n == 1:
        return (sp.Symbol("x", real=True),), (sp.Symbol("xi", real=True),)
    xs = tuple(sp.Symbol(f"x{i + 1}", real=True) for i in range(n))
    xis = tuple(sp.Symbol(f"xi{i + 1}", real=True) for i in range(n))
    return xs, xis


def parse(text, n, extra=()):
    """Parse a user expression written in the canonical variables."""
    xs, xis = phase_symbols(n)
    local = {str(v): v for v in xs + xis + (S,) + tuple(extra)}
    if n == 1:
        local.update(x1=xs[0], xi1=xis[0])
    return sp.sympify(text, locals=local)


def _sign(v):
    # derivative of |v| is undefined at the kink
    return np.where(v == 0, np.nan, np.sign(v))


def _dirac(v, *order):
    return np.where(v == 0, np.inf, 0.0)


_MODULES = [{"sign": _sign, "DiracDelta": _dirac}, "numpy"]


def vectorize(expr, args):
    """Lambdify ``expr`` and make the result broadcast against all inputs."""
    fn = sp.lambdify(args, expr, modules=_MODULES)

    def call(*values):
        with np.errstate(all="ignore"):
            out = np.asarray(fn(*values))
        shape = np.broadcast_shapes(*(np.shape(v) for v in values)) if values else ()
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out

    return call


def is_real_expr(expr):
    return not expr.has(sp.I)
