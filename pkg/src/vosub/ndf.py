"""Continuous negative definite functions and state-dependent Bernstein families.

A :class:`PsiSpec` is a real, symmetric continuous negative definite
function on R^n: a built-in closed form or finite Levy-Khinchin data. A
:class:`BernsteinFamily` is a map ``(x, s) -> f(x, s)`` that is a Bernstein
function in ``s`` for every frozen ``x``.
"""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy import special

from . import _fd
from ._sym import S, phase_symbols, vectorize
from .errors import (CapabilityError, DegenerateFamilyError, InputError,
                     NumericalIntegrityError)
from .grids import PhaseGrid
from .reports import ClassEntry, ClassReport

K_MAX = 6
SIGN_TOL = 1e-8
GROWTH_TOL = 0.10

PSI_KINDS = ("power", "quadratic", "log", "mollified", "levy", "subordinated")


def rho(k):
    return min(k, 2)


def multi_indices(n, order):
    """All multi-indices in N_0^n with ``|alpha| == order``."""
    return [a for a in itertools.product(range(order + 1), repeat=n) if sum(a) == order]


@dataclass(frozen=True, eq=False)
class LevyData:
    """x-independent, symmetric Levy-Khinchin data with a finite atomic measure."""

    c: float
    a: np.ndarray
    atoms: np.ndarray
    weights: np.ndarray
    drift: np.ndarray = None


@dataclass(frozen=True, eq=False)
class PsiSpec:
    kind: str
    dim: int = 1
    params: dict = field(default_factory=dict)
    levy: LevyData = None
    outer: sp.Expr = None
    base: "PsiSpec" = None

    def __post_init__(self):
        if self.kind not in PSI_KINDS:
            raise InputError(f"unknown psi kind {self.kind!r}")
        if self.dim < 1:
            raise InputError("dim must be positive")
        if self.kind == "power" and not 0 < self.params.get("r", 0) <= 2:
            raise InputError("power kind needs 0 < r <= 2")
        if self.kind == "levy":
            lv = self.levy
            if lv.drift is not None and np.any(np.asarray(lv.drift) != 0):
                raise InputError("complex-valued psi (nonzero drift) is not supported")
            if lv.c < 0 or np.any(lv.weights < 0):
                raise InputError("levy data needs c >= 0 and nonnegative weights")
            if np.linalg.eigvalsh(lv.a).min() < -1e-12:
                raise InputError("levy diffusion matrix must be positive semidefinite")

    # constructors -----------------------------------------------------
    @classmethod
    def quadratic(cls, dim=1):
        return cls("quadratic", dim)

    @classmethod
    def power(cls, r, dim=1):
        return cls("power", dim, {"r": float(r)})

    @classmethod
    def log_type(cls, dim=1):
        return cls("log", dim)

    @classmethod
    def mollified(cls, eps=1.0, dim=1):
        return cls("mollified", dim, {"eps": float(eps)})

    @classmethod
    def levy_khinchin(cls, c=0.0, a=None, atoms=(), weights=(), dim=1, drift=None):
        a = np.zeros((dim, dim)) if a is None else np.atleast_2d(np.asarray(a, float))
        atoms = np.asarray(atoms, float).reshape(-1, dim)
        weights = np.asarray(weights, float).reshape(-1)
        if len(atoms) != len(weights):
            raise InputError("atoms and weights differ in length")
        return cls("levy", dim, {"c": float(c)}, LevyData(float(c), a, atoms, weights, drift))

    @classmethod
    def zero(cls, dim=1):
        return cls.levy_khinchin(dim=dim)

    @classmethod
    def stable_levy(cls, r, n_atoms=10_000, R=1000.0, inner=1e-4):
        """Quadrature of the symmetric r-stable Levy measure (n = 1).

        Atoms are log-spaced in ``|y|`` on ``[inner, R]`` (midpoint rule in
        ``log|y|``) so that the atomic sum approximates ``|xi|^r``.
        """
        if not 0 < r < 2:
            raise InputError("stable index must lie in (0, 2)")
        half = n_atoms // 2
        edges = np.linspace(np.log(inner), np.log(R), half + 1)
        u = 0.5 * (edges[1:] + edges[:-1])
        du = edges[1] - edges[0]
        y = np.exp(u)
        integral = math.pi / 2 if r == 1 else -special.gamma(-r) * math.cos(math.pi * r / 2)
        w = y ** (-r) * du / (2 * integral)
        return cls.levy_khinchin(atoms=np.concatenate([-y, y]), weights=np.concatenate([w, w]))

    @classmethod
    def subordinated(cls, base, outer, coefficient=1.0):
        """``coefficient * outer(base(xi))`` for a scalar Bernstein ``outer(s)``."""
        outer = sp.sympify(outer, locals={"s": S})
        return cls("subordinated", base.dim, {"c": float(coefficient)}, outer=outer, base=base)

    # evaluation -------------------------------------------------------
    @property
    def expr(self):
        """Closed form in the canonical xi symbols, or ``None`` for large atom sets."""
        _, xis = phase_symbols(self.dim)
        r2 = sum(v ** 2 for v in xis)
        if self.kind == "quadratic":
            return r2
        if self.kind == "power":
            r = self.params["r"]
            return r2 if r == 2 else r2 ** (sp.nsimplify(r) / 2)
        if self.kind == "log":
            return sp.log(1 + r2)
        if self.kind == "mollified":
            eps = sp.nsimplify(self.params["eps"])
            return sp.sqrt(eps ** 2 + r2) - eps
        if self.kind == "subordinated":
            inner = self.base.expr
            if inner is None:
                return None
            return sp.nsimplify(self.params["c"]) * self.outer.subs(S, inner)
        lv = self.levy
        if len(lv.weights) > 32:
            return None
        v = sp.Matrix(xis)
        out = sp.Float(lv.c) + (v.T * sp.Matrix(lv.a) * v)[0]
        for y, w in zip(lv.atoms, lv.weights):
            out += sp.Float(w) * (1 - sp.cos(sum(sp.Float(yi) * xi for yi, xi in zip(y, xis))))
        return out

    def evaluate(self, *xi):
        """Vectorised psi on per-component arrays ``xi_1, ..., xi_n``."""
        if len(xi) != self.dim:
            raise InputError(f"expected {self.dim} xi components, got {len(xi)}")
        xi = np.broadcast_arrays(*(np.asarray(v, float) for v in xi))
        r2 = sum(v * v for v in xi)
        k = self.kind
        if k == "quadratic":
            out = r2
        elif k == "power":
            out = r2 ** (self.params["r"] / 2)
        elif k == "log":
            out = np.log1p(r2)
        elif k == "mollified":
            e = self.params["eps"]
            out = r2 / (np.sqrt(e * e + r2) + e)
        elif k == "subordinated":
            f = _scalar_callable(self.outer)
            out = self.params["c"] * f(self.base.evaluate(*xi))
        else:
            out = self._levy_eval(xi, (0,) * self.dim)
        out = np.asarray(out, float)
        scale = max(1.0, float(np.max(np.abs(out), initial=0.0)))
        if np.any(out < -1e-10 * scale):
            raise NumericalIntegrityError(f"psi of kind {k} took a negative value {out.min():.3e}")
        return out

    __call__ = evaluate

    def derivative(self, alpha, *xi):
        """``d^alpha psi`` at the given points (exact)."""
        alpha = tuple(alpha)
        if self.kind == "levy":
            return self._levy_eval(np.broadcast_arrays(*(np.asarray(v, float) for v in xi)), alpha)
        expr = self.expr
        _, xis = phase_symbols(self.dim)
        d = expr
        for var, k in zip(xis, alpha):
            if k:
                d = sp.diff(d, var, k)
        return vectorize(d, xis)(*xi)

    def _levy_eval(self, xi, alpha):
        lv = self.levy
        order = sum(alpha)
        shape = np.broadcast_shapes(*(np.shape(v) for v in xi))
        pts = np.stack([np.broadcast_to(v, shape).ravel() for v in xi], axis=1)
        out = np.zeros(len(pts))
        if order == 0:
            out += lv.c + np.einsum("pi,ij,pj->p", pts, lv.a, pts)
        elif order == 1:
            i = alpha.index(1)
            out += 2 * pts @ lv.a[i]
        elif order == 2:
            i, j = [d for d, k in enumerate(alpha) for _ in range(k)]
            out += 2 * lv.a[i, j]
        if len(lv.weights):
            ya = np.prod(lv.atoms ** np.asarray(alpha), axis=1) * lv.weights
            for start in range(0, len(pts), 4096):
                theta = pts[start:start + 4096] @ lv.atoms.T
                if order == 0:
                    out[start:start + 4096] += (1 - np.cos(theta)) @ lv.weights
                else:
                    out[start:start + 4096] -= np.cos(theta + order * np.pi / 2) @ ya
        return out.reshape(shape)


def _scalar_callable(expr):
    return vectorize(expr, (S,))


def eval_psi(psi, xi):
    """psi at a single point ``xi`` (length ``psi.dim``)."""
    xi = np.atleast_1d(np.asarray(xi, float))
    if xi.shape != (psi.dim,):
        raise InputError(f"xi has shape {xi.shape}, expected ({psi.dim},)")
    return float(psi.evaluate(*xi))


# ----------------------------------------------------------------------
# class Lambda
# ----------------------------------------------------------------------

def _lambda_sweep(psi, max_order, grid, derivative):
    xi = grid.xi_points
    one_plus = 1.0 + psi.evaluate(*xi)
    out = {}
    for k in range(max_order + 1):
        best, loc, finite = 0.0, (), True
        denom = one_plus ** ((2 - rho(k)) / 2)
        for a in multi_indices(psi.dim, k):
            if k == 0:
                d = one_plus
            elif derivative == "exact":
                d = psi.derivative(a, *xi)
            else:
                d = _fd.partial(lambda *v: psi.evaluate(*v), list(xi), a)
            ratio = np.abs(d) / denom
            bad = ~np.isfinite(ratio)
            if bad.any():
                j = int(np.argmax(bad))
                return_loc = tuple(float(v) for v in xi[:, j])
                if finite:
                    best, loc, finite = float("inf"), return_loc, False
                continue
            j = int(np.argmax(ratio))
            if finite and ratio[j] > best:
                best, loc = float(ratio[j]), tuple(float(v) for v in xi[:, j])
        out[k] = (best, loc, finite)
    return out


def verify_lambda_class(psi, max_order=2, xi_grid=None, tol=GROWTH_TOL, derivative="exact"):
    """Check ``|d^alpha (1 + psi)| <= c_k (1 + psi)^((2 - rho(k))/2)``.

    The constant ``c_k`` for ``|alpha| = k`` is the grid supremum of the
    ratio. An entry passes when the ratio is finite everywhere and the
    constant grows by at most ``tol`` (relative) on the refined grid.

    Parameters
    ----------
    psi : PsiSpec
    max_order : int
        Largest ``|alpha|``; at most ``K_MAX``.
    xi_grid : PhaseGrid, optional
        Defaults to a symmetric box ``[-64, 64]`` that contains ``xi = 0``.
    derivative : {"exact", "fd"}
        ``"fd"`` forces central differences even where closed forms exist.
    """
    if max_order > K_MAX:
        raise CapabilityError(f"max_order {max_order} exceeds K_max = {K_MAX}")
    if derivative == "exact" and psi.kind != "levy" and psi.expr is None:
        derivative = "fd"
    grid = xi_grid or PhaseGrid.box(psi.dim, 64.0, 257)
    coarse = _lambda_sweep(psi, max_order, grid, derivative)
    fine_grid = grid.refined()
    fine = _lambda_sweep(psi, max_order, fine_grid, derivative)
    report = ClassReport("lambda-class", grid=f"{grid.describe()} -> {fine_grid.describe()}")
    for k in range(max_order + 1):
        c0, _, f0 = coarse[k]
        c1, loc, f1 = fine[k]
        if not f0:
            loc = coarse[k][1]
        stable = f0 and f1 and c1 <= (1 + tol) * c0 + 1e-12
        report.entries.append(ClassEntry((k,), (), c1, c0, loc, f0 and f1, stable,
                                         "" if f0 and f1 else "non-finite derivative"))
    return report


# ----------------------------------------------------------------------
# Bernstein families
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BernsteinFamily:
    """``(x, s) -> f(x, s)``, Bernstein in ``s`` for every frozen ``x``.

    Either ``expr`` (a sympy expression in ``s`` and the canonical x
    symbols) or ``func`` with a ``derivatives`` mapping ``k -> callable`` must
    be given. Callables take ``(x_components, s)``.
    """

    expr: sp.Expr = None
    dim: int = 1
    name: str = "custom"
    envelope_f0: sp.Expr = None
    envelope_f1: sp.Expr = None
    growth: tuple = None
    k_max: int = K_MAX
    func: object = None
    derivatives: dict = None
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_expr(cls, expr, dim=1, name="custom", **kw):
        from ._sym import parse
        if isinstance(expr, str):
            expr = parse(expr, dim)
        return cls(sp.sympify(expr), dim, name, **kw)

    @classmethod
    def identity(cls, dim=1):
        return cls(S, dim, "identity", envelope_f0=S, envelope_f1=S, growth=(1.0, 1.0))

    @classmethod
    def power(cls, exponent, dim=1):
        from ._sym import parse
        r = parse(exponent, dim) if isinstance(exponent, str) else sp.sympify(exponent)
        return cls(S ** r, dim, "power")

    @classmethod
    def damped_power(cls, alpha=1, dim=1):
        """``s^(a(x)/2) * (1 - exp(-4 s^(a(x)/2)))`` with ``a = alpha(x)``."""
        from ._sym import parse
        a = parse(alpha, dim) if isinstance(alpha, str) else sp.sympify(alpha)
        h = S ** (a / 2)
        return cls(h * (1 - sp.exp(-4 * h)), dim, "variable-order-example")

    @property
    def x_symbols(self):
        return phase_symbols(self.dim)[0]

    @property
    def is_x_independent(self):
        if self.expr is None:
            return False
        return not (self.expr.free_symbols & set(self.x_symbols))

    def ds_expr(self, k):
        if self.expr is None:
            raise CapabilityError("family has no symbolic form")
        return sp.diff(self.expr, S, k) if k else self.expr

    def ds(self, k):
        """Callable ``(x_components, s) -> d^k f / ds^k``."""
        if k > self.k_max:
            raise CapabilityError(f"derivative order {k} exceeds K_max = {self.k_max}")
        if self.expr is None:
            if k == 0 and self.func is not None:
                return self.func
            if not self.derivatives or k not in self.derivatives:
                raise CapabilityError(f"no closure for d^{k}f/ds^{k}")
            return self.derivatives[k]
        if k not in self._cache:
            fn = vectorize(self.ds_expr(k), self.x_symbols + (S,))
            self._cache[k] = lambda x, s, fn=fn: fn(*x, s)
        return self._cache[k]

    def evaluate(self, x, s):
        x = _x_components(x, self.dim)
        return self.ds(0)(x, np.asarray(s, float))


def _x_components(x, dim):
    if isinstance(x, (tuple, list)) and len(x) == dim and not np.isscalar(x):
        return tuple(np.asarray(v, float) for v in x)
    x = np.asarray(x, float)
    if dim == 1:
        return (x.reshape(()) if x.size == 1 else x,)
    return tuple(x[..., i] for i in range(dim))


def _x_sample_array(x_samples, dim):
    x = np.asarray(x_samples, float)
    if dim == 1:
        return x.reshape(-1, 1)
    return x.reshape(-1, dim)


def eval_bernstein_family(family, x, s):
    if np.any(np.asarray(s) < 0):
        raise InputError("s must be nonnegative")
    xs = np.atleast_1d(np.asarray(x, float))
    if xs.size != family.dim:
        raise InputError(f"x has {xs.size} components, expected {family.dim}")
    return float(family.ds(0)(tuple(xs), np.asarray(float(s))))


def verify_bernstein(family, x_samples, s_grid, max_k=4, tol=SIGN_TOL):
    """Sign pattern check ``(-1)^(k-1) d^k f / ds^k >= -tol`` for ``1 <= k <= max_k``.

    Row ``k = 0`` checks ``f >= -tol``. Each row records the worst violation
    and where it occurs.
    """
    if max_k > family.k_max:
        raise CapabilityError(f"max_k {max_k} exceeds K_max = {family.k_max}")
    s_grid = np.asarray(s_grid, float)
    if np.any(s_grid <= 0):
        raise InputError("s_grid must lie in (0, inf)")
    xs = _x_sample_array(x_samples, family.dim)
    X = np.repeat(xs, len(s_grid), axis=0)
    s = np.tile(s_grid, len(xs))
    xcomp = tuple(X[:, i] for i in range(family.dim))
    report = ClassReport("bernstein", grid=f"{len(xs)} x-samples, s in [{s_grid.min():g}, {s_grid.max():g}]")
    for k in range(max_k + 1):
        v = np.asarray(family.ds(k)(xcomp, s), float)
        signed = v if k == 0 else (-1) ** (k - 1) * v
        finite = bool(np.all(np.isfinite(signed)))
        viol = np.where(np.isfinite(signed), np.maximum(0.0, -signed), np.inf)
        j = int(np.argmax(viol))
        worst = float(viol[j])
        loc = tuple(float(c) for c in X[j]) + (float(s[j]),)
        report.entries.append(ClassEntry((k,), (), worst, float("nan"), loc, finite,
                                         worst <= tol, "worst sign violation"))
    return report


@dataclass
class EnvelopeFit:
    s: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    c0_tilde: float
    rho0: float
    c1_tilde: float = None
    rho1: float = None
    window: str = ""


def _power_fit(t, v, lower):
    """Least-squares power law on the upper decade, then shrink to a lower bound."""
    upper = t >= t.max() / 10
    slope, intercept = np.polyfit(np.log(t[upper]), np.log(v[upper]), 1)
    rng = t >= lower
    c = min(math.exp(intercept), float(np.min(v[rng] / t[rng] ** slope)))
    return float(c), float(slope)


def envelope_and_growth(family, x_samples, s_grid, psi=None, lower=1.0):
    """Pointwise envelopes ``f0 = min_x f``, ``f1 = max_x f`` and growth fits.

    ``(c0_tilde, rho0)`` is fitted on ``log f0`` against ``log s`` over the
    upper decade of ``s_grid`` and then shrunk so that
    ``f0(s) >= c0_tilde * s^rho0`` on ``s >= lower``. When ``psi`` is given,
    the analogous fit ``psi(xi) >= c1_tilde |xi|^rho1`` is made along the
    coordinate axes and diagonal with ``|xi|`` taken from ``s_grid``.
    """
    s = np.asarray(s_grid, float)
    if s.min() > 1e-2 or s.max() < 1e4:
        raise InputError("s_grid must cover at least [1e-2, 1e4]")
    xs = _x_sample_array(x_samples, family.dim)
    vals = np.stack([family.ds(0)(tuple(np.full_like(s, c) for c in row), s) for row in xs])
    f0, f1 = vals.min(axis=0), vals.max(axis=0)
    if np.all(f0[s >= lower] <= 0):
        raise DegenerateFamilyError("f0 vanishes on the upper range; growth condition unsatisfiable")
    c0, rho0 = _power_fit(s, np.maximum(f0, 1e-300), lower)
    fit = EnvelopeFit(s, f0, f1, c0, rho0, window=f"s >= {lower:g} (fit on s >= {s.max() / 10:g})")
    if psi is not None:
        dirs = [np.eye(psi.dim)[i] for i in range(psi.dim)]
        if psi.dim > 1:
            dirs.append(np.ones(psi.dim) / math.sqrt(psi.dim))
        pv = np.min([psi.evaluate(*(np.outer(d, s))) for d in dirs], axis=0)
        fit.c1_tilde, fit.rho1 = _power_fit(s, np.maximum(pv, 1e-300), lower)
    return fit


# ----------------------------------------------------------------------
# auxiliary probes
# ----------------------------------------------------------------------

def subadditivity_probe(psi, xi, eta):
    """Largest value of ``sqrt(psi(xi+eta)) - sqrt(psi(xi)) - sqrt(psi(eta))``.

    ``xi`` and ``eta`` have shape ``(m, n)``; the result is <= 0 up to
    roundoff for a negative definite psi.
    """
    xi = np.asarray(xi, float).reshape(-1, psi.dim)
    eta = np.asarray(eta, float).reshape(-1, psi.dim)
    r = lambda v: np.sqrt(psi.evaluate(*v.T))
    return float(np.max(r(xi + eta) - r(xi) - r(eta)))


def scalar_inequality_gap(a, t):
    """``at/(1+at) - (1 - exp(-at))``, which is <= 0 for ``a, t >= 0``."""
    at = np.asarray(a, float) * np.asarray(t, float)
    return at / (1 + at) + np.expm1(-at)
