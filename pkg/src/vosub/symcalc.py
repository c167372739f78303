"""Symbols ``p(x, xi)`` in Hoh's classes and the operations on them.

A :class:`Symbol` wraps a sympy expression in the canonical phase
variables (see :func:`vosub._sym.phase_symbols`); mixed derivatives are
obtained by exact symbolic differentiation, which carries out the
multivariate chain, product and quotient rules. A symbol built from an
opaque callable falls back to central finite differences.
"""
import math
import warnings

import numpy as np
import sympy as sp

from . import _fd
from ._sym import S, parse, phase_symbols, vectorize, is_real_expr
from .errors import (DomainError, IncompatibilityError, InputError,
                     NearSingularityError)
from .grids import PhaseGrid
from .ndf import BernsteinFamily, PsiSpec, multi_indices, rho
from .reports import ClassEntry, ClassReport

EPSILON = 0.1
GROWTH_TOL = 0.10
LATTICE = 64
CHUNK = 2 ** 20  # phase points evaluated per block


class Symbol:
    """A (possibly x-dependent) symbol on ``R^n x R^n``.

    Parameters
    ----------
    expr : sympy.Expr, optional
        Closed form in the canonical ``x`` and ``xi`` symbols.
    n : int
    order_m : float
        Claimed order; verified separately by :func:`verify_symbol_class`.
    ref_psi : PsiSpec
        Reference negative definite function of the class.
    class_flag : {"rho", "zero"}
    metadata : dict
        Provenance and construction parameters.
    func : callable, optional
        ``func(x_components, xi_components)`` used when ``expr`` is None.
    x_independent : bool, optional
        Only consulted for callable symbols.
    """

    def __init__(self, expr=None, n=1, order_m=None, ref_psi=None, class_flag="rho",
                 metadata=None, func=None, x_independent=False):
        if expr is None and func is None:
            raise InputError("a symbol needs an expression or a callable")
        if class_flag not in ("rho", "zero"):
            raise InputError(f"class_flag must be 'rho' or 'zero', got {class_flag!r}")
        self.expr = None if expr is None else sp.sympify(expr)
        self.n = n
        self.order_m = order_m
        self.ref_psi = ref_psi if ref_psi is not None else PsiSpec.quadratic(n)
        self.class_flag = class_flag
        self.metadata = dict(metadata or {})
        self.func = func
        self._x_independent = x_independent
        self._cache = {}
        if self.expr is not None:
            xs, xis = phase_symbols(n)
            stray = self.expr.free_symbols - set(xs + xis)
            if stray:
                raise InputError(f"symbol has unknown variables {sorted(map(str, stray))}")

    # construction helpers --------------------------------------------
    @classmethod
    def parse(cls, text, n=1, **kw):
        return cls(parse(text, n), n, **kw)

    @classmethod
    def from_psi(cls, psi, order_m=2.0, **kw):
        """``psi`` itself as an x-independent symbol."""
        if psi.expr is not None:
            return cls(psi.expr, psi.dim, order_m, psi, **kw)
        return cls(None, psi.dim, order_m, psi, func=lambda x, xi: psi.evaluate(*xi),
                   x_independent=True, **kw)

    def with_order(self, order_m):
        return Symbol(self.expr, self.n, order_m, self.ref_psi, self.class_flag,
                      self.metadata, self.func, self._x_independent)

    # properties ------------------------------------------------------
    @property
    def symbols(self):
        xs, xis = phase_symbols(self.n)
        return xs + xis

    @property
    def is_x_independent(self):
        if self.expr is None:
            return self._x_independent
        return not (self.expr.free_symbols & set(phase_symbols(self.n)[0]))

    @property
    def is_real(self):
        return self.expr is None or is_real_expr(self.expr)

    @property
    def provenance(self):
        return self.metadata.get("provenance", "")

    # evaluation ------------------------------------------------------
    def derivative_expr(self, alpha, beta=None):
        if self.expr is None:
            raise InputError("callable symbol has no closed form")
        beta = tuple(beta or (0,) * self.n)
        key = ("expr", tuple(alpha), beta)
        if key not in self._cache:
            xs, xis = phase_symbols(self.n)
            d = self.expr
            for var, k in list(zip(xis, alpha)) + list(zip(xs, beta)):
                if k:
                    d = sp.diff(d, var, k)
            self._cache[key] = d
        return self._cache[key]

    def derivative(self, alpha, beta=None):
        """Callable ``(x, xi) -> d_x^beta d_xi^alpha p`` (component sequences)."""
        alpha = tuple(alpha)
        beta = tuple(beta or (0,) * self.n)
        if len(alpha) != self.n or len(beta) != self.n:
            raise InputError("multi-index length does not match the dimension")
        key = ("fn", alpha, beta)
        if key in self._cache:
            return self._cache[key]
        if self.expr is not None:
            fn = vectorize(self.derivative_expr(alpha, beta), self.symbols)
            call = lambda x, xi, fn=fn: fn(*x, *xi)
        elif not any(alpha) and not any(beta):
            call = self.func
        else:
            n = self.n
            f = lambda *v: self.func(v[:n], v[n:])
            call = lambda x, xi: _fd.partial(f, list(x) + list(xi), beta + alpha)
        self._cache[key] = call
        return call

    def __call__(self, x, xi):
        return self.derivative((0,) * self.n)(x, xi)

    def at(self, x, xi):
        """Value at a single phase point."""
        x = np.atleast_1d(np.asarray(x, float))
        xi = np.atleast_1d(np.asarray(xi, float))
        if x.shape != (self.n,) or xi.shape != (self.n,):
            raise InputError(f"expected points of length {self.n}")
        v = complex(self(tuple(x), tuple(xi)))
        return v.real if v.imag == 0 else v

    def __repr__(self):
        body = str(self.expr) if self.expr is not None else "<callable>"
        return f"Symbol({body}, n={self.n}, m={self.order_m}, class={self.class_flag})"


# ----------------------------------------------------------------------
# probing domains
# ----------------------------------------------------------------------

def _probe_grid(n):
    """Moderate phase sample used by constructors for domain checks."""
    x = np.arange(16) * (2 * np.pi / 16)
    xi = np.linspace(-64.0, 64.0, 65)
    return PhaseGrid("box", n, (x,) * n, (xi,) * n, {"R": 64.0, "M": 65, "x": x})


def _blocks(grid):
    """Yield ``(x_components, xi_components, x_index, xi_points)`` blocks of
    the product of the grid's x and xi samples, flattened to 1-D."""
    X, XI = grid.x_points, grid.xi_points
    step = max(1, CHUNK // XI.shape[1])
    for start in range(0, X.shape[1], step):
        xb = X[:, start:start + step]
        xc = tuple(np.repeat(c, XI.shape[1]) for c in xb)
        xic = tuple(np.tile(c, xb.shape[1]) for c in XI)
        yield xc, xic


def _first_bad(mask, x, xi):
    j = int(np.argmax(mask))
    return tuple(float(c[j]) for c in x) + tuple(float(c[j]) for c in xi)


def _check_domain(sym, lower, grid, strict, err, what):
    for x, xi in _blocks(grid):
        v = np.asarray(sym(x, xi))
        if np.iscomplexobj(v):
            v = v.real
        bad = ~np.isfinite(v) | ((v <= lower) if strict else (v < lower))
        if bad.any():
            loc = _first_bad(bad, x, xi)
            raise err(f"{what} at (x, xi) = {loc}", loc)


def _x_range(fn_expr, n):
    # sup and inf over one period; the sample counts are multiples of 4 so
    # that quarter periods (extrema of sin and cos) are hit exactly
    xs, _ = phase_symbols(n)
    f = vectorize(fn_expr, xs)
    samples = 4097 if n == 1 else 129
    grid = np.meshgrid(*([np.linspace(0, 2 * np.pi, samples)] * n), indexing="ij")
    v = np.asarray(f(*grid), float)
    return float(v.max()), float(v.min())


def _as_x_expr(fn, n):
    e = parse(fn, n) if isinstance(fn, str) else sp.sympify(fn)
    xs, xis = phase_symbols(n)
    if e.free_symbols - set(xs):
        raise InputError("exponent functions may only depend on x")
    return e


# ----------------------------------------------------------------------
# constructors
# ----------------------------------------------------------------------

def subordinate_symbol(family, q, order_m=None, domain=None):
    """``p(x, xi) = f(x, q(x, xi))`` for a Bernstein family ``f``.

    Raises
    ------
    DomainError
        If ``q`` is negative (or not real) at a probed phase point.
    """
    if family.dim != q.n:
        raise InputError("family and symbol dimensions differ")
    if q.expr is None or family.expr is None:
        raise InputError("subordination needs closed forms for q and f")
    if not q.is_real:
        raise DomainError("q must be real-valued", ())
    _check_domain(q, 0.0, domain or _probe_grid(q.n), False, DomainError, "q is negative")
    expr = family.expr.subs(S, q.expr)
    meta = {"provenance": f"subordinate({family.name}, {q.expr})", "family": family.name}
    return Symbol(expr, q.n, order_m, q.ref_psi, "rho", meta)


def hoh_power_symbol(q, m_fn, domain=None):
    """``q(x, xi)^(m(x))`` on the principal real branch ``exp(m log q)``.

    A warning is issued when ``sup m - inf m >= 1/2``; the symbol is still
    built.
    """
    m = _as_x_expr(m_fn, q.n)
    _check_domain(q, 0.0, domain or _probe_grid(q.n), True, DomainError, "q is not positive")
    M, mu = _x_range(m, q.n)
    if M - mu >= 0.5:
        warnings.warn(f"sup m - inf m = {M - mu:.3g} >= 1/2; order estimates may fail",
                      RuntimeWarning, stacklevel=2)
    expr = q.expr if m == 1 else sp.exp(m * sp.log(q.expr))
    order = None if q.order_m is None else q.order_m * M
    meta = {"provenance": f"hoh_power({q.expr}, {m})", "M": M, "mu": mu}
    return Symbol(expr, q.n, order, q.ref_psi, "rho", meta)


def variable_order_example_symbol(q, alpha_fn, domain=None):
    """``(1+q)^(a(x)/2) (1 - exp(-4 (1+q)^(a(x)/2)))`` with ``a = alpha_fn``.

    The recorded order is ``2m`` with ``m = sup a / 2`` and
    ``mu = inf a / 2`` kept in ``metadata``; the class claim is at order
    ``2m + epsilon`` for the epsilon chosen at verification time.
    """
    a = _as_x_expr(alpha_fn, q.n)
    _check_domain(q, -1.0, domain or _probe_grid(q.n), True, DomainError, "1 + q is not positive")
    amax, amin = _x_range(a, q.n)
    if amin <= 0 or amax > 1 + 1e-12:
        raise InputError(f"alpha must take values in (0, 1], got [{amin:g}, {amax:g}]")
    m, mu = amax / 2, amin / 2
    if m - mu >= 0.5:
        warnings.warn(f"m - mu = {m - mu:.3g} >= 1/2", RuntimeWarning, stacklevel=2)
    h = sp.exp(a / 2 * sp.log(1 + q.expr))
    expr = h * (1 - sp.exp(-4 * h))
    meta = {"provenance": f"variable_order_example(q={q.expr}, alpha={a})",
            "m": m, "mu": mu, "alpha": str(a), "claim": "order 2m + epsilon"}
    return Symbol(expr, q.n, 2 * m, q.ref_psi, "rho", meta)


def inverse_symbol(p, lam, tol=1e-12, domain=None):
    """``1 / (p(x, xi) + lam)``.

    The recorded order is ``-2 mu`` when ``p`` carries ``mu`` in its
    metadata and ``-order_m`` otherwise.

    Raises
    ------
    NearSingularityError
        If ``p + lam <= tol`` at a probed phase point.
    """
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    shifted = Symbol(p.expr + lam, p.n) if p.expr is not None else Symbol(
        None, p.n, func=lambda x, xi: p(x, xi) + lam, x_independent=p.is_x_independent)
    _check_domain(shifted, tol, domain or _probe_grid(p.n), True, NearSingularityError,
                  "p + lambda is near zero")
    mu = p.metadata.get("mu")
    order = -2 * mu if mu is not None else (None if p.order_m is None else -p.order_m)
    meta = {"provenance": f"inverse({p.provenance or p.expr}, lambda={lam})", "lambda": lam}
    if p.expr is not None:
        return Symbol(1 / (p.expr + lam), p.n, order, p.ref_psi, "rho", meta)
    return Symbol(None, p.n, order, p.ref_psi, "rho", meta,
                  func=lambda x, xi: 1.0 / (p(x, xi) + lam), x_independent=p.is_x_independent)


# ----------------------------------------------------------------------
# class verification
# ----------------------------------------------------------------------

def default_grid(p):
    """Periodic lattice N = 128 for x-dependent symbols, a wide log grid otherwise."""
    if not p.is_x_independent:
        return PhaseGrid.torus(p.n, 128)
    return PhaseGrid.log(p.n, 1e-6, 2.0 ** 10, 241 if p.n == 1 else 61)


def _index_pairs(n, max_alpha, max_beta, x_independent):
    alphas = [a for k in range(max_alpha + 1) for a in multi_indices(n, k)]
    betas = [b for k in range(max_beta + 1) for b in multi_indices(n, k)]
    if x_independent:
        betas = [(0,) * n]
    return [(a, b) for b in betas for a in alphas]


def _class_sweep(p, pairs, m, psi, class_flag, grid):
    """Supremum, location and finiteness of each ratio on ``grid``."""
    out = {ab: [0.0, (), True] for ab in pairs}
    for x, xi in _blocks(grid):
        one_plus = 1.0 + psi.evaluate(*xi)
        for a, b in pairs:
            k = sum(a)
            power = (m - rho(k)) / 2 if class_flag == "rho" else m / 2
            d = np.abs(p.derivative(a, b)(x, xi))
            ratio = d / one_plus ** power
            slot = out[(a, b)]
            bad = ~np.isfinite(ratio)
            if bad.any():
                if slot[2]:
                    slot[:] = [math.inf, _first_bad(bad, x, xi), False]
                continue
            j = int(np.argmax(ratio))
            if slot[2] and ratio[j] > slot[0]:
                slot[0] = float(ratio[j])
                slot[1] = tuple(float(c[j]) for c in x) + tuple(float(c[j]) for c in xi)
    return out


def verify_symbol_class(p, claimed_m, psi=None, class_flag="rho", max_alpha=2, max_beta=2,
                        epsilon=EPSILON, grid=None, tol=GROWTH_TOL):
    """Check ``|d_x^beta d_xi^alpha p| <= c (1+psi)^((m + eps - rho(|alpha|))/2)``.

    For the 0-class (``class_flag="zero"``) the exponent is ``(m + eps)/2``
    for every ``alpha``. ``c_{alpha,beta}`` is the supremum of the ratio on
    ``grid`` and on ``grid.refined()``; an entry passes when both are finite
    and the refined constant is at most ``(1 + tol)`` times the coarse one.

    Parameters
    ----------
    p : Symbol
    claimed_m : float
    psi : PsiSpec, optional
        Defaults to ``p.ref_psi``.
    grid : PhaseGrid, optional
        Defaults to :func:`default_grid`.

    Returns
    -------
    ClassReport
    """
    psi = psi or p.ref_psi
    if psi.dim != p.n:
        raise InputError("psi and symbol dimensions differ")
    grid = grid or default_grid(p)
    fine_grid = grid.refined()
    m = claimed_m + epsilon
    pairs = _index_pairs(p.n, max_alpha, max_beta, p.is_x_independent)
    coarse = _class_sweep(p, pairs, m, psi, class_flag, grid)
    fine = _class_sweep(p, pairs, m, psi, class_flag, fine_grid)
    report = ClassReport(f"symbol-class-{class_flag}", claimed_m=claimed_m, epsilon=epsilon,
                         grid=f"{grid.describe()} -> {fine_grid.describe()}")
    for ab in pairs:
        c0, loc0, f0 = coarse[ab]
        c1, loc1, f1 = fine[ab]
        finite = f0 and f1
        stable = finite and c1 <= (1 + tol) * c0 + 1e-12
        loc = loc1 if f0 else loc0
        note = "" if finite else "non-finite ratio"
        report.entries.append(ClassEntry(ab[0], ab[1], c1, c0, loc, finite, stable, note))
    return report


def verify_ellipticity(q, psi, m, R=0.0, grid=None, tol=GROWTH_TOL):
    """``delta0 = inf_{|xi| >= R} Re q / (1+psi)^(m/2)`` and a pass flag.

    Passes when ``delta0 > 0`` on the base and refined grids and the refined
    value does not drop below ``(1 - tol)`` times the base value.

    Raises
    ------
    InputError
        If no grid point satisfies ``|xi| >= R``.
    """
    if grid is None:
        grid = PhaseGrid.torus(q.n, 64) if not q.is_x_independent else PhaseGrid.box(q.n, 64.0, 257)

    def sweep(g):
        best, found = math.inf, False
        for x, xi in _blocks(g):
            keep = np.sqrt(sum(c * c for c in xi)) >= R
            if not keep.any():
                continue
            found = True
            x = tuple(c[keep] for c in x)
            xi = tuple(c[keep] for c in xi)
            v = np.real(q(x, xi)) / (1.0 + psi.evaluate(*xi)) ** (m / 2)
            v = np.where(np.isfinite(v), v, -math.inf)
            best = min(best, float(v.min()))
        if not found:
            raise InputError(f"grid has no xi with |xi| >= {R}")
        return best

    d0 = sweep(grid)
    d1 = sweep(grid.refined())
    delta = min(d0, d1)
    return delta, bool(d0 > 0 and d1 > 0 and d1 >= (1 - tol) * d0)


# ----------------------------------------------------------------------
# composition
# ----------------------------------------------------------------------

def _same_psi(a, b):
    if a is b:
        return True
    if a.kind != b.kind or a.dim != b.dim or a.params != b.params:
        return False
    return a.expr is not None and b.expr is not None and sp.simplify(a.expr - b.expr) == 0


def leading_composition(q1, q2):
    """``q1 q2 + sum_j d_{xi_j} q1 * (-i d_{x_j} q2)`` as a :class:`Symbol`."""
    xs, xis = phase_symbols(q1.n)
    expr = q1.expr * q2.expr + sum(sp.diff(q1.expr, xi) * (-sp.I) * sp.diff(q2.expr, x)
                                   for x, xi in zip(xs, xis))
    order = None if None in (q1.order_m, q2.order_m) else q1.order_m + q2.order_m
    meta = {"provenance": f"leading({q1.expr} o {q2.expr})"}
    return Symbol(sp.expand(expr), q1.n, order, q1.ref_psi, "rho", meta)


def _remainder_table(q1, q2, leading, N):
    from .torus import TorusGrid, composition_symbol
    g = TorusGrid(q1.n, N)
    sigma = composition_symbol(q1, q2, g)
    X = [m.ravel()[:, None] for m in g.x_mesh()]
    XI = [m.ravel()[None, :] for m in g.xi_mesh()]
    lead = leading(X, XI) * np.ones_like(sigma)
    return g, sigma, sigma - lead


def _table_derivative(table, g, alpha, beta):
    """Spectral x-derivatives and central lattice xi-differences of a table
    ``r[x_index, k_index]`` (both in grid order, k in FFT order)."""
    n, N = g.n, g.N
    r = table.reshape(g.shape + g.shape)
    if any(beta):
        kx = np.fft.fftfreq(N, 1.0 / N) * (2 * np.pi / g.L)
        rh = np.fft.fftn(r, axes=tuple(range(n)))
        for d, b in enumerate(beta):
            if b:
                shape = [1] * (2 * n)
                shape[d] = N
                rh = rh * ((1j * kx) ** b).reshape(shape)
        r = np.fft.ifftn(rh, axes=tuple(range(n)))
    h = 2 * np.pi / g.L
    for d, a in enumerate(alpha):
        ax = n + d
        for _ in range(a):
            r = (np.roll(r, -1, axis=ax) - np.roll(r, 1, axis=ax)) / (2 * h)
    return r.reshape(table.shape)


def _remainder_sweep(table, sigma, g, pairs, m, psi, band):
    xi = [c.ravel() for c in g.xi_mesh()]
    inside = _band_mask(g, band)
    one_plus = (1.0 + psi.evaluate(*xi))[inside]
    X = np.stack([c.ravel() for c in g.x_mesh()])
    # ratios below this level are indistinguishable from roundoff in sigma
    scale = float(np.max(np.abs(sigma[:, inside]) / one_plus ** (m / 2)))
    out = {"floor": 1e-12 * max(scale, 1.0)}
    for a, b in pairs:
        d = np.abs(_table_derivative(table, g, a, b))[:, inside] / one_plus ** (m / 2)
        i, j = np.unravel_index(int(np.argmax(d)), d.shape)
        loc = tuple(float(v) for v in X[:, i]) + tuple(float(c[inside][j]) for c in xi)
        out[(a, b)] = (float(d[i, j]), loc, bool(np.all(np.isfinite(d))))
    return out


def compose_symbols_leading(q1, q2, N=64, max_alpha=2, max_beta=2, epsilon=0.0, tol=GROWTH_TOL):
    """Leading composition symbol and a 0-class probe of the remainder.

    The exact symbol of the discrete operator ``q1(x,D) q2(x,D)`` is
    extracted on periodic lattices of size ``N`` and ``2N`` (see
    :func:`vosub.torus.composition_symbol`). The remainder ``sigma -
    leading`` is checked against ``(1+psi)^((m1+m2-2+eps)/2)`` on the
    interior band ``|k| <= N/4``, where neither aliasing nor the lattice
    differences in ``xi`` reach the edge of the frequency box.

    Returns
    -------
    leading : Symbol
    report : ClassReport
        ``extras["max_abs_remainder"]`` holds the largest absolute remainder
        on the band of the base lattice.
    """
    if q1.n != q2.n:
        raise InputError("symbol dimensions differ")
    if not _same_psi(q1.ref_psi, q2.ref_psi):
        raise InputError("symbols carry different reference functions psi")
    if q1.expr is None or q2.expr is None:
        raise InputError("composition needs closed-form symbols")
    if q1.n > 2 or N > 128:
        raise InputError("the dense composition oracle is limited to n <= 2 and N <= 128")
    lead = leading_composition(q1, q2)
    m = q1.order_m + q2.order_m - 2 + epsilon
    pairs = _index_pairs(q1.n, max_alpha, max_beta, False)
    g0, s0, t0 = _remainder_table(q1, q2, lead, N)
    g1, s1, t1 = _remainder_table(q1, q2, lead, 2 * N)
    c = _remainder_sweep(t0, s0, g0, pairs, m, q1.ref_psi, N // 4)
    f = _remainder_sweep(t1, s1, g1, pairs, m, q1.ref_psi, N // 2)
    report = ClassReport("composition-remainder-zero", claimed_m=m - epsilon, epsilon=epsilon,
                         grid=f"torus N={N} -> {2 * N}, band |k| <= N/4")
    for ab in pairs:
        c0, _, fin0 = c[ab]
        c1, loc, fin1 = f[ab]
        finite = fin0 and fin1
        floor = f["floor"] * (g1.N / 2) ** sum(ab[1]) * 2.0 ** sum(ab[0])
        noise = c1 <= floor
        stable = finite and (c1 <= (1 + tol) * c0 + 1e-12 or noise)
        report.entries.append(ClassEntry(ab[0], ab[1], c1, c0, loc, finite, stable,
                                         "roundoff level" if noise else ""))
    report.extras["max_abs_remainder"] = float(np.max(np.abs(t0[:, _band_mask(g0, N // 4)])))
    report.extras["max_abs_remainder_refined"] = float(np.max(np.abs(t1[:, _band_mask(g1, N // 2)])))
    return lead, report


def _band_mask(g, K):
    k = [np.rint(c.ravel() * g.L / (2 * np.pi)) for c in g.xi_mesh()]
    return np.max(np.abs(k), axis=0) <= K


# ----------------------------------------------------------------------
# reference functions and the generation budget
# ----------------------------------------------------------------------

def _scalar_bernstein(f):
    if isinstance(f, BernsteinFamily):
        if not f.is_x_independent:
            raise InputError("reference functions need x-independent Bernstein functions")
        return f.expr
    return sp.sympify(f, locals={"s": S})


def _sqrt_one_plus(psi):
    n = psi.dim
    if psi.expr is not None:
        return Symbol(sp.sqrt(1 + psi.expr), n, None, psi)
    return Symbol(None, n, None, psi, func=lambda x, xi: np.sqrt(1 + psi.evaluate(*xi)),
                  x_independent=True)


def _lattice_search(passes, hi_steps):
    """Smallest ``j`` in ``[0, hi_steps]`` with ``passes(j)``, assuming
    monotonicity; ``None`` when ``passes(hi_steps)`` fails."""
    top = passes(hi_steps)
    if not top:
        return None, top
    lo, hi, best = 0, hi_steps, top
    first = passes(0)
    if first:
        return 0, first
    while hi - lo > 1:
        mid = (lo + hi) // 2
        r = passes(mid)
        if r:
            hi, best = mid, r
        else:
            lo = mid
    return hi, best


class _Verdict:
    """Truthy wrapper carrying the report of a lattice probe."""

    def __init__(self, report):
        self.report = report

    def __bool__(self):
        return self.report.passed


def reference_functions(f0, f1, c0, c1, psi, grid=None, lattice=LATTICE, max_alpha=2):
    """``psi0 = c0 f0(psi)``, ``psi1 = c1 f1(psi)`` and the fitted ``sigma``.

    ``sigma`` is the smallest value on the lattice ``j / lattice`` in
    ``[0, 1]`` for which ``(1 + psi1)^(1/2)`` passes the rho-class check at
    order ``1 + sigma`` against ``psi0`` (with zero slack).
    ``report.extras["sigma_below_half"]`` records the necessary condition
    ``sigma < 1/2``.

    The ordering ``f0 <= f1`` is required on ``s >= 1`` only: below that
    both are bounded and the order comparison does not see them (for
    example ``sqrt(s) > s`` on ``(0, 1)``).

    Raises
    ------
    InputError
        If ``f0 > f1`` somewhere on ``[1, 1e3]`` or a coefficient is not positive.
    IncompatibilityError
        If the check fails even at ``sigma = 1``.
    """
    if c0 <= 0 or c1 <= 0:
        raise InputError("c0 and c1 must be positive")
    e0, e1 = _scalar_bernstein(f0), _scalar_bernstein(f1)
    s = np.geomspace(1.0, 1e3, 61)
    v0 = vectorize(e0, (S,))(s)
    v1 = vectorize(e1, (S,))(s)
    if np.any(v0 > v1 * (1 + 1e-12) + 1e-15):
        j = int(np.argmax(v0 - v1))
        raise InputError(f"f0 exceeds f1 at s = {s[j]:g}")
    psi0 = PsiSpec.subordinated(psi, e0, c0)
    psi1 = PsiSpec.subordinated(psi, e1, c1)
    root = _sqrt_one_plus(psi1)

    def passes(j):
        return _Verdict(verify_symbol_class(root, 1 + j / lattice, psi0, "rho", max_alpha, 0,
                                            0.0, grid))

    j, verdict = _lattice_search(passes, lattice)
    if j is None:
        raise IncompatibilityError(
            "(1 + psi1)^(1/2) is not of order 2 with respect to psi0; sigma > 1")
    report = verdict.report
    report.check = "sigma-fit"
    report.sigma = j / lattice
    report.extras["sigma_below_half"] = report.sigma < 0.5
    return psi0, psi1, report


def fit_order_slack(p, base_order, psi, grid=None, lattice=LATTICE, max_slack=2.0,
                    max_alpha=2, max_beta=2):
    """Smallest ``tau`` on the lattice with ``p`` in the rho-class of order
    ``base_order + tau`` with respect to ``psi``; returns ``(tau, report)``
    with ``tau = nan`` when ``max_slack`` does not suffice."""
    steps = int(round(max_slack * lattice))

    def passes(j):
        return _Verdict(verify_symbol_class(p, base_order + j / lattice, psi, "rho",
                                            max_alpha, max_beta, 0.0, grid))

    j, verdict = _lattice_search(passes, steps)
    return (math.nan if j is None else j / lattice), verdict.report


def generation_budget(p, lam, psi0, psi1, sigma, grid=None, lattice=LATTICE, max_slack=2.0):
    """Fit ``tau1`` (``p`` of order ``2 + tau1`` w.r.t. ``psi1``) and ``tau0``
    (``1/(p+lam)`` of order ``-2 + tau0`` w.r.t. ``psi0``) and report the
    budget ``tau1 + tau0 + sigma (2 + tau1)``.

    ``report.extras["budget_below_one"]`` is the generation verdict.
    """
    tau1, r1 = fit_order_slack(p, 2.0, psi1, grid, lattice, max_slack)
    inv = inverse_symbol(p, lam)
    tau0, r0 = fit_order_slack(inv, -2.0, psi0, grid, lattice, max_slack)
    report = ClassReport("generation-budget", grid=r1.grid, tau0=tau0, tau1=tau1, sigma=sigma)
    for tag, r in (("tau1", r1), ("tau0", r0)):
        for e in r.entries:
            e.note = tag if not e.note else f"{tag}: {e.note}"
            report.entries.append(e)
    b = report.budget
    report.extras["budget_below_one"] = bool(b is not None and math.isfinite(b) and b < 1)
    return report
