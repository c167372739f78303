"""Necessary consequences of Feller generation, traced on the torus.

The checks here cannot prove that ``-p(x,D)`` generates a Feller semigroup
on ``C_inf(R^n)``. They test properties any such generator and its
semigroup must have, using band-limited trigonometric polynomials
(``|k| <= N/4``) for which the lattice operator is exact.
"""
import numpy as np
import scipy.fft as sfft
import sympy as sp

from ._sym import S, vectorize
from .errors import InputError
from .reports import CheckResult, FellerReport
from .symcalc import Symbol
from .torus import TorusGridFn, discretize, semigroup_evolve

PMP_TOL = 1e-8
TRACE_TOL = 1e-10
LAW_TOL = 1e-12
MASS_TOL = 1e-9


# ----------------------------------------------------------------------
# positive maximum principle
# ----------------------------------------------------------------------

def _trig_eval(coef, grid, point):
    """Value, gradient and Hessian of the trigonometric polynomial with
    unitary DFT coefficients ``coef`` at an arbitrary point."""
    k = np.stack([m.ravel() for m in np.meshgrid(*([grid.k_axis * (2 * np.pi / grid.L)] * grid.n),
                                                 indexing="ij")])
    c = coef.ravel() / np.sqrt(grid.size)
    e = c * np.exp(1j * (k.T @ point))
    val = e.sum().real
    grad = (1j * k @ e).real
    hess = -((k * e) @ k.T).real
    return val, grad, hess


def _max_on_lattice(u):
    """Translate the real band-limited ``u`` so that its maximum over the
    whole torus (not only over the lattice) sits at a lattice point.

    The continuous maximiser is located on an 8x zero-padded grid and
    polished by Newton steps; the shift is applied exactly in Fourier space.
    Returns the shifted function and the lattice index of its maximum.
    """
    g = u.grid
    coef = u.coefficients()
    fine = u
    for _ in range(3):
        fine = fine.refined()
    j = np.unravel_index(int(np.argmax(fine.values.real)), fine.grid.shape)
    point = np.array([fine.grid.axis[i] for i in j])
    for _ in range(8):
        _, grad, hess = _trig_eval(coef, g, point)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        point = point - step
        if np.max(np.abs(step)) < 1e-14:
            break
    h = g.L / g.N
    target = np.round(point / h) * h
    shift = point - target
    k = np.meshgrid(*([g.k_axis * (2 * np.pi / g.L)] * g.n), indexing="ij")
    phase = np.exp(1j * sum(kd * sd for kd, sd in zip(k, shift)))
    shifted = TorusGridFn(g, sfft.ifftn(coef * phase, norm="ortho").real)
    idx = tuple(int(v) % g.N for v in np.round(target / h))
    return shifted, idx


def pmp_value(p, u, index=None):
    """``(A u)(x0)`` with ``A = -p(x,D)`` at the lattice maximiser ``x0`` of ``u``.

    ``p`` is a :class:`~vosub.symcalc.Symbol` or a discretised operator.
    Returns ``(value, normalised_violation, index)`` where the violation is
    ``max(0, value) / (sup|u| * max_k |p(x0, xi_k)|)``.
    """
    op = discretize(p, u.grid)
    g = u.grid
    if index is None:
        index = np.unravel_index(int(np.argmax(u.values.real)), g.shape)
    index = tuple(int(i) for i in index)
    value = float(-op.apply(u.values)[index].real)
    x0 = [np.full(g.size, g.axis[i]) for i in index]
    xi = [m.ravel() for m in g.xi_mesh()]
    scale = float(np.max(np.abs(op.symbol(x0, xi)))) * float(np.max(np.abs(u.values)))
    viol = max(0.0, value) / scale if scale > 0 else max(0.0, value)
    return value, viol, index


def check_positive_maximum_principle(p, grid, trials=200, seed=0, tol=PMP_TOL, bandwidth=None):
    """Seeded trials of the positive maximum principle for ``A = -p(x,D)``.

    Each trial draws a real random trigonometric polynomial with
    ``|k| <= bandwidth`` (default ``N/4``), translates it so that its global
    maximum lies on the lattice and adds a constant so that the maximum is a
    random value in ``[0, sup|u|]``. Trials whose maximum is not strict on
    the lattice (flat functions) are skipped and counted. The verdict
    passes when every normalised violation (see :func:`pmp_value`) is at
    most ``tol``.
    """
    if not getattr(p, "is_real", True):
        raise InputError("the positive maximum principle check needs a real symbol")
    rng = np.random.default_rng(seed)
    K = bandwidth or grid.N // 4
    op = discretize(p, grid)
    worst, loc, skipped = -1.0, (), 0
    for _ in range(trials):
        v = TorusGridFn.random_band_limited(grid, K, rng, decay=rng.uniform(0.5, 2.0))
        amp = float(np.max(np.abs(v.values)))
        if amp == 0:
            skipped += 1
            continue
        v, idx = _max_on_lattice(v)
        vals = v.values.real
        vals = vals - vals[idx] + rng.uniform(0.0, 1.0) * amp
        top2 = np.sort(vals.ravel())[-2:]
        if top2[1] - top2[0] <= 1e-12 * amp or int(np.argmax(vals)) != np.ravel_multi_index(idx, grid.shape):
            skipped += 1
            continue
        _, viol, idx = pmp_value(op, TorusGridFn(grid, vals), idx)
        if viol > worst:
            worst, loc = viol, tuple(float(grid.axis[i]) for i in idx)
    check = CheckResult("positive-maximum-principle", trials - skipped, max(worst, 0.0), loc,
                        tol, skipped)
    return FellerReport([check], {"pmp_seed": seed, "pmp_bandwidth": K, "pmp_trials": trials,
                                  "pmp_skipped": skipped})


# ----------------------------------------------------------------------
# semigroup traces
# ----------------------------------------------------------------------

def check_positivity_contraction(run, u0, tol=TRACE_TOL):
    """Positivity, sup-norm contraction and monotone sup-norm along a run.

    Positivity is only asserted when ``u0 >= 0``; otherwise that check is
    recorded with zero trials and one skip.
    """
    if not u0.is_real():
        raise InputError("u0 must be real")
    d = run.diagnostics
    sup0 = float(np.max(np.abs(u0.values)))
    steps = len(d)
    checks = []
    if float(u0.values.real.min()) >= 0:
        mins = np.array([r["min_real"] for r in d])
        j = int(np.argmin(mins))
        checks.append(CheckResult("positivity", steps, max(0.0, -float(mins[j])), (j,), tol))
    else:
        checks.append(CheckResult("positivity", 0, 0.0, (), tol, skipped=1))
    sups = np.array([r["sup_norm"] for r in d])
    j = int(np.argmax(sups))
    checks.append(CheckResult("sup-contraction", steps, max(0.0, float(sups[j]) - sup0), (j,), tol))
    inc = np.diff(sups)
    j = int(np.argmax(inc)) if inc.size else 0
    worst = max(0.0, float(inc[j])) if inc.size else 0.0
    checks.append(CheckResult("sup-monotone", max(steps - 1, 0), worst, (j + 1,), tol))
    return FellerReport(checks, {"scheme": run.scheme, "dt": run.dt, "steps": run.steps})


def check_mass_conservation(run, tol=MASS_TOL):
    """Grid mean of ``T_t u0`` constant in ``t`` (relative to ``sup|u0|``);
    meaningful for conservative symbols with ``p(x, 0) = 0``."""
    means = np.array([np.mean(s.values) for s in run.snapshots])
    scale = max(float(np.max(np.abs(run.snapshots[0].values))), 1e-300)
    dev = np.abs(means - means[0]) / scale
    j = int(np.argmax(dev))
    return FellerReport([CheckResult("mass-conservation", len(means), float(dev[j]), (j,), tol)])


def _scalar_expr(f):
    from .ndf import BernsteinFamily
    if isinstance(f, BernsteinFamily):
        if not f.is_x_independent:
            raise InputError("subordination consistency needs an x-independent f")
        return f.expr
    return sp.sympify(f, locals={"s": S})


SCHEME_ORDER = {"implicit-euler": 1, "crank-nicolson": 2}


def subordinated_multiplier(f, psi, grid):
    """``f(psi(xi_k))`` on the lattice (Nyquist zeroed)."""
    fn = vectorize(_scalar_expr(f), (S,))
    vals = np.asarray(fn(psi.evaluate(*grid.xi_mesh())), float)
    return np.where(grid.nyquist_mask(), 0.0, vals)


def exact_semigroup(f, psi, t, u0):
    """``T_t u0`` for the multiplier ``exp(-t f(psi(xi)))``."""
    mult = np.exp(-t * subordinated_multiplier(f, psi, u0.grid))
    return TorusGridFn(u0.grid, sfft.ifftn(mult * u0.coefficients(), norm="ortho"))


def check_subordination_consistency(f, psi, t, u0, dt=0.01, scheme="crank-nicolson", tol=None):
    """Compare the exact subordinated semigroup with a time-stepped run.

    The relative sup-norm gap between ``exp(-t f(psi(D))) u0`` and
    :func:`~vosub.torus.semigroup_evolve` of the symbol ``f(psi(xi))`` must
    not exceed ``tol`` (default ``dt ** order`` of the scheme). The
    semigroup law ``T_t = T_{t/2} T_{t/2}`` of the exact multiplier is
    checked to ``1e-12``.
    """
    if t < 0:
        raise InputError("t must be nonnegative")
    expr = _scalar_expr(f)
    tol = dt ** SCHEME_ORDER[scheme] if tol is None else tol
    exact = exact_semigroup(expr, psi, t, u0)
    scale = max(float(np.max(np.abs(exact.values))), 1e-300)
    steps = int(round(t / dt))
    if steps == 0:
        gap = float(np.max(np.abs(exact.values - u0.values))) / scale
    else:
        if abs(steps * dt - t) > 1e-12 * max(t, 1.0):
            raise InputError("t must be a multiple of dt")
        if psi.expr is not None:
            symbol = Symbol(expr.subs(S, psi.expr), psi.dim, ref_psi=psi)
        else:
            fn = vectorize(expr, (S,))
            symbol = Symbol(None, psi.dim, ref_psi=psi, func=lambda x, xi: fn(psi.evaluate(*xi)),
                            x_independent=True)
        run = semigroup_evolve(symbol, u0, dt, steps, scheme, keep_snapshots=False)
        gap = float(np.max(np.abs(run.final.values - exact.values))) / scale
    half = exact_semigroup(expr, psi, t / 2, exact_semigroup(expr, psi, t / 2, u0))
    law = float(np.max(np.abs(half.values - exact.values))) / scale
    checks = [CheckResult("subordination-consistency", max(steps, 1), gap, (t,), tol),
              CheckResult("semigroup-law", 1, law, (t / 2, t / 2), LAW_TOL)]
    return FellerReport(checks, {"scheme": scheme, "dt": dt, "t": t})


def builtin_feller_suite(p, u0, dt, steps, trials=200, seed=0, scheme="implicit-euler",
                         conservative=None, budget=None):
    """PMP trials, a semigroup run with positivity and contraction checks,
    and (for conservative symbols) mass conservation, merged in one report."""
    report = check_positive_maximum_principle(p, u0.grid, trials, seed)
    run = semigroup_evolve(p, u0, dt, steps, scheme)
    report = report.merge(check_positivity_contraction(run, u0))
    if conservative is None:
        g = u0.grid
        x = [m.ravel() for m in g.x_mesh()]
        conservative = bool(np.all(np.asarray(p(x, [np.zeros(g.size)] * g.n)) == 0))
    if conservative:
        report = report.merge(check_mass_conservation(run))
    report.budget = budget
    return report, run
