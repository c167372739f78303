import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vosub import (BernsteinFamily, CapabilityError, DegenerateFamilyError, InputError,
                   NumericalIntegrityError, PsiSpec, envelope_and_growth, eval_bernstein_family,
                   eval_psi, verify_bernstein, verify_lambda_class)
from vosub.grids import PhaseGrid
from vosub.ndf import scalar_inequality_gap, subadditivity_probe

S_GRID = np.geomspace(1e-3, 1e3, 241)


def damped_power_value(alpha, s):
    """High-precision oracle for s^(a/2) (1 - exp(-4 s^(a/2)))."""
    with mpmath.workdps(40):
        h = mpmath.mpf(s) ** (mpmath.mpf(alpha) / 2)
        return float(h * (1 - mpmath.exp(-4 * h)))


# ---------------------------------------------------------------- eval_psi

@pytest.mark.parametrize("psi, xi, expected", [
    (PsiSpec.quadratic(2), (0.0, 0.0), 0.0),
    (PsiSpec.quadratic(2), (1.0, 2.0), 5.0),
    (PsiSpec.power(1), (3.0,), 3.0),
    (PsiSpec.log_type(), (1.0,), math.log(2.0)),
    (PsiSpec.mollified(1.0), (0.0,), 0.0),
    (PsiSpec.zero(), (7.0,), 0.0),
])
def test_eval_psi_closed_forms(psi, xi, expected):
    assert eval_psi(psi, xi) == pytest.approx(expected, abs=1e-14)


def test_stable_levy_quadrature_matches_power():
    quad = PsiSpec.stable_levy(1.0)
    assert eval_psi(quad, 3.0) == pytest.approx(3.0, rel=0.02)


def test_eval_psi_rejects_wrong_dimension():
    with pytest.raises(InputError):
        eval_psi(PsiSpec.quadratic(2), 1.0)


def test_levy_with_drift_rejected():
    with pytest.raises(InputError):
        PsiSpec.levy_khinchin(drift=[1.0])


def test_negative_value_detected():
    bad = PsiSpec.subordinated(PsiSpec.quadratic(), "-s")
    with pytest.raises(NumericalIntegrityError):
        bad.evaluate(np.array([1.0]))


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=2),
       st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_sqrt_psi_is_subadditive(xi, eta):
    for psi in (PsiSpec.quadratic(2), PsiSpec.log_type(2), PsiSpec.mollified(0.5, 2)):
        assert subadditivity_probe(psi, [xi], [eta]) <= 1e-9 * (1 + np.abs(xi).sum() + np.abs(eta).sum())


@given(st.floats(-30, 30))
def test_psi_is_symmetric_and_nonnegative(x):
    for psi in (PsiSpec.power(0.7), PsiSpec.log_type(), PsiSpec.stable_levy(1.5, n_atoms=200)):
        a, b = eval_psi(psi, x), eval_psi(psi, -x)
        assert a >= 0
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_scalar_inequality(a, t):
    assert scalar_inequality_gap(a, t) <= 1e-15


# ---------------------------------------------------------------- class Lambda

def test_lambda_quadratic_constants():
    report = verify_lambda_class(PsiSpec.quadratic())
    assert report.passed
    assert report.constant((1,)) == pytest.approx(2.0, rel=1e-3)
    assert report.constant((2,)) == pytest.approx(2.0)


@pytest.mark.parametrize("grid", [None, PhaseGrid.box(1, 8.0, 256)], ids=["through-zero", "around-zero"])
def test_lambda_power_one_fails_at_first_order(grid):
    report = verify_lambda_class(PsiSpec.power(1), xi_grid=grid)
    assert not report.passed
    bad = report.failing()
    assert bad[0].alpha == (1,)
    assert abs(bad[0].location[0]) < 0.1


def test_lambda_zero_psi_has_zero_constants():
    report = verify_lambda_class(PsiSpec.zero())
    assert report.passed
    assert report.constant((1,)) == 0.0
    assert report.constant((2,)) == 0.0


def test_lambda_fd_agrees_with_exact():
    exact = verify_lambda_class(PsiSpec.log_type(), derivative="exact")
    fd = verify_lambda_class(PsiSpec.log_type(), derivative="fd")
    for k in (1, 2):
        assert fd.constant((k,)) == pytest.approx(exact.constant((k,)), rel=1e-4)


def test_lambda_order_cap():
    with pytest.raises(CapabilityError):
        verify_lambda_class(PsiSpec.quadratic(), max_order=7)


# ---------------------------------------------------------------- Bernstein families

@pytest.mark.parametrize("s, expected", [(0.0, 0.0), (1.0, 0.981684), (4.0, 1.999329)])
def test_damped_power_values(s, expected):
    fam = BernsteinFamily.damped_power(1)
    got = eval_bernstein_family(fam, 0.3, s)
    assert got == pytest.approx(damped_power_value(1, s), rel=1e-13, abs=1e-300)
    assert got == pytest.approx(expected, abs=5e-7)


@given(st.floats(-10, 10), st.floats(1e-4, 1e4))
def test_damped_power_family_matches_mpmath(x, s):
    fam = BernsteinFamily.damped_power("0.6 + 0.3*sin(x)")
    alpha = 0.6 + 0.3 * math.sin(x)
    assert eval_bernstein_family(fam, x, s) == pytest.approx(damped_power_value(alpha, s), rel=1e-12)


def test_negative_s_rejected():
    with pytest.raises(InputError):
        eval_bernstein_family(BernsteinFamily.identity(), 0.0, -1.0)


@pytest.mark.parametrize("expr, max_k, fail_k", [
    ("s", 4, None),
    ("s**2", 2, 2),
    ("sqrt(s)*(1 - exp(-4*sqrt(s)))", 4, None),
    ("1 - exp(-s)", 4, None),
    ("s/(1 + s)", 4, None),
    ("exp(-s)", 2, 1),
])
def test_verify_bernstein(expr, max_k, fail_k):
    report = verify_bernstein(BernsteinFamily.from_expr(expr), [0.0], S_GRID, max_k=max_k)
    if fail_k is None:
        assert report.passed
    else:
        assert not report.passed
        assert report.failing()[0].alpha == (fail_k,)


@pytest.mark.parametrize("s", [1e-3, 0.37, 1.0, 12.0, 900.0])
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_bernstein_derivatives_against_high_precision_fd(s, k):
    fam = BernsteinFamily.damped_power(1)
    with mpmath.workdps(50):
        f = lambda t: mpmath.sqrt(t) * (1 - mpmath.exp(-4 * mpmath.sqrt(t)))
        oracle = float(mpmath.diff(f, mpmath.mpf(s), k))
    got = float(fam.ds(k)((np.array(0.0),), np.array(s)))
    assert got == pytest.approx(oracle, rel=1e-10)
    assert (-1) ** (k - 1) * oracle >= 0


def test_derivative_order_cap():
    with pytest.raises(CapabilityError):
        BernsteinFamily.identity().ds(7)


def test_callable_family_without_closure():
    fam = BernsteinFamily(func=lambda x, s: s, derivatives={1: lambda x, s: np.ones_like(s)})
    assert verify_bernstein(fam, [0.0], S_GRID, max_k=1).passed
    with pytest.raises(CapabilityError):
        verify_bernstein(fam, [0.0], S_GRID, max_k=2)


# ---------------------------------------------------------------- envelopes

def test_envelope_of_two_exponents():
    fam = BernsteinFamily.from_expr("s**(1/4 + sin(x)**2/4)")
    s = np.geomspace(1e-3, 1e5, 201)
    fit = envelope_and_growth(fam, [0.0, math.pi / 2], s, PsiSpec.quadratic())
    upper = s >= 1
    assert np.allclose(fit.f0[upper], s[upper] ** 0.25, rtol=1e-12)
    assert np.allclose(fit.f1[upper], s[upper] ** 0.5, rtol=1e-12)
    assert fit.rho0 == pytest.approx(0.25, rel=0.01)
    assert fit.rho1 == pytest.approx(2.0, rel=1e-9)
    assert fit.c1_tilde == pytest.approx(1.0, rel=1e-9)


def test_envelope_identity():
    fit = envelope_and_growth(BernsteinFamily.identity(), [0.0], np.geomspace(1e-2, 1e4, 61))
    assert np.array_equal(fit.f0, fit.f1)
    assert fit.rho0 == pytest.approx(1.0, rel=1e-12)
    assert fit.c0_tilde == pytest.approx(1.0, rel=1e-12)


def test_envelope_lower_bound_holds():
    fam = BernsteinFamily.damped_power("0.6 + 0.3*sin(x)")
    s = np.geomspace(1e-3, 1e5, 161)
    fit = envelope_and_growth(fam, np.linspace(0, 2 * math.pi, 33), s)
    upper = s >= 1
    assert np.all(fit.f0[upper] >= fit.c0_tilde * s[upper] ** fit.rho0 * (1 - 1e-12))


def test_envelope_degenerate_family():
    with pytest.raises(DegenerateFamilyError):
        envelope_and_growth(BernsteinFamily.from_expr("0*s"), [0.0], np.geomspace(1e-2, 1e4, 41))
