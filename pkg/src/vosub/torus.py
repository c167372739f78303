"""Pseudo-differential operators on the periodic torus via the unitary DFT.

Grid functions are sampled on ``x_j = j L / N`` in each dimension, and
frequencies are ``xi_k = 2 pi k / L`` with ``k in {-N/2, ..., N/2 - 1}``. The
Nyquist row ``k = -N/2`` is discarded whenever a symbol is applied. Every
norm and inner product carries the quadrature weight ``(L/N)^n``, so
``||exp(i x)||_0^2 = 2 pi`` on ``[0, 2 pi)``.
"""
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse.linalg as spla

from .errors import (InputError, NonConvergenceError, SemigroupAborted,
                     SymmetryIntegrityError)

MAGIC = b"TGF1"
DENSE_LIMIT = 2 ** 24  # kernel entries cached per operator


@dataclass(frozen=True)
class TorusGrid:
    n: int = 1
    N: int = 64
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise InputError("torus dimension must be 1, 2 or 3")
        if self.N < 8 or self.N & (self.N - 1):
            raise InputError(f"N must be a power of two >= 8, got {self.N}")

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def size(self):
        return self.N ** self.n

    @property
    def weight(self):
        return (self.L / self.N) ** self.n

    @property
    def axis(self):
        return np.arange(self.N) * (self.L / self.N)

    @property
    def k_axis(self):
        """Integer frequencies in FFT order."""
        return np.fft.fftfreq(self.N, 1.0 / self.N)

    def x_mesh(self):
        return np.meshgrid(*([self.axis] * self.n), indexing="ij")

    def xi_mesh(self):
        k = self.k_axis * (2 * np.pi / self.L)
        return np.meshgrid(*([k] * self.n), indexing="ij")

    def nyquist_mask(self):
        """True on every frequency with some component equal to -N/2."""
        mask = np.zeros(self.shape, bool)
        for d in range(self.n):
            idx = [slice(None)] * self.n
            idx[d] = self.N // 2
            mask[tuple(idx)] = True
        return mask

    def band_mask(self, K):
        """Frequencies with ``max_d |k_d| <= K``."""
        k = np.abs(self.k_axis)
        mesh = np.meshgrid(*([k] * self.n), indexing="ij")
        return np.max(mesh, axis=0) <= K

    def refined(self):
        return TorusGrid(self.n, 2 * self.N, self.L)

    def phase_grid(self):
        from .grids import PhaseGrid
        return PhaseGrid.torus(self.n, self.N, self.L)


@dataclass
class TorusGridFn:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise InputError("grid function has non-finite values")

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, fn(*grid.x_mesh()))

    @classmethod
    def mode(cls, grid, k, amplitude=1.0):
        k = np.atleast_1d(k)
        phase = sum(kd * (2 * np.pi / grid.L) * xd for kd, xd in zip(k, grid.x_mesh()))
        return cls(grid, amplitude * np.exp(1j * phase))

    @classmethod
    def random_band_limited(cls, grid, bandwidth, rng, real=True, decay=0.0):
        """Random trigonometric polynomial with ``max|k| <= bandwidth``."""
        c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        k2 = sum(m ** 2 for m in np.meshgrid(*([grid.k_axis] * grid.n), indexing="ij"))
        c *= grid.band_mask(bandwidth) * (1.0 + k2) ** (-decay / 2)
        c[grid.nyquist_mask()] = 0
        v = sfft.ifftn(c, norm="ortho")
        return cls(grid, v.real if real else v)

    def coefficients(self):
        """Unitary DFT coefficients (FFT order)."""
        return sfft.fftn(self.values, norm="ortho")

    def coefficient(self, k):
        """Amplitude ``a`` of ``a exp(i k.x)`` contained in the function."""
        idx = tuple(int(kd) % self.grid.N for kd in np.atleast_1d(k))
        return self.coefficients()[idx] / np.sqrt(self.grid.size)

    def is_real(self, tol=1e-12):
        return float(np.max(np.abs(self.values.imag), initial=0.0)) <= tol * max(
            1.0, float(np.max(np.abs(self.values), initial=0.0)))

    def refined(self):
        """The same band-limited function sampled on the doubled grid."""
        fine = self.grid.refined()
        c = self.coefficients()
        c[self.grid.nyquist_mask()] = 0
        big = np.zeros(fine.shape, complex)
        k = self.grid.k_axis.astype(int)
        idx = np.ix_(*([k % fine.N] * self.grid.n))
        big[idx] = c
        scale = np.sqrt(fine.size / self.grid.size)
        return TorusGridFn(fine, sfft.ifftn(big, norm="ortho") * scale)

    def copy(self):
        return TorusGridFn(self.grid, self.values.copy())


# ----------------------------------------------------------------------
# operator discretisation
# ----------------------------------------------------------------------

class DiscreteOperator:
    """``p(x, D)`` on a :class:`TorusGrid`.

    x-independent symbols are applied as Fourier multipliers. Otherwise
    ``(p(x,D) u)(x_j) = N^(-n/2) sum_k exp(i xi_k . x_j) p(x_j, xi_k) c_k``
    with ``c`` the unitary DFT of ``u``; the kernel is cached when it fits in
    ``DENSE_LIMIT`` entries and evaluated in row chunks otherwise.
    """

    def __init__(self, symbol, grid, jobs=None):
        if symbol.n != grid.n:
            raise InputError(f"symbol dimension {symbol.n} does not match grid dimension {grid.n}")
        self.symbol = symbol
        self.grid = grid
        self.jobs = jobs
        self.x_independent = symbol.is_x_independent
        self._nyq = grid.nyquist_mask()
        xi = [m.ravel() for m in grid.xi_mesh()]
        if self.x_independent:
            x0 = [np.zeros_like(xi[0])] * grid.n
            mult = symbol(x0, xi).reshape(grid.shape)
            self.multiplier = np.where(self._nyq, 0, mult)
            _check_finite(self.multiplier, "symbol")
            self._kernel = None
        else:
            self.multiplier = None
            self._xi = xi
            self._x = [m.ravel() for m in grid.x_mesh()]
            self._kernel = self._build(slice(None)) if grid.size ** 2 <= DENSE_LIMIT else None

    def _build(self, rows):
        g = self.grid
        x = [c[rows] for c in self._x]
        X = [c[:, None] for c in x]
        XI = [c[None, :] for c in self._xi]
        table = self.symbol(X, XI)
        _check_finite(table, "symbol")
        phase = sum(a * b for a, b in zip(X, XI))
        kern = np.exp(1j * phase) * table / np.sqrt(g.size)
        kern[:, self._nyq.ravel()] = 0
        return kern

    def apply_coefficients(self, c):
        g = self.grid
        if self.x_independent:
            return sfft.ifftn(self.multiplier * c.reshape(g.shape), norm="ortho", workers=self.jobs)
        c = c.ravel()
        if self._kernel is not None:
            return (self._kernel @ c).reshape(g.shape)
        out = np.empty(g.size, complex)
        step = max(1, DENSE_LIMIT // g.size)
        for start in range(0, g.size, step):
            rows = slice(start, min(start + step, g.size))
            out[rows] = self._build(rows) @ c
        return out.reshape(g.shape)

    def physical_batch(self, C):
        """Physical values for a batch of coefficient columns ``C`` (size, B)."""
        g = self.grid
        B = C.shape[1]
        if self.x_independent:
            D = (self.multiplier.ravel()[:, None] * C).reshape(g.shape + (B,))
            return sfft.ifftn(D, axes=tuple(range(g.n)), norm="ortho").reshape(g.size, B)
        if self._kernel is not None:
            return self._kernel @ C
        out = np.empty((g.size, B), complex)
        step = max(1, DENSE_LIMIT // g.size)
        for start in range(0, g.size, step):
            rows = slice(start, min(start + step, g.size))
            out[rows] = self._build(rows) @ C
        return out

    def coefficient_batch(self, C):
        """Coefficients of the operator applied to coefficient columns ``C``;
        exact (no transform round trip) for Fourier multipliers."""
        g = self.grid
        if self.x_independent:
            return self.multiplier.ravel()[:, None] * C
        V = self.physical_batch(C).reshape(g.shape + (C.shape[1],))
        return sfft.fftn(V, axes=tuple(range(g.n)), norm="ortho").reshape(g.size, -1)

    def apply(self, values):
        c = sfft.fftn(np.asarray(values).reshape(self.grid.shape), norm="ortho", workers=self.jobs)
        return self.apply_coefficients(c)

    def dense_matrix(self):
        """Physical-space matrix of the operator (for oracles; O(N^(2n)) memory)."""
        g = self.grid
        eye = np.eye(g.size).reshape((g.size,) + g.shape)
        cols = [self.apply(e).ravel() for e in eye]
        return np.array(cols).T

    def median_multiplier(self):
        """Median over x of ``p(x, xi_k)`` (real part), Nyquist zeroed."""
        if self.x_independent:
            return self.multiplier
        vals = []
        step = max(1, DENSE_LIMIT // self.grid.size)
        XI = [c[None, :] for c in self._xi]
        for start in range(0, self.grid.size, step):
            X = [c[start:start + step, None] for c in self._x]
            vals.append(np.real(self.symbol(X, XI)) * np.ones((len(X[0]), 1)))
        med = np.median(np.concatenate(vals), axis=0).reshape(self.grid.shape)
        return np.where(self._nyq, 0, med)


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(np.asarray(a)))[0]
        raise InputError(f"{what} evaluation produced a non-finite value at index {tuple(bad)}")


def discretize(p, grid, jobs=None):
    if isinstance(p, DiscreteOperator):
        return p
    return DiscreteOperator(p, grid, jobs)


def apply_pdo(p, u, jobs=None):
    """``p(x, D) u`` for a symbol or a :class:`DiscreteOperator`."""
    op = p if isinstance(p, DiscreteOperator) else DiscreteOperator(p, u.grid, jobs)
    if op.grid != u.grid:
        raise InputError("operator and function live on different grids")
    return TorusGridFn(u.grid, op.apply(u.values))


def _as_psi_values(psi, grid):
    xi = grid.xi_mesh()
    return psi.evaluate(*xi)


def sobolev_norm(psi, s, u):
    """``||u||_{psi,s} = ((L/N)^n sum_k (1 + psi(xi_k))^s |c_k|^2)^(1/2)``."""
    c = u.coefficients()
    w = (1.0 + _as_psi_values(psi, u.grid)) ** s
    return float(np.sqrt(u.grid.weight * np.sum(w * np.abs(c) ** 2)))


def inner(u, v):
    if u.grid != v.grid:
        raise InputError("grid mismatch")
    return u.grid.weight * np.vdot(v.values, u.values)


def bilinear_form(p, u, v, jobs=None):
    """``B(u, v) = (p(x,D) u, v)_0``."""
    if u.grid != v.grid:
        raise InputError("grid mismatch")
    return complex(inner(apply_pdo(p, u, jobs), v))


def continuity_probe(p, psi1, grid, samples=32, seed=0, bandwidth=None):
    """Estimate ``kappa`` in ``|B(u, v)| <= kappa ||u||_{psi1,1} ||v||_{psi1,1}``."""
    rng = np.random.default_rng(seed)
    op = discretize(p, grid)
    K = bandwidth or grid.N // 4
    best = 0.0
    for _ in range(samples):
        u = TorusGridFn.random_band_limited(grid, K, rng, decay=rng.uniform(0, 2))
        v = TorusGridFn.random_band_limited(grid, K, rng, decay=rng.uniform(0, 2))
        b = abs(bilinear_form(op, u, v))
        best = max(best, b / (sobolev_norm(psi1, 1, u) * sobolev_norm(psi1, 1, v)))
    return best


def energy_norm(p, lam, u):
    """``B_lambda(u, u)^(1/2)`` with ``B_lambda = B + lambda (.,.)_0``."""
    val = bilinear_form(p, u, u).real + lam * inner(u, u).real
    return float(np.sqrt(max(val, 0.0)))


def sandwich_probe(p, lam, psi0, psi1, grid, samples=32, seed=0):
    """Constants of ``||u||_{psi0,1} <~ B_lambda(u,u)^(1/2) <~ ||u||_{psi1,1}``.

    Returns ``(lower, upper)``: the largest observed
    ``||u||_{psi0,1} / ||u||_B`` and ``||u||_B / ||u||_{psi1,1}``. Both
    should stay bounded as the bandwidth grows.
    """
    rng = np.random.default_rng(seed)
    op = discretize(p, grid)
    lo = hi = 0.0
    for _ in range(samples):
        u = TorusGridFn.random_band_limited(grid, grid.N // 4, rng, decay=rng.uniform(0, 2))
        e = energy_norm(op, lam, u)
        lo = max(lo, sobolev_norm(psi0, 1, u) / e)
        hi = max(hi, e / sobolev_norm(psi1, 1, u))
    return lo, hi


# ----------------------------------------------------------------------
# Garding and coercivity
# ----------------------------------------------------------------------

@dataclass
class GardingResult:
    delta: float
    lam: float
    passed: bool
    delta0: float
    samples: int = 0

    def __iter__(self):
        return iter((self.delta, self.lam, self.passed))


def _required_lambda(delta, S, B, L):
    gap = delta * S - B
    gap = np.where(gap <= 1e-12 * (delta * S + np.abs(B)), 0.0, gap)
    return float(np.max(gap / L))


def _localized(u, lo, hi, centre, kappa):
    """Restrict ``u`` to ``lo < |k| <= hi``, multiply by a periodic bump
    centred at ``centre`` and project back onto ``|k| <= hi``."""
    g = u.grid
    c = u.coefficients() * ~g.band_mask(lo)
    v = sfft.ifftn(c, norm="ortho").real
    w = np.ones(g.shape)
    for xd, cd in zip(g.x_mesh(), centre):
        w = w * np.exp(kappa * (np.cos(2 * np.pi * (xd - cd) / g.L) - 1))
    c = sfft.fftn(w * v, norm="ortho") * g.band_mask(hi)
    c[g.nyquist_mask()] = 0
    return TorusGridFn(g, sfft.ifftn(c, norm="ortho").real)


def _centres(grid):
    # 16 centres per period in 1-D (4 x 4 in 2-D, 2 x 2 x 2 in 3-D); the
    # counts are multiples of 4 so quarter periods are included
    per_dim = {1: 16, 2: 4, 3: 2}[grid.n]
    axis = np.arange(per_dim) * grid.L / per_dim
    mesh = np.meshgrid(*([axis] * grid.n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def garding_probe(p, psi, m, grid, sample_count=32, seed=0, R=1.0, lattice=128,
                  max_multiple=4, growth_tol=0.10, kappa=4.0):
    """Fit ``Re B(u,u) >= delta ||u||^2_{psi,m/2} - lam ||u||^2_0`` on random samples.

    ``delta`` is swept upward on the lattice ``delta0 / lattice`` (up to
    ``max_multiple * delta0``) where ``delta0`` comes from
    :func:`~vosub.symcalc.verify_ellipticity`. Above the asymptotic Garding
    constant the shift needed by high-frequency functions grows with their
    frequency. The probe therefore draws, at each of a fixed lattice of
    centres ``c``, paired samples supported in ``N/8 < |k| <= N/4`` and in
    ``N/16 < |k| <= N/8`` and localised by the window
    ``exp(kappa (cos(x - c) - 1))``. The sweep stops at the first ``delta``
    for which, at some centre, the shift required by the upper band exceeds
    ``(1 + growth_tol)`` times that of the lower band. ``lam`` is the
    smallest shift admissible for all samples (the localised ones plus
    ``sample_count`` full-band functions with ``|k| <= N/4``) at the
    accepted ``delta``.

    Raises
    ------
    SymmetryIntegrityError
        If ``Im B(u,u)`` exceeds ``1e-10 |B(u,u)|`` for a real symbol.
    """
    from .symcalc import verify_ellipticity
    delta0, _ = verify_ellipticity(p, psi, m, R, grid.phase_grid())
    op = discretize(p, grid)
    rng = np.random.default_rng(seed)
    real_symbol = getattr(p, "is_real", True)

    def measure(u):
        b = bilinear_form(op, u, u)
        if real_symbol and abs(b.imag) > 1e-10 * max(abs(b), 1e-300):
            raise SymmetryIntegrityError(f"Im B(u,u) = {b.imag:.3e} for a real symbol")
        return sobolev_norm(psi, m / 2, u) ** 2, b.real, inner(u, u).real

    def stack(rows):
        return tuple(np.array(v) for v in zip(*rows))

    N = grid.N
    centres = _centres(grid)
    per_centre = max(1, sample_count // len(centres))
    high, low = [], []
    for c in centres:
        h, lw = [], []
        for _ in range(per_centre):
            u = TorusGridFn.random_band_limited(grid, N // 4, rng, decay=rng.uniform(0.0, 2.0))
            h.append(measure(_localized(u, N // 8, N // 4, c, kappa)))
            lw.append(measure(_localized(u, N // 16, N // 8, c, kappa)))
        high.append(stack(h))
        low.append(stack(lw))
    full = [measure(TorusGridFn.random_band_limited(grid, N // 4, rng,
                                                     decay=rng.uniform(0.0, 2.0)))
            for _ in range(sample_count)]
    pooled = tuple(np.concatenate(v) for v in zip(*(high + low + [stack(full)])))
    total = len(pooled[0])
    if delta0 <= 0:
        return GardingResult(0.0, _required_lambda(0.0, *pooled), False, delta0, total)
    best = 0.0
    for j in range(1, lattice * max_multiple + 1):
        d = j * delta0 / lattice
        if any(_required_lambda(d, *hc) > (1 + growth_tol) * _required_lambda(d, *lc) + 1e-12
               for hc, lc in zip(high, low)):
            break
        best = d
    lam = _required_lambda(best, *pooled)
    return GardingResult(best, lam, best >= delta0 / 4, delta0, total)


def coercivity_probe(p, psi, m, s, grid, samples=32, seed=0):
    """Smallest observed ratio for the squared coercivity estimate.

    Returns ``min (||p(x,D)u||^2_{psi,s} + ||u||^2_{psi,m+s-1/2}) / ||u||^2_{psi,m+s}``
    over random samples, an estimate of ``delta0/2``.
    """
    rng = np.random.default_rng(seed)
    op = discretize(p, grid)
    best = np.inf
    for _ in range(samples):
        u = TorusGridFn.random_band_limited(grid, grid.N // 4, rng, decay=rng.uniform(0, 2))
        pu = apply_pdo(op, u)
        lhs = sobolev_norm(psi, s, pu) ** 2 + sobolev_norm(psi, m + s - 0.5, u) ** 2
        best = min(best, lhs / sobolev_norm(psi, m + s, u) ** 2)
    return float(best)


# ----------------------------------------------------------------------
# resolvent and semigroup
# ----------------------------------------------------------------------

def resolvent_solve(p, lam, f, tol=1e-10, max_iter=None, lambda_min=None, restart=60):
    """Solve ``(p(x,D) + lam) u = f``.

    x-independent symbols are inverted exactly in Fourier space. Otherwise
    right-preconditioned GMRES is used with the multiplier
    ``1/(median_x p(x, xi) + lam)``.

    Raises
    ------
    NonConvergenceError
        If the relative residual does not reach ``tol`` within ``max_iter``
        iterations; the residual history is attached.
    """
    grid = f.grid
    op = discretize(p, grid)
    if lambda_min is not None and lam < lambda_min:
        warnings.warn(f"lambda = {lam} is below the coercivity threshold {lambda_min}",
                      RuntimeWarning, stacklevel=2)
    fc = f.coefficients()
    if op.x_independent:
        return TorusGridFn(grid, sfft.ifftn(fc / (op.multiplier + lam), norm="ortho"))
    fnorm = np.linalg.norm(fc)
    if fnorm == 0:
        return TorusGridFn(grid, np.zeros(grid.shape))
    pre = 1.0 / (op.median_multiplier() + lam)
    shape, size = grid.shape, grid.size
    max_iter = max_iter or 10 * grid.N * grid.n

    def matvec(w):
        # unknown w = Fourier coefficients of the preconditioned variable
        cu = pre * w.reshape(shape)
        out = op.apply_coefficients(cu) + lam * sfft.ifftn(cu, norm="ortho")
        return sfft.fftn(out, norm="ortho").ravel()

    A = spla.LinearOperator((size, size), matvec=matvec, dtype=complex)
    history = []
    w = np.zeros(size, complex)
    iters = 0
    while True:
        w, info = spla.gmres(A, fc.ravel(), x0=w, rtol=tol * 0.5, atol=0.0,
                             restart=min(restart, size), maxiter=1,
                             callback=lambda r: history.append(float(r)),
                             callback_type="pr_norm")
        iters = len(history)
        res = np.linalg.norm(matvec(w) - fc.ravel()) / fnorm
        if res <= tol:
            break
        if iters >= max_iter:
            raise NonConvergenceError(
                f"GMRES residual {res:.3e} > {tol:.1e} after {iters} iterations", history)
    return TorusGridFn(grid, sfft.ifftn(pre * w.reshape(shape), norm="ortho"))


@dataclass
class SemigroupRun:
    scheme: str
    dt: float
    steps: int
    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    norm_columns: tuple = ()

    @property
    def final(self):
        return self.snapshots[-1]

    def to_csv(self, stream=None, header_comment=None):
        import csv
        import io
        own = stream is None
        if own:
            stream = io.StringIO()
        if header_comment:
            stream.write(f"# {header_comment}\n")
        cols = ["step", "t", "min_real", "max_real", "sup_norm"] + list(self.norm_columns)
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(cols)
        for d in self.diagnostics:
            w.writerow([d["step"]] + [repr(float(d[c])) for c in cols[1:]])
        return stream.getvalue() if own else None


SCHEMES = ("implicit-euler", "crank-nicolson")


def semigroup_evolve(p, u0, dt, steps, scheme="implicit-euler", norms=(), tol=1e-12,
                     keep_snapshots=True):
    """March ``u' = -p(x,D) u`` from ``u0``.

    Implicit Euler solves ``(p(x,D) + 1/dt) u_{n+1} = u_n / dt``;
    Crank-Nicolson solves ``(p(x,D) + 2/dt) u_{n+1} = (2/dt - p(x,D)) u_n``.

    ``norms`` is a sequence of ``(label, psi, s)`` triples recorded in the
    diagnostics at every step.
    """
    if dt <= 0:
        raise InputError("dt must be positive")
    if scheme not in SCHEMES:
        raise InputError(f"unknown scheme {scheme!r}")
    op = discretize(p, u0.grid)
    run = SemigroupRun(scheme, dt, steps, norm_columns=tuple(n[0] for n in norms))

    def record(step, u):
        v = u.values
        d = {"step": step, "t": step * dt, "min_real": float(v.real.min()),
             "max_real": float(v.real.max()), "sup_norm": float(np.abs(v).max())}
        for label, psi, s in norms:
            d[label] = sobolev_norm(psi, s, u)
        run.diagnostics.append(d)
        if keep_snapshots or step == steps:
            run.snapshots.append(u)

    u = u0
    record(0, u)
    for n in range(1, steps + 1):
        try:
            if scheme == "implicit-euler":
                rhs = TorusGridFn(u.grid, u.values / dt)
                u = resolvent_solve(op, 1.0 / dt, rhs, tol=tol)
            else:
                rhs = TorusGridFn(u.grid, (2.0 / dt) * u.values - op.apply(u.values))
                u = resolvent_solve(op, 2.0 / dt, rhs, tol=tol)
        except (NonConvergenceError, InputError) as exc:
            run.steps = n - 1
            raise SemigroupAborted(f"step {n}: {exc}", run) from exc
        record(n, u)
    return run


# ----------------------------------------------------------------------
# regularity
# ----------------------------------------------------------------------

@dataclass
class RegularityTable:
    s_values: list
    norms: list
    fine_norms: list
    stable_s: float
    embedding_ratio: float
    embedding_s: float

    def rows(self):
        for s, a, b in zip(self.s_values, self.norms, self.fine_norms):
            yield s, a, b, abs(b - a) / max(abs(a), 1e-300)


def regularity_probe(p, lam, f, psi0, s_list, rho0=1.0, rho1=2.0, rtol=0.05, tol=1e-10):
    """Tabulate ``||u||_{psi0,s}`` for the resolvent solution at N and 2N.

    The largest ``s`` whose norm changes by at most ``rtol`` under grid
    doubling is reported as ``stable_s``. The embedding check reports
    ``sup|u| / ||u||_{psi0,s*}`` for the first ``s*`` in ``s_list`` above
    ``n / (2 rho0 rho1)``.
    """
    u = resolvent_solve(p, lam, f, tol=tol)
    uf = resolvent_solve(p, lam, f.refined(), tol=tol)
    norms = [sobolev_norm(psi0, s, u) for s in s_list]
    fine = [sobolev_norm(psi0, s, uf) for s in s_list]
    stable = [s for s, a, b in zip(s_list, norms, fine)
              if abs(b - a) <= rtol * max(abs(a), 1e-300) or (a == 0 and b == 0)]
    threshold = f.grid.n / (2 * rho0 * rho1)
    above = [s for s in s_list if s > threshold]
    s_star = above[0] if above else threshold + 0.5
    nrm = sobolev_norm(psi0, s_star, u)
    ratio = float(np.abs(u.values).max() / nrm) if nrm > 0 else 0.0
    return RegularityTable(list(s_list), norms, fine, max(stable) if stable else float("nan"),
                           ratio, s_star)


# ----------------------------------------------------------------------
# composition oracle
# ----------------------------------------------------------------------

def composition_symbol(q1, q2, grid):
    """Symbol of ``q1(x,D) q2(x,D)`` on the lattice.

    ``sigma(x_j, xi_k) = exp(-i xi_k.x_j) (q1(x,D) q2(x,D) e_k)(x_j)`` with
    ``e_k = exp(i xi_k.x)``; shape ``(N^n, N^n)`` with k in FFT order. The
    Nyquist columns are zero.
    """
    op1, op2 = discretize(q1, grid), discretize(q2, grid)
    size = grid.size
    C = np.sqrt(size) * np.eye(size, dtype=complex)
    coef2 = op2.coefficient_batch(C)
    if not op1.x_independent:
        xi = [m.ravel() for m in grid.xi_mesh()]
        x = [m.ravel() for m in grid.x_mesh()]
        phase = np.exp(-1j * sum(a[:, None] * b[None, :] for a, b in zip(x, xi)))
        sigma = op1.physical_batch(coef2) * phase
    else:
        # exp(-i k.x) times a trigonometric polynomial is the same polynomial
        # with its coefficients shifted by -k; the shift is exact on the lattice
        coef = op1.coefficient_batch(coef2)
        idx = np.stack([m.ravel() for m in np.meshgrid(*([np.arange(grid.N)] * grid.n),
                                                       indexing="ij")])
        sigma = np.empty((size, size), complex)
        axes = tuple(range(grid.n))
        for col in range(size):
            c = np.roll(coef[:, col].reshape(grid.shape), tuple(-idx[:, col]), axis=axes)
            sigma[:, col] = sfft.ifftn(c, norm="ortho").ravel()
    sigma[:, grid.nyquist_mask().ravel()] = 0
    return sigma


# ----------------------------------------------------------------------
# grid dump format
# ----------------------------------------------------------------------

def write_grid_dump(u, path):
    """Little-endian ``TGF1`` dump: magic, u32 n, u32 N per dim, f64 L, then
    row-major ``(re, im)`` pairs as f64."""
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", g.n))
        fh.write(struct.pack("<" + "I" * g.n, *([g.N] * g.n)))
        fh.write(struct.pack("<d", g.L))
        fh.write(np.ascontiguousarray(u.values, dtype="<c16").tobytes())


def read_grid_dump(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise InputError(f"{path}: bad magic {data[:4]!r}")
    (n,) = struct.unpack_from("<I", data, 4)
    dims = struct.unpack_from("<" + "I" * n, data, 8)
    (L,) = struct.unpack_from("<d", data, 8 + 4 * n)
    if len(set(dims)) != 1:
        raise InputError("only equal point counts per dimension are supported")
    off = 16 + 4 * n
    vals = np.frombuffer(data, dtype="<c16", offset=off)
    grid = TorusGrid(n, dims[0], L)
    if vals.size != grid.size:
        raise InputError(f"{path}: expected {grid.size} values, found {vals.size}")
    return TorusGridFn(grid, vals.reshape(grid.shape))
