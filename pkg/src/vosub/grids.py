"""Sample grids in phase space used by the verification sweeps."""
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """Tensor-product sample set of ``x`` and ``xi`` points.

    ``kind`` controls how :meth:`refined` enlarges the grid:

    * ``"torus"``: the periodic lattice of a :class:`~vosub.torus.TorusGrid`;
      refinement doubles ``N``, which halves the x spacing and doubles the
      frequency box.
    * ``"box"``: symmetric uniform xi samples on ``[-R, R]`` that include 0;
      refinement doubles ``R`` and halves the spacing.
    * ``"log"``: symmetric log-spaced xi samples on ``[lo, hi]``;
      refinement multiplies ``hi`` by ``box_growth`` and doubles the density.
    """

    kind: str
    n: int
    x_axes: tuple
    xi_axes: tuple
    params: dict = field(default_factory=dict)

    @classmethod
    def torus(cls, n, N, L=2 * np.pi):
        if N < 8 or N & (N - 1):
            raise InputError(f"N must be a power of two >= 8, got {N}")
        x = np.arange(N) * (L / N)
        k = np.arange(-N // 2, N // 2) * (2 * np.pi / L)
        return cls("torus", n, (x,) * n, (k,) * n, {"N": N, "L": L})

    @classmethod
    def box(cls, n, R, M, x_samples=None):
        if M % 2 == 0:
            M += 1
        xi = np.linspace(-R, R, M)
        x = np.zeros(1) if x_samples is None else np.asarray(x_samples, float)
        return cls("box", n, (x,) * n, (xi,) * n, {"R": R, "M": M, "x": x})

    @classmethod
    def log(cls, n, lo, hi, M, box_growth=2.0 ** 30, x_samples=None):
        r = np.geomspace(lo, hi, M)
        xi = np.concatenate([-r[::-1], r])
        x = np.zeros(1) if x_samples is None else np.asarray(x_samples, float)
        params = {"lo": lo, "hi": hi, "M": M, "box_growth": box_growth, "x": x}
        return cls("log", n, (x,) * n, (xi,) * n, params)

    def refined(self):
        p = self.params
        if self.kind == "torus":
            return PhaseGrid.torus(self.n, 2 * p["N"], p["L"])
        if self.kind == "box":
            return PhaseGrid.box(self.n, 2 * p["R"], 4 * (p["M"] - 1) + 1, p["x"])
        if self.kind == "log":
            decades = np.log(p["hi"] * p["box_growth"] / p["lo"]) / np.log(p["hi"] / p["lo"])
            M = int(np.ceil(2 * p["M"] * decades))
            return PhaseGrid.log(self.n, p["lo"], p["hi"] * p["box_growth"], M,
                                 p["box_growth"], p["x"])
        raise InputError(f"unknown grid kind {self.kind!r}")

    @property
    def x_points(self):
        """Flattened x samples, shape ``(n, Mx)``."""
        mesh = np.meshgrid(*self.x_axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh])

    @property
    def xi_points(self):
        mesh = np.meshgrid(*self.xi_axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh])

    def describe(self):
        return f"{self.kind}(n={self.n}, " + ", ".join(
            f"{k}={v}" for k, v in self.params.items() if k != "x") + ")"
