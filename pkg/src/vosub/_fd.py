"""Central finite differences with one Richardson pass.

Used only where a closed-form derivative is not available (opaque callables).
"""
from math import comb

import numpy as np


def step_for(order, scale):
    # h = max(1e-5, 1e-5|v|) for orders <= 2; higher orders need a larger
    # step to stay above the roundoff floor.
    base = np.maximum(1e-5, 1e-5 * np.abs(scale))
    return base * 10.0 ** max(order - 2, 0)


def _central(f, args, orders, steps):
    # tensor product of 1-D central difference stencils delta_h^k
    idx = [i for i, k in enumerate(orders) if k]
    if not idx:
        return f(*args)
    i = idx[0]
    k, h = orders[i], steps[i]
    rest = list(orders)
    rest[i] = 0
    total = 0.0
    for j in range(k + 1):
        shifted = list(args)
        shifted[i] = args[i] + (k / 2 - j) * h
        total = total + (-1) ** j * comb(k, j) * _central(f, shifted, rest, steps)
    return total / h ** k


def partial(f, args, orders, spread_tol=1e-3):
    """Mixed partial ``d^orders f`` at ``args`` (arrays broadcast together).

    Where the estimates at steps ``h`` and ``h/2`` disagree by more than
    ``spread_tol`` (relative, with an absolute floor of the same size) the
    function is not resolved as smooth there and the result is set to NaN.
    """
    args = [np.asarray(a, dtype=float) for a in args]
    steps = [step_for(k, a) for k, a in zip(orders, args)]
    coarse = _central(f, args, orders, steps)
    fine = _central(f, args, orders, [h / 2 for h in steps])
    out = np.asarray((4.0 * fine - coarse) / 3.0, dtype=complex if np.iscomplexobj(fine) else float)
    spread = np.abs(fine - coarse)
    bad = spread > spread_tol * (np.abs(fine) + 1.0)
    return np.where(bad, np.nan, out)
