"""Verification reports and their CSV serialisation."""
import csv
import io
import math
from dataclasses import dataclass, field


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "pass" if value else "fail"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (tuple, list)):
        return " ".join(_fmt(v) for v in value)
    return str(value)


@dataclass
class ClassEntry:
    """One row of a :class:`ClassReport`.

    ``constant`` is the supremum of the checked ratio on the refined grid,
    ``coarse_constant`` the same quantity on the base grid.
    """

    alpha: tuple
    beta: tuple
    constant: float
    coarse_constant: float = float("nan")
    location: tuple = ()
    finite: bool = True
    stable: bool = True
    note: str = ""

    @property
    def passed(self):
        return self.finite and self.stable

    @property
    def growth(self):
        if math.isnan(self.coarse_constant):
            return float("nan")
        if self.coarse_constant == 0 or not math.isfinite(self.coarse_constant):
            return 1.0 if self.constant == self.coarse_constant else float("inf")
        return self.constant / self.coarse_constant


@dataclass
class ClassReport:
    """Outcome of a symbol-class, Bernstein or inequality verification."""

    check: str
    entries: list = field(default_factory=list)
    claimed_m: float = None
    epsilon: float = 0.0
    grid: str = ""
    window: str = ""
    tau0: float = None
    tau1: float = None
    sigma: float = None
    extras: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    @property
    def stable(self):
        return all(e.stable for e in self.entries)

    @property
    def budget(self):
        if None in (self.tau0, self.tau1, self.sigma):
            return None
        return self.tau1 + self.tau0 + self.sigma * (2 + self.tau1)

    def worst(self):
        """Entry with the largest refinement growth (non-finite entries first)."""
        if not self.entries:
            return None
        def key(e):
            g = e.growth
            return (not e.passed, not e.finite, 0.0 if math.isnan(g) else g, e.constant)
        return max(self.entries, key=key)

    def constant(self, alpha, beta=()):
        for e in self.entries:
            same_beta = tuple(e.beta) == tuple(beta) or not (any(e.beta) or any(beta))
            if tuple(e.alpha) == tuple(alpha) and same_beta:
                return e.constant
        raise KeyError((alpha, beta))

    def failing(self):
        return [e for e in self.entries if not e.passed]

    COLUMNS = ("check", "alpha", "beta", "constant", "coarse_constant", "growth",
               "location", "finite", "stable", "verdict", "claimed_m", "epsilon",
               "tau0", "tau1", "sigma", "budget", "note")

    def rows(self):
        for e in self.entries:
            yield {
                "check": self.check, "alpha": _fmt(e.alpha), "beta": _fmt(e.beta),
                "constant": _fmt(float(e.constant)),
                "coarse_constant": _fmt(float(e.coarse_constant)),
                "growth": _fmt(float(e.growth)), "location": _fmt(e.location),
                "finite": _fmt(e.finite), "stable": _fmt(e.stable),
                "verdict": _fmt(e.passed), "claimed_m": _fmt(self.claimed_m),
                "epsilon": _fmt(self.epsilon), "tau0": _fmt(self.tau0),
                "tau1": _fmt(self.tau1), "sigma": _fmt(self.sigma),
                "budget": _fmt(self.budget), "note": e.note,
            }

    def to_csv(self, stream=None, header_comment=None):
        return _write_csv(self.COLUMNS, list(self.rows()), stream, header_comment)

    def summary(self):
        w = self.worst()
        tail = f" worst={_fmt(w.alpha)}|{_fmt(w.beta)} growth={w.growth:.4g}" if w else ""
        return f"{self.check}: {'pass' if self.passed else 'fail'}{tail}"


FELLER_HEADER = ("necessary consequences of Feller generation on a periodic "
                 "torus discretisation; not a proof of generation on R^n")


@dataclass
class CheckResult:
    check: str
    trials: int
    worst_violation: float
    location: tuple = ()
    tolerance: float = 0.0
    skipped: int = 0

    @property
    def passed(self):
        return bool(self.worst_violation <= self.tolerance)


@dataclass
class FellerReport:
    """Verdicts of the Feller-trace checks."""

    checks: list = field(default_factory=list)
    inventory: dict = field(default_factory=dict)
    budget: float = None
    header: str = FELLER_HEADER

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.check == name:
                return c
        raise KeyError(name)

    def merge(self, other):
        out = FellerReport(self.checks + other.checks, {**self.inventory, **other.inventory},
                           self.budget if self.budget is not None else other.budget)
        return out

    COLUMNS = ("check", "trials", "worst_violation", "location", "verdict")

    def rows(self):
        for c in self.checks:
            yield {"check": c.check, "trials": str(c.trials),
                   "worst_violation": _fmt(float(c.worst_violation)),
                   "location": _fmt(c.location), "verdict": _fmt(c.passed)}

    def to_csv(self, stream=None, header_comment=None):
        comment = self.header if header_comment is None else f"{header_comment}; {self.header}"
        return _write_csv(self.COLUMNS, list(self.rows()), stream, comment)

    def summary_line(self):
        worst = max((c.worst_violation for c in self.checks), default=0.0)
        budget = "" if self.budget is None else f" budget={self.budget:.6g}"
        return (f"FELLER {'PASS' if self.passed else 'FAIL'} checks={len(self.checks)} "
                f"failed={sum(not c.passed for c in self.checks)} worst={worst:.3e}{budget}")


def _write_csv(columns, rows, stream, header_comment):
    own = stream is None
    if own:
        stream = io.StringIO()
    if header_comment:
        stream.write(f"# {header_comment}\n")
    writer = csv.DictWriter(stream, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return stream.getvalue() if own else None
