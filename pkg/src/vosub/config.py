"""INI experiment configuration and the builders that resolve it.

Grammar (standard :mod:`configparser` INI; ``;`` and ``#`` start comments)::

    [experiment]
    task = check-symbol          ; optional, must match the subcommand
    seed = 0                     ; master seed, split per task

    [psi]                        ; reference negative definite function
    kind = quadratic             ; quadratic | power | log | mollified |
                                 ; stable-levy | zero | subordinated
    dim = 1
    r = 1.0                      ; power, stable-levy
    eps = 1.0                    ; mollified
    outer = sqrt(s)              ; subordinated: outer(quadratic psi)
    coefficient = 1.0            ; subordinated

    [family]                     ; Bernstein family f(x, s)
    name = damped-power          ; damped-power | identity | power | expr
    alpha = 0.6 + 0.3*sin(x)     ; damped-power
    exponent = 1/2               ; power
    expr = s/(1+s)               ; expr

    [symbol]
    construction = variable-order-example
                                 ; expr | psi | subordinate | hoh-power |
                                 ; variable-order-example | inverse
    expr = (2+sin(x))*xi**2      ; expr
    order = 2                    ; expr (claimed order)
    q = 1 + xi**2                ; subordinate, hoh-power, variable-order-example
    q_order = 2
    m = 0.5 + 0.2*sin(x)         ; hoh-power
    alpha = 0.6 + 0.3*sin(x)     ; variable-order-example
    inverse_of = variable-order-example   ; inverse: construction of p
    lambda = 1                   ; inverse

    [grid]
    n = 1
    N = 64
    L = 6.283185307179586

    [task]                       ; task parameters, see the README
    ...

    [output]
    dir = out

Expressions are sympy syntax in ``x``, ``xi`` (``x1``, ``xi1``, ... in
higher dimensions) and ``s``.
"""
import configparser
import math
import re
import zlib
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from ._sym import S, parse, phase_symbols, vectorize
from .errors import InputError
from .ndf import BernsteinFamily, PsiSpec
from .symcalc import (Symbol, hoh_power_symbol, inverse_symbol, subordinate_symbol,
                      variable_order_example_symbol)

TASKS = ("check-lambda", "check-bernstein", "check-symbol", "compose", "reference-functions",
         "garding", "solve", "evolve", "feller")
SECTIONS = ("experiment", "psi", "family", "symbol", "grid", "task", "output")
CONSTRUCTIONS = ("expr", "psi", "subordinate", "hoh-power", "variable-order-example", "inverse")


class ConfigError(InputError):
    """Invalid configuration; the message carries ``path:line`` when known."""


@dataclass
class ExperimentConfig:
    path: str
    sections: dict
    lines: dict = field(default_factory=dict)
    seed: int = 0
    task: str = None

    # raw access ------------------------------------------------------
    def where(self, section, key=None):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        return f"{self.path}:{line}" if line else self.path

    def error(self, section, key, message):
        return ConfigError(f"{self.where(section, key)}: [{section}] {key}: {message}")

    def has(self, section, key=None):
        if key is None:
            return section in self.sections
        return key in self.sections.get(section, {})

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section, key):
        if not self.has(section, key):
            raise ConfigError(f"{self.where(section)}: missing [{section}] {key}")
        return self.get(section, key)

    def number(self, section, key, default=None, kind=float, lo=None, hi=None):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"{self.where(section)}: missing [{section}] {key}")
            return default
        try:
            v = kind(sp.nsimplify(raw)) if kind is float else kind(raw)
        except (ValueError, TypeError, sp.SympifyError):
            raise self.error(section, key, f"not a number: {raw!r}") from None
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise self.error(section, key, f"{v} outside [{lo}, {hi}]")
        return v

    def numbers(self, section, key, default=None):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"{self.where(section)}: missing [{section}] {key}")
            return list(default)
        try:
            return [float(sp.nsimplify(t)) for t in re.split(r"[,\s]+", raw.strip()) if t]
        except (ValueError, TypeError, sp.SympifyError):
            raise self.error(section, key, f"not a number list: {raw!r}") from None

    def expression(self, section, key, n, default=None):
        raw = self.get(section, key, default)
        if raw is None:
            raise ConfigError(f"{self.where(section)}: missing [{section}] {key}")
        try:
            return parse(raw, n)
        except (sp.SympifyError, SyntaxError, TypeError) as exc:
            raise self.error(section, key, f"cannot parse {raw!r} ({exc})") from None

    def task_seed(self, task):
        """Seed derived from the master seed and the task name."""
        ss = np.random.SeedSequence([self.seed, zlib.crc32(task.encode())])
        return int(ss.generate_state(1, dtype=np.uint32)[0])

    # resolved objects ------------------------------------------------
    @property
    def n(self):
        return self.number("grid", "n", 1, int, 1, 3)

    def torus_grid(self):
        from .torus import TorusGrid
        N = self.number("grid", "N", 64, int, 8)
        L = self.number("grid", "L", 2 * math.pi, float, 0)
        try:
            return TorusGrid(self.n, N, L)
        except InputError as exc:
            raise self.error("grid", "N", str(exc)) from None

    def psi(self, section="psi"):
        n = self.number(section, "dim", self.n, int, 1, 3)
        kind = self.get(section, "kind", "quadratic")
        try:
            if kind == "quadratic":
                return PsiSpec.quadratic(n)
            if kind == "power":
                return PsiSpec.power(self.number(section, "r", 2.0, float, 0, 2), n)
            if kind == "log":
                return PsiSpec.log_type(n)
            if kind == "mollified":
                return PsiSpec.mollified(self.number(section, "eps", 1.0, float, 0), n)
            if kind == "stable-levy":
                return PsiSpec.stable_levy(self.number(section, "r", 1.0, float, 0, 2))
            if kind == "zero":
                return PsiSpec.zero(n)
            if kind == "subordinated":
                outer = sp.sympify(self.require(section, "outer"), locals={"s": S})
                c = self.number(section, "coefficient", 1.0, float, 0)
                return PsiSpec.subordinated(PsiSpec.quadratic(n), outer, c)
        except InputError as exc:
            raise self.error(section, "kind", str(exc)) from None
        raise self.error(section, "kind", f"unknown psi kind {kind!r}")

    def family(self):
        n = self.n
        name = self.get("family", "name", "damped-power")
        if name == "damped-power":
            return BernsteinFamily.damped_power(self.expression("family", "alpha", n, "1"), n)
        if name == "identity":
            return BernsteinFamily.identity(n)
        if name == "power":
            return BernsteinFamily.power(self.expression("family", "exponent", n), n)
        if name == "expr":
            return BernsteinFamily.from_expr(self.expression("family", "expr", n), n)
        raise self.error("family", "name", f"unknown family {name!r}")

    def symbol(self, section="symbol", construction=None):
        n = self.n
        psi = self.psi() if self.has("psi") else PsiSpec.quadratic(n)
        kind = construction or self.get(section, "construction", "expr")
        if kind not in CONSTRUCTIONS:
            raise self.error(section, "construction", f"unknown construction {kind!r}")

        def q():
            qo = self.number(section, "q_order", 2.0)
            return Symbol(self.expression(section, "q", n), n, qo, psi)

        try:
            if kind == "expr":
                order = self.number(section, "order", math.nan)
                return Symbol(self.expression(section, "expr", n), n,
                              None if math.isnan(order) else order, psi)
            if kind == "psi":
                return Symbol.from_psi(psi)
            if kind == "subordinate":
                order = self.get(section, "order")
                return subordinate_symbol(self.family(), q(),
                                          None if order is None else self.number(section, "order"))
            if kind == "hoh-power":
                return hoh_power_symbol(q(), self.expression(section, "m", n))
            if kind == "variable-order-example":
                return variable_order_example_symbol(q(), self.expression(section, "alpha", n))
            inner = self.require(section, "inverse_of")
            if inner == "inverse":
                raise self.error(section, "inverse_of", "nested inverses are not supported")
            p = self.symbol(section, inner)
            return inverse_symbol(p, self.number(section, "lambda", 1.0, float, 0))
        except ConfigError:
            raise
        except (InputError, ValueError) as exc:
            raise self.error(section, "construction", str(exc)) from None

    def grid_function(self, section, key, grid, seed, default=None):
        """Expression in x, or ``random:<bandwidth>`` for a seeded
        band-limited real function."""
        from .torus import TorusGridFn
        raw = self.get(section, key, default)
        if raw is None:
            raise ConfigError(f"{self.where(section)}: missing [{section}] {key}")
        raw = raw.strip()
        if raw.startswith("random"):
            bw = int(raw.split(":", 1)[1]) if ":" in raw else grid.N // 4
            return TorusGridFn.random_band_limited(grid, bw, np.random.default_rng(seed))
        e = self.expression(section, key, grid.n)
        xs, _ = phase_symbols(grid.n)
        if e.free_symbols - set(xs):
            raise self.error(section, key, "grid functions may only depend on x")
        vals = vectorize(e, xs)(*grid.x_mesh())
        return TorusGridFn(grid, np.asarray(vals, complex))


def _line_numbers(text):
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in ";#":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), i)
            continue
        m = re.match(r"([^=:\s][^=:]*?)\s*[=:]", line)
        if m and section and not raw[:1].isspace():
            lines[(section, m.group(1).strip())] = i
    return lines


def load_config(path, text=None):
    """Parse an INI file into an :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        With ``path:line`` for syntax errors and unknown sections.
    """
    if text is None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: expected a [section] header") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"{path}:{lineno}: cannot parse line") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.message if hasattr(exc, 'message') else exc}") from None
    lines = _line_numbers(text)
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"{path}:{lines.get((name, None), '?')}: unknown section [{name}]")
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    cfg = ExperimentConfig(str(path), sections, lines)
    cfg.seed = cfg.number("experiment", "seed", 0, int, 0, 2 ** 64 - 1)
    cfg.task = cfg.get("experiment", "task")
    if cfg.task is not None and cfg.task not in TASKS:
        raise cfg.error("experiment", "task", f"unknown task {cfg.task!r}")
    return cfg
