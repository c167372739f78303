"""Command line runner: ``vosub <task> --config experiment.ini``.

Every task writes its CSV report to the output directory. Timestamps appear
only in the ``#`` header comment, so re-runs with the same seed give
byte-identical CSV bodies. The exit status is 0 when every verdict passes,
1 when a verdict fails, 2 for configuration errors and 3 when a computation
aborts (partial artifacts are kept).
"""
import argparse
import csv
import datetime
import io
import math
import os
import sys
import warnings

import numpy as np
import scipy.fft as sfft

from . import __version__
from .config import TASKS, ConfigError, load_config
from .errors import (DomainError, IncompatibilityError, InputError, NonConvergenceError,
                     NumericalIntegrityError, SemigroupAborted)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


class Context:
    def __init__(self, cfg, task, out, jobs, stream):
        self.cfg = cfg
        self.task = task
        self.out = out
        self.jobs = jobs
        self.stream = stream
        self.artifacts = []

    def header(self):
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        return f"vosub {__version__} task={self.task} seed={self.cfg.seed} generated {stamp}"

    def path(self, name):
        os.makedirs(self.out, exist_ok=True)
        p = os.path.join(self.out, name)
        self.artifacts.append(p)
        return p

    def write_text(self, name, text):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)

    def write_rows(self, name, columns, rows):
        buf = io.StringIO()
        buf.write(f"# {self.header()}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        self.write_text(name, buf.getvalue())

    def say(self, line):
        print(line, file=self.stream)


def _cell(v):
    if isinstance(v, bool):
        return "pass" if v else "fail"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, (tuple, list)):
        return " ".join(_cell(x) for x in v)
    return str(v)


# ----------------------------------------------------------------------
# plans (for --dry-run) and tasks
# ----------------------------------------------------------------------

def _plan(cfg, task):
    """Resolve every object the task needs without computing anything."""
    plan = [f"task: {task}", f"config: {cfg.path}", f"seed: {cfg.seed} -> task seed {cfg.task_seed(task)}"]
    if task == "check-lambda":
        psi = cfg.psi()
        plan.append(f"psi: {psi.kind} dim={psi.dim} expr={psi.expr}")
    elif task == "check-bernstein":
        fam = cfg.family()
        plan.append(f"family: {fam.name} f={fam.expr}")
    elif task in ("check-symbol", "garding", "solve", "evolve", "feller"):
        p = cfg.symbol()
        plan.append(f"symbol: {p.expr} order={p.order_m} ({p.provenance or 'expr'})")
        plan.append(f"psi: {p.ref_psi.kind} expr={p.ref_psi.expr}")
        if task != "check-symbol":
            g = cfg.torus_grid()
            plan.append(f"grid: n={g.n} N={g.N} L={g.L!r}")
    elif task == "compose":
        n = cfg.n
        plan.append(f"q1: {cfg.expression('task', 'q1', n)} order={cfg.number('task', 'q1_order', 2.0)}")
        plan.append(f"q2: {cfg.expression('task', 'q2', n)} order={cfg.number('task', 'q2_order', 2.0)}")
    elif task == "reference-functions":
        plan.append(f"f0: {cfg.require('task', 'f0')}  f1: {cfg.require('task', 'f1')}")
        plan.append(f"psi: {cfg.psi().expr}")
        if cfg.has("symbol"):
            plan.append(f"budget symbol: {cfg.symbol().expr}")
    plan.append(f"output: {cfg.get('output', 'dir', 'out')}")
    return plan


def task_check_lambda(ctx):
    from .grids import PhaseGrid
    from .ndf import verify_lambda_class
    cfg = ctx.cfg
    psi = cfg.psi()
    R = cfg.number("task", "R", 64.0, float, 0)
    M = cfg.number("task", "points", 257, int, 3)
    report = verify_lambda_class(psi, cfg.number("task", "max_order", 2, int, 0, 6),
                                 PhaseGrid.box(psi.dim, R, M),
                                 derivative=cfg.get("task", "derivative", "exact"))
    ctx.write_text("check-lambda.csv", report.to_csv(header_comment=ctx.header()))
    ctx.say(report.summary())
    return report.passed


def task_check_bernstein(ctx):
    from .ndf import verify_bernstein
    cfg = ctx.cfg
    fam = cfg.family()
    s = np.geomspace(cfg.number("task", "s_min", 1e-3, float, 0), cfg.number("task", "s_max", 1e3),
                     cfg.number("task", "s_points", 241, int, 2))
    xs = cfg.numbers("task", "x_samples", np.linspace(0, 2 * np.pi, 17)[:-1])
    report = verify_bernstein(fam, np.repeat(np.asarray(xs)[:, None], fam.dim, axis=1), s,
                              cfg.number("task", "max_k", 4, int, 0, 6),
                              cfg.number("task", "tol", 1e-8, float, 0))
    ctx.write_text("check-bernstein.csv", report.to_csv(header_comment=ctx.header()))
    ctx.say(report.summary())
    return report.passed


def _symbol_grid(cfg, p):
    from .grids import PhaseGrid
    if p.is_x_independent and not cfg.has("task", "N"):
        return None
    return PhaseGrid.torus(p.n, cfg.number("task", "N", 128, int, 8))


def task_check_symbol(ctx):
    from .symcalc import EPSILON, verify_symbol_class
    cfg = ctx.cfg
    p = cfg.symbol()
    claimed = cfg.number("task", "claimed_m", p.order_m if p.order_m is not None else math.nan)
    if math.isnan(claimed):
        raise ConfigError(f"{cfg.where('task')}: missing [task] claimed_m")
    report = verify_symbol_class(p, claimed, None, cfg.get("task", "class", "rho"),
                                 cfg.number("task", "max_alpha", 2, int, 0, 6),
                                 cfg.number("task", "max_beta", 2, int, 0, 6),
                                 cfg.number("task", "epsilon", EPSILON, float, 0),
                                 _symbol_grid(cfg, p))
    ctx.write_text("check-symbol.csv", report.to_csv(header_comment=ctx.header()))
    ctx.say(report.summary())
    return report.passed


def task_compose(ctx):
    from .symcalc import Symbol, compose_symbols_leading
    cfg = ctx.cfg
    n = cfg.n
    psi = cfg.psi() if cfg.has("psi") else None
    q1 = Symbol(cfg.expression("task", "q1", n), n, cfg.number("task", "q1_order", 2.0), psi)
    q2 = Symbol(cfg.expression("task", "q2", n), n, cfg.number("task", "q2_order", 2.0), q1.ref_psi)
    lead, report = compose_symbols_leading(q1, q2, cfg.number("task", "N", 64, int, 8, 128))
    ctx.write_text("compose.csv", report.to_csv(header_comment=f"{ctx.header()}; leading = {lead.expr}"))
    ctx.say(f"leading = {lead.expr}")
    ctx.say(f"max |remainder| on base band = {report.extras['max_abs_remainder']:.3e}")
    ctx.say(report.summary())
    return report.passed


def task_reference_functions(ctx):
    from .symcalc import reference_functions, generation_budget
    cfg = ctx.cfg
    psi = cfg.psi()
    try:
        psi0, psi1, report = reference_functions(
            cfg.require("task", "f0"), cfg.require("task", "f1"),
            cfg.number("task", "c0", 1.0, float, 0), cfg.number("task", "c1", 1.0, float, 0), psi)
    except IncompatibilityError as exc:
        ctx.write_rows("reference-functions.csv", ["check", "verdict", "note"],
                       [["sigma-fit", False, str(exc)]])
        ctx.say(f"sigma-fit: fail ({exc})")
        return False
    ok = report.passed and report.extras["sigma_below_half"]
    rows = [report]
    if cfg.has("symbol"):
        budget = generation_budget(cfg.symbol(), cfg.number("task", "lambda", 1.0, float, 0),
                                psi0, psi1, report.sigma)
        rows.append(budget)
        ok = ok and budget.passed and budget.extras["budget_below_one"]
        ctx.say(f"tau0={budget.tau0} tau1={budget.tau1} sigma={budget.sigma} budget={budget.budget}")
    text = "".join(r.to_csv(header_comment=ctx.header() if i == 0 else None) for i, r in enumerate(rows))
    ctx.write_text("reference-functions.csv", text)
    ctx.say(f"sigma={report.sigma} sigma<1/2: {report.extras['sigma_below_half']}")
    return ok


def task_garding(ctx):
    from .torus import garding_probe
    cfg = ctx.cfg
    p = cfg.symbol()
    psi = cfg.psi() if cfg.has("psi") else p.ref_psi
    m = cfg.number("task", "m", p.order_m if p.order_m is not None else 2.0)
    g = cfg.torus_grid()
    base = ctx.cfg.task_seed("garding")
    runs = []
    for i in range(cfg.number("task", "seeds", 2, int, 1)):
        r = garding_probe(p, psi, m, g, cfg.number("task", "samples", 32, int, 1), base + i,
                          cfg.number("task", "R", 1.0, float, 0))
        runs.append((base + i, r))
    deltas = [r.delta for _, r in runs]
    spread = (max(deltas) - min(deltas)) / max(max(deltas), 1e-300)
    stable = spread <= cfg.number("task", "seed_tol", 0.10, float, 0)
    ctx.write_rows("garding.csv", ["seed", "delta", "lambda", "delta0", "verdict"],
                   [[s, r.delta, r.lam, r.delta0, r.passed] for s, r in runs])
    for s, r in runs:
        ctx.say(f"seed {s}: delta={r.delta:.6g} lambda={r.lam:.6g} delta0={r.delta0:.6g}")
    ctx.say(f"seed spread {spread:.3g} ({'stable' if stable else 'unstable'})")
    return stable and all(r.passed for _, r in runs)


def task_solve(ctx):
    from .torus import apply_pdo, inner, resolvent_solve, write_grid_dump
    cfg = ctx.cfg
    p = cfg.symbol()
    g = cfg.torus_grid()
    lam = cfg.number("task", "lambda", 1.0, float)
    tol = cfg.number("task", "tol", 1e-10, float, 0)
    f = cfg.grid_function("task", "f", g, cfg.task_seed("solve"))
    max_iter = cfg.get("task", "max_iter")
    u = resolvent_solve(p, lam, f, tol, None if max_iter is None else cfg.number("task", "max_iter", kind=int))
    r = apply_pdo(p, u).values + lam * u.values - f.values
    fn = math.sqrt(inner(f, f).real)
    res = math.sqrt(g.weight * float(np.sum(np.abs(r) ** 2))) / fn if fn > 0 else 0.0
    write_grid_dump(u, ctx.path("solution.tgf"))
    ctx.write_rows("solve.csv", ["lambda", "relative_residual", "tol", "verdict"],
                   [[lam, res, tol, res <= tol]])
    ctx.say(f"relative residual {res:.3e} (tol {tol:.1e})")
    return res <= tol


def _norm_specs(cfg, p):
    psi = cfg.psi() if cfg.has("psi") else p.ref_psi
    return [(f"norm_s{s:g}", psi, s) for s in cfg.numbers("task", "norms", [])]


def task_evolve(ctx):
    from .torus import semigroup_evolve, write_grid_dump
    cfg = ctx.cfg
    p = cfg.symbol()
    g = cfg.torus_grid()
    u0 = cfg.grid_function("task", "u0", g, cfg.task_seed("evolve"))
    try:
        run = semigroup_evolve(p, u0, cfg.number("task", "dt", 0.01, float, 0),
                               cfg.number("task", "steps", 100, int, 0),
                               cfg.get("task", "scheme", "implicit-euler"), _norm_specs(cfg, p),
                               keep_snapshots=False)
    except SemigroupAborted as exc:
        ctx.write_text("evolve-diagnostics.csv", exc.run.to_csv(header_comment=ctx.header()))
        raise
    ctx.write_text("evolve-diagnostics.csv", run.to_csv(header_comment=ctx.header()))
    write_grid_dump(run.final, ctx.path("final.tgf"))
    ctx.say(f"{run.scheme}: {run.steps} steps, final sup-norm {run.diagnostics[-1]['sup_norm']:.6g}")
    return True


def task_feller(ctx):
    from .feller import builtin_feller_suite
    cfg = ctx.cfg
    p = cfg.symbol()
    g = cfg.torus_grid()
    seed = cfg.task_seed("feller")
    u0 = cfg.grid_function("task", "u0", g, seed, "exp(2*(cos(x)-1))" if g.n == 1 else None)
    report, run = builtin_feller_suite(p, u0, cfg.number("task", "dt", 0.01, float, 0),
                                       cfg.number("task", "steps", 100, int, 0),
                                       cfg.number("task", "trials", 200, int, 1), seed,
                                       cfg.get("task", "scheme", "implicit-euler"))
    ctx.write_text("feller.csv", report.to_csv(header_comment=ctx.header()))
    ctx.write_text("feller-diagnostics.csv", run.to_csv(header_comment=ctx.header()))
    ctx.say(report.summary_line())
    return report.passed


TASK_FUNCS = {
    "check-lambda": task_check_lambda, "check-bernstein": task_check_bernstein,
    "check-symbol": task_check_symbol, "compose": task_compose,
    "reference-functions": task_reference_functions, "garding": task_garding,
    "solve": task_solve, "evolve": task_evolve, "feller": task_feller,
}


def run_experiment(cfg, task=None, out=None, jobs=None, dry_run=False, stream=None):
    """Run ``task`` (default: the config's task) and return the exit status."""
    stream = stream or sys.stdout
    task = task or cfg.task
    if task is None:
        raise ConfigError(f"{cfg.path}: no task given on the command line or in [experiment]")
    if cfg.task is not None and cfg.task != task:
        raise cfg.error("experiment", "task", f"config is for {cfg.task!r}, not {task!r}")
    out = out or cfg.get("output", "dir", "out")
    if dry_run:
        for line in _plan(cfg, task):
            print(line, file=stream)
        return EXIT_PASS
    ctx = Context(cfg, task, out, jobs, stream)
    with warnings.catch_warnings(record=True) as caught, sfft.set_workers(jobs or 1):
        warnings.simplefilter("always")
        ok = TASK_FUNCS[task](ctx)
    for w in caught:
        ctx.say(f"warning: {w.message}")
    ctx.say(f"{task}: {'PASS' if ok else 'FAIL'}")
    return EXIT_PASS if ok else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="vosub", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vosub {__version__}")
    sub = parser.add_subparsers(dest="task", required=True)
    for name in TASKS:
        sp = sub.add_parser(name, help=f"run the {name} task")
        sp.add_argument("--config", required=True, help="INI experiment file")
        sp.add_argument("--out", help="output directory (default: [output] dir or ./out)")
        sp.add_argument("--seed", type=int, help="override [experiment] seed")
        sp.add_argument("--jobs", type=int, help="cap on worker threads")
        sp.add_argument("--dry-run", action="store_true",
                        help="validate the config and print the resolved plan")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.jobs is not None:
        # numerical libraries read these at first use
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.jobs)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.seed = args.seed
        return run_experiment(cfg, args.task, args.out, args.jobs, args.dry_run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, SemigroupAborted, DomainError, NumericalIntegrityError,
            InputError) as exc:
        print(f"aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
