"""Command-line interface: solve, eval, sweep, simulate and verify.

Every subcommand writes CSV with a '#' manifest header. Exit codes: 0 on
success, 1 on domain errors (and on failed hard checks for ``verify``),
2 on usage errors.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import io
import math
import os
import sys

import numpy as np

from . import __version__, dual, policy, verifier
from .errors import DomainError
from .freeboundary import solve
from .params import DEFAULTS, PARAM_KEYS, make_params, read_config

PROG = "drawdown-dividend"


def fmt(v) -> str:
    """Locale-independent, 17 significant digits for reals."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, tuple):
        return ";".join(fmt(t) for t in v)
    return str(v)


class CsvWriter:
    def __init__(self, subcommand: str, vp, seed=None):
        self.buf = io.StringIO()
        self.buf.write(f"# tool={PROG} version={__version__}\n")
        self.buf.write(f"# subcommand={subcommand}\n")
        self.buf.write("# params=" + " ".join(f"{k}={getattr(vp, k)!r}" for k in PARAM_KEYS) + "\n")
        if seed is not None:
            self.buf.write(f"# seed={seed}\n")
        ts = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        self.buf.write(f"# timestamp={ts}\n")

    def header(self, cols):
        self.buf.write(",".join(cols) + "\n")

    def row(self, vals):
        self.buf.write(",".join(fmt(v) for v in vals) + "\n")

    def text(self) -> str:
        return self.buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    for k in PARAM_KEYS:
        common.add_argument(f"--{k}", type=float, default=None, help=f"default {DEFAULTS[k]}")
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--out", help="write CSV here instead of stdout")
    common.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)

    ap = argparse.ArgumentParser(prog=PROG, description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sub.add_parser("solve", parents=[common], help="free boundaries and constants")

    ev = sub.add_parser("eval", parents=[common], help="V, pi*, c* at a state, or U-hat at a dual point")
    ev.add_argument("--x", type=float)
    ev.add_argument("--z", type=float, default=1.0)
    ev.add_argument("--dual", type=float, metavar="Y")

    sw = sub.add_parser("sweep", parents=[common], help="boundaries or policies over a parameter range")
    sw.add_argument("--param", choices=("alpha", "p", "x"), required=True)
    sw.add_argument("--from", dest="start", type=float, required=True)
    sw.add_argument("--to", dest="stop", type=float, required=True)
    sw.add_argument("--steps", type=_positive_int, required=True)
    sw.add_argument("--x-grid", type=_positive_int, default=0, metavar="N",
                    help="also emit V, pi, c on N surplus points in (0, 1.5 w* z]")
    sw.add_argument("--z", type=float, default=1.0)

    sm = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate of V")
    sm.add_argument("--x0", type=float, required=True)
    sm.add_argument("--z0", type=float, default=1.0)
    sm.add_argument("--dt", type=float, default=1e-3)
    sm.add_argument("--horizon", type=float, default=200.0)
    sm.add_argument("--paths", type=_positive_int, default=20000)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--trace", type=int, default=0, metavar="K", help="write the first K paths")
    sm.add_argument("--trace-out", default="trace.csv")
    sm.add_argument("--trace-stride", type=_positive_int, default=1, help="record every N-th step")

    vf = sub.add_parser("verify", parents=[common], help="run the certification suite")
    vf.add_argument("--grid", type=_positive_int, default=50)
    return ap


def _params(args):
    vals = read_config(args.config) if args.config else {}
    for k in PARAM_KEYS:
        if getattr(args, k) is not None:
            vals[k] = getattr(args, k)
    return make_params(**vals)


# --- subcommands ------------------------------------------------------------------

SOLVE_COLS = ("eta_star", "y_star", "y0", "c1", "c2", "c3", "c4", "c5", "c6", "w_alpha", "w_one", "w_star")


def cmd_solve(args, vp) -> int:
    w = CsvWriter("solve", vp)
    if vp.is_merton:
        m = policy.merton_limit(vp)
        cols = ("value_coeff", "pi_slope", "c_slope")
        vals = (m.value_coeff, m.pi_slope, m.c_slope)
    else:
        fb = solve(vp)
        cols = SOLVE_COLS
        vals = tuple(getattr(fb, c) for c in cols)
    w.header(cols)
    w.row(vals)
    _emit(w.text(), args.out)
    width = max(len(c) for c in cols)
    human = "".join(f"{c:<{width}}  {v:.10g}\n" for c, v in zip(cols, vals))
    # stdout stays machine-readable; the aligned view goes to stderr
    sys.stderr.write(human)
    return 0


def cmd_eval(args, vp) -> int:
    w = CsvWriter("eval", vp)
    if args.dual is not None:
        fb = solve(vp)
        e = dual.eval_dual(args.dual, fb, vp)
        w.header(("y", "region", "uhat", "uhat_y", "uhat_yy"))
        w.row((e.y, e.region, e.uhat, e.uhat_y, e.uhat_yy))
    elif args.x is not None:
        policy.check_state(args.x, args.z)
        w.header(("x", "z", "region", "y", "value", "pi", "c"))
        if vp.is_merton:
            m = policy.merton_limit(vp)
            w.row((args.x, args.z, "merton", math.nan, float(m.value(args.x)), float(m.pi(args.x)),
                   float(m.c(args.x))))
        else:
            fb = solve(vp)
            e = policy.evaluate(args.x, args.z, fb, vp)
            w.row((e.x, e.z, e.region, e.y, e.value, e.pi, e.c))
    else:
        raise _Usage("eval needs --x (with optional --z) or --dual")
    _emit(w.text(), args.out)
    return 0


def cmd_sweep(args, vp) -> int:
    w = CsvWriter("sweep", vp)
    grid = np.linspace(args.start, args.stop, args.steps)
    cols = ["param", "w_alpha", "w_one", "w_star"]
    if args.param == "x":
        fb = solve(vp)
        w.header(cols + ["x", "z", "value", "pi", "c"])
        val, pi, c = policy.policy_on_grid(grid, args.z, fb, vp)
        for i, x in enumerate(grid):
            w.row((x, fb.w_alpha, fb.w_one, fb.w_star, x, args.z, val[i], pi[i], c[i]))
    else:
        if args.x_grid:
            cols += ["x", "z", "value", "pi", "c"]
        w.header(cols)
        for v in grid:
            vpi = make_params(**{**{k: getattr(vp, k) for k in PARAM_KEYS}, args.param: float(v)})
            fb = solve(vpi)
            base = (v, fb.w_alpha, fb.w_one, fb.w_star)
            if not args.x_grid:
                w.row(base)
                continue
            xs = np.linspace(0.0, 1.5 * fb.w_star * args.z, args.x_grid + 1)[1:]
            val, pi, c = policy.policy_on_grid(xs, args.z, fb, vpi)
            for i, x in enumerate(xs):
                w.row(base + (x, args.z, val[i], pi[i], c[i]))
    _emit(w.text(), args.out)
    return 0


def cmd_simulate(args, vp) -> int:
    from . import simulate as sim  # compiled kernels; import only when needed

    fb = solve(vp)
    cfg = sim.SimConfig(args.x0, args.z0, args.dt, args.horizon, args.paths, args.seed)
    est = sim.monte_carlo(cfg, fb, vp, threads=args.threads)
    w = CsvWriter("simulate", vp, seed=args.seed)
    cols = ("x0", "z0", "dt", "horizon", "n_paths", "mean", "stderr", "analytic_value", "n_ruined",
            "mean_ruin_time", "n_aborted", "truncation_bound", "max_overshoot")
    w.header(cols)
    w.row((cfg.x0, cfg.z0, cfg.dt, cfg.horizon, est.n_paths, est.mean, est.stderr, est.analytic_value,
           est.n_ruined, est.mean_ruin_time, est.n_aborted, est.truncation_bound, est.max_overshoot))
    _emit(w.text(), args.out)
    if args.trace > 0:
        tw = CsvWriter("simulate-trace", vp, seed=args.seed)
        tw.header(("path", "t", "X", "z", "c", "pi"))
        table = sim.PolicyTable.build(fb, vp)
        for k in range(min(args.trace, cfg.n_paths)):
            _, tr = sim.simulate_path(cfg, fb, vp, k, table=table, trace_stride=args.trace_stride)
            for r in tr:
                tw.row((k, *r))
        with open(args.trace_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(tw.text())
    return 0


def cmd_verify(args, vp) -> int:
    reports = verifier.run_all(vp, grid=args.grid, threads=args.threads)
    w = CsvWriter("verify", vp)
    w.header(("check_name", "kind", "grid_size", "max_violation", "tolerance", "passed", "worst_point"))
    for r in reports:
        w.row((r.check_name, "hard" if r.hard else "soft", r.grid_size, r.max_violation, r.tolerance,
               r.passed, r.worst_point))
    _emit(w.text(), args.out)
    return 0 if verifier.all_hard_passed(reports) else 1


class _Usage(Exception):
    pass


COMMANDS = {"solve": cmd_solve, "eval": cmd_eval, "sweep": cmd_sweep, "simulate": cmd_simulate,
            "verify": cmd_verify}


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        vp = _params(args)
        return COMMANDS[args.cmd](args, vp)
    except _Usage as e:
        ap.print_usage(sys.stderr)
        sys.stderr.write(f"{PROG}: error: {e}\n")
        return 2
    except (OSError, ValueError) as e:
        if isinstance(e, DomainError):
            sys.stderr.write(f"{PROG}: {type(e).__name__}: {e}\n")
            return 1
        sys.stderr.write(f"{PROG}: error: {e}\n")
        return 2
    except DomainError as e:
        sys.stderr.write(f"{PROG}: {type(e).__name__}: {e}\n")
        return 1


def main() -> None:
    sys.exit(run())
