"""Command-line front end: ``seeqr <command> [options]``.

Commands
--------
fit          SEE estimate (JSON)
test         chi-square test of H0: beta = beta0 (JSON)
bandwidth    plug-in bandwidth report, optionally directional (JSON)
simulate     Monte Carlo replications (CSV draws + CSV summary)
power        Q_d local-power coefficient over a tau^2 grid (CSV)
power-curve  simulated size-adjusted power curves (CSV)

Options may also come from ``--config file.json`` (keys are the long flag
names); flags given on the command line win.  Exit status is 0 on success,
1 on a runtime error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .bandwidth import estimate_moments, h_directional, plugin_bandwidth
from .dataio import (RunConfig, emit_results, load_config, load_dataset, mc_draws_csv,
                     mc_summary_csv, parse_h, read_vectors, to_json, csv_text)
from .errors import SeeError
from .estimator import HUGE_H, solve_see, unsmoothed_qr_reference
from .inference import power_curve, run_test
from .kernels import KERNELS, get_kernel
from .montecarlo import get_dgp, run_mc, size_adjusted_power

DEFAULTS = {
    "q": None, "kernel": "horowitz4", "h": "plugin", "alpha": None, "seed": 42,
    "parallelism": 1, "out": None, "sieve_degree": None, "no_project": False,
    "add_intercept": False, "reps": None, "estimators": None, "summary": None,
    "n": None, "full_scale": False, "directions": None, "d": 2, "r": 2,
    "tau2_grid": "0:20:0.1", "deviations": "0:10:1", "data": None, "dgp": None,
    "beta0": None,
}
ALPHA_DEFAULT = {"test": 0.05, "power": 0.10, "power-curve": 0.10}
REPS_DEFAULT = {"simulate": 100, "power-curve": 500}
EST_DEFAULT = {"simulate": "see-plugin,iv", "power-curve": "see-plugin,tiny-h"}


class UsageError(Exception):
    pass


def parse_grid(text):
    """``a:b:step`` (inclusive of b up to rounding) or a comma list."""
    text = str(text).strip()
    if ":" in text:
        try:
            a, b, step = (float(t) for t in text.split(":"))
        except ValueError:
            raise UsageError(f"bad grid {text!r}; use start:stop:step") from None
        if step <= 0 or b < a:
            raise UsageError(f"bad grid {text!r}")
        k = int(np.floor((b - a) / step + 1e-9))
        return a + step * np.arange(k + 1)
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise UsageError(f"bad list {text!r}") from None


def _data_flags(p):
    p.add_argument("--data", help="CSV with columns y, x1..xd, optional z1..zm")
    p.add_argument("--q", type=float, help="quantile level (default 0.5)")
    p.add_argument("--sieve-degree", type=int, help="project X on powers of Z up to this degree")
    p.add_argument("--no-project", action="store_true",
                   help="require exactly as many instruments as regressors")
    p.add_argument("--add-intercept", action="store_true", help="prepend a ones column to X (and Z)")


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with default option values")
    common.add_argument("--kernel", choices=sorted(KERNELS))
    common.add_argument("--seed", type=int, help="master seed (default 42)")
    common.add_argument("--parallelism", type=int, help="worker processes (default 1)")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="seeqr", description=__doc__.split("\n")[0],
                                     argument_default=argparse.SUPPRESS)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], argument_default=argparse.SUPPRESS,
                       help="estimate coefficients")
    _data_flags(p)
    p.add_argument("--h", help="plugin (default), tiny, huge or a positive number")

    p = sub.add_parser("test", parents=[common], argument_default=argparse.SUPPRESS,
                       help="test H0: beta = beta0")
    _data_flags(p)
    p.add_argument("--beta0", help="comma-separated hypothesized coefficients")
    p.add_argument("--alpha", type=float, help="level (default 0.05)")
    p.add_argument("--h", help="plugin (default) or a positive number")

    p = sub.add_parser("bandwidth", parents=[common], argument_default=argparse.SUPPRESS,
                       help="plug-in bandwidth report")
    _data_flags(p)
    p.add_argument("--directions", help="CSV whose rows are direction vectors c_i")

    p = sub.add_parser("simulate", parents=[common], argument_default=argparse.SUPPRESS,
                       help="Monte Carlo replications")
    p.add_argument("--dgp", help="design id, e.g. H11, SCF1, E41, JTPA1s")
    p.add_argument("--reps", type=int, help="replications (default 100)")
    p.add_argument("--estimators", help="comma list: see-plugin,scf,tiny-h,iv,huge-h,see@H,scf@H")
    p.add_argument("--summary", help="summary CSV path (default: <out>_summary.csv, or stdout)")
    p.add_argument("--q", type=float, help="quantile level where the design allows it")
    p.add_argument("--n", type=int, help="override the design's sample size")
    p.add_argument("--full-scale", action="store_true", help="run JTPA2s at n = 50000")

    p = sub.add_parser("power", parents=[common], argument_default=argparse.SUPPRESS,
                       help="Q_d local-power coefficient")
    p.add_argument("--d", type=int, help="degrees of freedom (default 2)")
    p.add_argument("--r", type=int, help="kernel order (default 2)")
    p.add_argument("--alpha", type=float, help="level (default 0.10)")
    p.add_argument("--tau2-grid", help="start:stop:step or list (default 0:20:0.1)")

    p = sub.add_parser("power-curve", parents=[common], argument_default=argparse.SUPPRESS,
                       help="size-adjusted power by simulation")
    p.add_argument("--dgp")
    p.add_argument("--reps", type=int, help="replications (default 500, at least 200)")
    p.add_argument("--alpha", type=float, help="level (default 0.10)")
    p.add_argument("--deviations", help="start:stop:step or list (default 0:10:1)")
    p.add_argument("--estimators", help="comma list: see-plugin,tiny-h,see@H")
    p.add_argument("--q", type=float)
    p.add_argument("--n", type=int)
    return parser


def _options(argv):
    ns = vars(build_parser().parse_args(argv))
    cmd = ns["command"]
    opts = dict(DEFAULTS)
    opts["alpha"] = ALPHA_DEFAULT.get(cmd, 0.05)
    opts["reps"] = REPS_DEFAULT.get(cmd)
    opts["estimators"] = EST_DEFAULT.get(cmd)
    if "config" in ns:
        cfg = load_config(ns["config"])
        unknown = set(cfg) - set(DEFAULTS) - {"verbose"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update(cfg)
    opts.update({k: v for k, v in ns.items() if k != "config"})
    return cmd, opts


def _dataset(o):
    if not o["data"]:
        raise UsageError("--data is required")
    q = 0.5 if o["q"] is None else o["q"]
    return load_dataset(o["data"], q=q, add_intercept=o["add_intercept"],
                        sieve_degree=o["sieve_degree"], project=not o["no_project"])


def _report_dict(rep):
    return {
        "h0": rep.h0, "pilot_h": rep.pilot_h, "selected": rep.selected,
        "selected_family": rep.selected_family, "candidates": rep.candidates,
        "substituted_zero_derivative": rep.substituted_zero_derivative,
        "fits": [{"family": f.family.family, "params": list(f.family.params),
                  "shift": f.family.shift, "loglik": f.loglik, "f0": f.f0,
                  "f_r_minus_1_at_0": f.f_r_minus_1_at_0, "converged": f.converged}
                 for f in rep.fits],
    }


def cmd_fit(o, cfg):
    data = _dataset(o)
    kernel = get_kernel(o["kernel"])
    out = {"command": "fit", "q": data.q, "kernel": kernel.name, "n": data.n, "d": data.d,
           "h_mode": cfg.h_mode}
    if cfg.h_mode == "plugin":
        rep = plugin_bandwidth(data, kernel)
        fit = solve_see(data, rep.selected, kernel)
        out["bandwidth"] = _report_dict(rep)
    elif cfg.h_mode == "tiny":
        fit = unsmoothed_qr_reference(data, kernel)
    elif cfg.h_mode == "huge":
        fit = solve_see(data, HUGE_H, kernel)
    else:
        fit = solve_see(data, cfg.h_value, kernel)
    out.update(beta=fit.beta, h=fit.h, moment_norm=fit.moment_norm, iterations=fit.iterations)
    return to_json(out)


def cmd_test(o, cfg):
    data = _dataset(o)
    if o["beta0"] is None:
        raise UsageError("--beta0 is required")
    beta0 = parse_grid(o["beta0"]) if isinstance(o["beta0"], str) else np.asarray(o["beta0"], float)
    if cfg.h_mode not in ("plugin", "fixed"):
        raise UsageError("test accepts --h plugin or a positive number")
    h = "plugin" if cfg.h_mode == "plugin" else cfg.h_value
    res = run_test(data, beta0, cfg.alpha, o["kernel"], h)
    return to_json(res, command="test", beta0=beta0)


def cmd_bandwidth(o, cfg):
    data = _dataset(o)
    kernel = get_kernel(o["kernel"])
    rep = plugin_bandwidth(data, kernel)
    out = {"command": "bandwidth", "q": data.q, "kernel": kernel.name, "n": data.n, "d": data.d}
    out.update(_report_dict(rep))
    if o["directions"]:
        c = read_vectors(o["directions"])
        if c.ndim != 2 or c.shape[1] != data.d:
            raise UsageError(f"direction vectors must have {data.d} entries")
        moments = estimate_moments(data, rep.fit_for(), kernel)
        out["directions"] = c
        out["h_directional"] = h_directional(c, moments, data.n, kernel.r)
    return to_json(out)


def _labels(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def cmd_simulate(o, cfg):
    if not o["dgp"]:
        raise UsageError("--dgp is required")
    dgp = get_dgp(o["dgp"], n=o["n"], q=o["q"], full_scale=o["full_scale"])
    res = run_mc(dgp, _labels(o["estimators"]), int(o["reps"]), cfg.seed, cfg.parallelism,
                 o["kernel"])
    summary = mc_summary_csv(res)
    if cfg.output:
        emit_results(mc_draws_csv(res), cfg.output)
        spath = o["summary"] or _summary_path(cfg.output)
        emit_results(summary, spath)
        return ""
    if o["summary"]:
        emit_results(summary, o["summary"])
        return ""
    return summary


def _summary_path(out):
    stem, dot, ext = out.rpartition(".")
    return f"{stem}_summary.{ext}" if dot else f"{out}_summary.csv"


def cmd_power(o, cfg):
    grid = parse_grid(o["tau2_grid"])
    if np.any(grid < 0):
        raise UsageError("tau^2 must be nonnegative")
    rows = power_curve(int(o["d"]), int(o["r"]), cfg.alpha, grid)
    return csv_text(("tau2", "Q_d"), [[float(a), float(b)] for a, b in rows])


def cmd_power_curve(o, cfg):
    if not o["dgp"]:
        raise UsageError("--dgp is required")
    dgp = get_dgp(o["dgp"], n=o["n"], q=o["q"])
    pc = size_adjusted_power(dgp, parse_grid(o["deviations"]), int(o["reps"]), cfg.alpha,
                             cfg.seed, _labels(o["estimators"]), cfg.parallelism, o["kernel"])
    rows = [[float(dev), lab, float(pc.rejection[lab][i])]
            for lab in pc.rejection for i, dev in enumerate(pc.deviations)]
    return csv_text(("deviation", "estimator", "rejection_rate"), rows)


COMMAND_FUNCS = {
    "fit": cmd_fit, "test": cmd_test, "bandwidth": cmd_bandwidth,
    "simulate": cmd_simulate, "power": cmd_power, "power-curve": cmd_power_curve,
}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cmd, o = _options(argv)
    except SystemExit as exc:           # argparse usage errors and --help
        return int(exc.code or 0)
    except (UsageError, ValueError, OSError) as exc:
        print(f"seeqr: error: {exc}", file=stderr)
        return 2
    logging.basicConfig(level=logging.INFO if o.get("verbose") else logging.ERROR,
                        stream=stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        mode, hval = parse_h(o["h"])
        cfg = RunConfig(command=cmd, data_path=o["data"], q=0.5 if o["q"] is None else o["q"],
                        kernel=o["kernel"], h_mode=mode, h_value=hval, alpha=o["alpha"], seed=o["seed"],
                        parallelism=o["parallelism"], output=o["out"],
                        format="csv" if cmd in ("simulate", "power", "power-curve") else "json")
        text = COMMAND_FUNCS[cmd](o, cfg)
        if text:
            emit_results(text, None if cmd == "simulate" else cfg.output, stdout)
    except UsageError as exc:
        print(f"seeqr {cmd}: error: {exc}", file=stderr)
        return 2
    except (SeeError, ValueError, ArithmeticError, OSError, np.linalg.LinAlgError) as exc:
        print(f"seeqr {cmd}: error: {type(exc).__name__}: {exc}", file=stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
