"""Command-line entry point: simulate, estimate, baseline, replicate, solve-socp.

Exit codes: 0 success, 1 user error (bad flags or files), 2 numerical failure.
Every run writes a resolved-config JSON next to its outputs; its ``argv`` field
replays the run with every default spelled out.
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BaselineConfig, BaselineError, run_baseline
from .dataset import Dataset, read_dataset_csv, write_dataset_csv
from .estimator import EstimationError, HnMode, LambdaMode, SnConfig, fit
from .gamma import GammaEstimate, known_additive, mar_estimate, read_gamma_json
from .metrics_bench import (ReplicationPlan, TABLE_PRESETS, run_replications, table_preset,
                            write_outputs)
from .sensitivity import SensitivityError, SensitivityQuery, kappa_exact, kappa_lower_bound
from .simgen import BetaKind, Regime, SimConfig, generate
from .solver import InvalidProgramError, SolverSettings, SolverStatus, load_program, solve

log = logging.getLogger("snconic")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2
THREADS_ENV = "SN_CONIC_THREADS"
HELP_WIDTH = 88

_REGIMES = {"case1": Regime.ADDITIVE, "additive": Regime.ADDITIVE,
            "case2": Regime.MAR, "mar": Regime.MAR}


class UserError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UserError(f"{self.prog}: {message}")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, width=HELP_WIDTH)


def _default_parallelism():
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise UserError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if val < 1:
        raise UserError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return val


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--log-level", choices=("quiet", "info", "debug"), default="info",
                   help="logging verbosity on stderr")
    p.add_argument("--strict", action="store_true",
                   help="exit with code 2 when a solve stops without converging")
    return p


def _solver_flags(p):
    p.add_argument("--solver", choices=("ipm", "admm"), default="ipm", help="cone solver")
    p.add_argument("--eps", type=float, default=1e-7,
                   help="relative primal, dual and gap tolerance")
    p.add_argument("--max-iters", type=int, default=None,
                   help="iteration cap (solver default when omitted)")


def _data_flags(p):
    p.add_argument("--data", required=True, help="dataset CSV with columns y,z1..zp")
    p.add_argument("--mask", default=None, help="0/1 mask CSV for missing entries")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gamma", default=None, help="bias-correction JSON {diag, b_eps, eps}")
    g.add_argument("--sigma-w", type=float, default=None,
                   help="known additive noise level; gamma = sigma_w^2 I")


def build_parser(default_parallelism=1):
    common = _common()
    parser = _Parser(prog="sn-conic", formatter_class=_formatter,
                     description="Self-normalized conic estimation for regression with "
                                 "errors in variables.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], formatter_class=_formatter,
                       help="draw a simulated dataset",
                       description="Draw one dataset; writes data.csv, mask.csv and "
                                   "truth.json.")
    p.add_argument("--n", type=int, required=True, help="observations")
    p.add_argument("--p", type=int, required=True, help="covariates")
    p.add_argument("--regime", choices=sorted(_REGIMES), default="case1",
                   help="case1: additive noise, case2: missing at random")
    p.add_argument("--beta", choices=[k.value for k in BetaKind if k is not BetaKind.CUSTOM],
                   default="separated5", help="coefficient template")
    p.add_argument("--rho", type=float, default=0.5, help="AR(1) design correlation")
    p.add_argument("--sigma-xi", type=float, default=1.0, help="response noise level")
    p.add_argument("--sigma-w", type=float, default=1.0, help="measurement noise level")
    p.add_argument("--pi-low", type=float, default=0.1, help="lower missing rate (case2)")
    p.add_argument("--pi-high", type=float, default=0.75, help="upper missing rate (case2)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--rep", type=int, default=0, help="replication index")
    p.add_argument("--write-oracle", action="store_true",
                   help="also write the noiseless design to x.csv")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("estimate", parents=[common], formatter_class=_formatter,
                       help="fit the self-normalized conic estimator",
                       description="Fit, threshold and optionally refit. Without --gamma or "
                                   "--sigma-w a mask selects the missing-at-random "
                                   "correction.")
    _data_flags(p)
    p.add_argument("--alpha", type=float, default=0.05, help="level in the tau quantile")
    p.add_argument("--tau-scale", type=float, default=1.0, help="multiplier c in tau")
    p.add_argument("--lambda", dest="lam", default="fixed:1,0.25",
                   help="'theoretical' or 'fixed:LT,LU'")
    p.add_argument("--hn", choices=("auto", "exact", "upper-bound"), default="auto",
                   help="H_n computation under theoretical lambda")
    p.add_argument("--threshold", action="store_true",
                   help="print the thresholded support")
    p.add_argument("--refit", action="store_true", help="refit on the thresholded support")
    _solver_flags(p)
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("baseline", parents=[common], formatter_class=_formatter,
                       help="fit a comparison estimator",
                       description="Lasso, Dantzig selector or the conic estimator tuned "
                                   "with a known noise level.")
    p.add_argument("--method", choices=("lasso", "dantzig", "brt-conic"), default="lasso",
                   help="estimator")
    p.add_argument("--design", choices=("observed", "oracle"), default="observed",
                   help="observed Z or the noiseless X")
    _data_flags(p)
    p.add_argument("--oracle-x", default=None,
                   help="CSV of the noiseless design (header x1..xp) for --design oracle")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="penalty level (method default when omitted)")
    p.add_argument("--alpha", type=float, default=0.05, help="level in the Lasso quantile")
    p.add_argument("--lasso-c", type=float, default=1.1, help="Lasso constant c")
    p.add_argument("--sigma-xi", type=float, default=1.0, help="assumed response noise level")
    p.add_argument("--epsilon", type=float, default=0.05, help="conic confidence level")
    p.add_argument("--mu", type=float, default=None, help="conic mu (default from n, p)")
    p.add_argument("--brt-lambda", type=float, default=1.0, help="conic weight on ||b||_2")
    _solver_flags(p)
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("replicate", parents=[common], formatter_class=_formatter,
                       help="run a Monte Carlo table",
                       description="Run a built-in table preset or a plan JSON; writes "
                                   "rows.csv, rows.md, reps/ and plan.json.")
    p.add_argument("--table", required=True,
                   help=f"preset ({', '.join(sorted(TABLE_PRESETS))}) or plan JSON path")
    p.add_argument("--n", type=int, default=None, help="observations (preset default)")
    p.add_argument("--p", type=int, default=100, help="covariates (presets only)")
    p.add_argument("--reps", type=int, default=None, help="replications (default 100)")
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--parallelism", type=int, default=default_parallelism,
                   help=f"worker processes; {THREADS_ENV} sets the default")
    p.add_argument("--methods", default=None, help="comma-separated subset of method labels")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock times (outputs then differ between runs)")
    _solver_flags(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("solve-socp", parents=[common], formatter_class=_formatter,
                       help="solve a dumped cone program",
                       description="Solve a program in the plain-text dump format.")
    p.add_argument("--problem", required=True, help="program dump file")
    _solver_flags(p)
    p.add_argument("--out", required=True, help="result JSON path")

    # exploration only; not listed in the top-level help
    p = sub.add_parser("kappa", parents=[common], formatter_class=_formatter,
                       description="Sensitivity characteristic of a small Gram matrix.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--psi", default=None, help="CSV of a symmetric p x p matrix")
    src.add_argument("--ar1", type=float, default=None,
                     help="use Psi_ij = rho^|i-j| with this rho")
    p.add_argument("--p", type=int, default=4, help="dimension for --ar1")
    p.add_argument("--s", type=int, default=1, help="support size")
    p.add_argument("--u", type=float, default=3.0, help="cone width")
    p.add_argument("--q", choices=("1", "2", "inf"), default="inf", help="norm index")
    p.add_argument("--samples", type=int, default=0,
                   help="random cone points for the sampled estimate (0: skip)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--out", default=None, help="optional JSON output path")
    _hide(sub, "kappa")
    return parser


def _hide(sub, name):
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != name]


def _subparser(parser, verb):
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[verb]
    raise KeyError(verb)


def resolved_argv(parser, ns):
    """Flags reproducing ``ns`` with every default written out."""
    sp = _subparser(parser, ns.verb)
    argv = [ns.verb]
    for act in sp._actions:
        if not act.option_strings or act.dest == "help":
            continue
        val = getattr(ns, act.dest, None)
        flag = act.option_strings[0]
        if isinstance(act, argparse._StoreTrueAction):
            if val:
                argv.append(flag)
        elif val is not None:
            argv += [flag, str(val)]
    return argv


def _settings(ns):
    kw = dict(method=ns.solver, eps_primal=ns.eps, eps_dual=ns.eps, eps_gap=ns.eps)
    if ns.max_iters is not None:
        kw["max_iters" if ns.solver == "admm" else "ipm_max_iters"] = ns.max_iters
    if ns.log_level == "debug":
        # ADMM runs thousands of iterations, the interior-point method tens
        kw["trace_every"] = 100 if ns.solver == "admm" else 1
    return SolverSettings(**kw)


def _config_path(out):
    out = Path(out)
    if out.suffix:
        return out.with_name(out.stem + ".config.json")
    return out / "config.json"


def _write_json(path, obj):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_config(parser, ns, out, extra=None):
    cfg = {"version": __version__, "verb": ns.verb, "argv": resolved_argv(parser, ns),
           "args": {k: v for k, v in vars(ns).items() if k != "func"}}
    if extra:
        cfg.update(extra)
    _write_json(_config_path(out), cfg)


def _check_status(status, ns, what):
    if status in ("optimal", SolverStatus.OPTIMAL.value):
        return
    msg = f"{what} stopped with status {status}"
    if ns.strict:
        raise NumericalFailure(msg)
    log.warning("%s; results are the best iterate", msg)


def _load_problem(ns):
    if not os.path.exists(ns.data):
        raise UserError(f"data file {ns.data} does not exist")
    if ns.mask is not None and not os.path.exists(ns.mask):
        raise UserError(f"mask file {ns.mask} does not exist")
    ds = read_dataset_csv(ns.data, ns.mask)
    if ns.gamma is not None:
        if not os.path.exists(ns.gamma):
            raise UserError(f"gamma file {ns.gamma} does not exist")
        gm = read_gamma_json(ns.gamma)
    elif ns.sigma_w is not None:
        gm = known_additive(ns.sigma_w, ds.p)
    elif ds.mask is not None:
        ds, gm = mar_estimate(ds)
    else:
        return ds, None
    if gm.p != ds.p:
        raise UserError(f"gamma has {gm.p} entries but the data has {ds.p} columns")
    return ds, gm


def _parse_lambda(text):
    if text == "theoretical":
        return LambdaMode.THEORETICAL, 1.0, 0.25
    if text.startswith("fixed:"):
        try:
            lt, lu = (float(v) for v in text[len("fixed:"):].split(","))
        except ValueError:
            raise UserError(f"--lambda fixed:LT,LU expects two numbers, got {text!r}") from None
        return LambdaMode.FIXED, lt, lu
    raise UserError(f"--lambda must be 'theoretical' or 'fixed:LT,LU', got {text!r}")


def cmd_simulate(parser, ns):
    cfg = SimConfig(n=ns.n, p=ns.p, rho=ns.rho, sigma_xi=ns.sigma_xi, sigma_w=ns.sigma_w,
                    beta_kind=ns.beta, regime=_REGIMES[ns.regime], pi_low=ns.pi_low,
                    pi_high=ns.pi_high, seed=ns.seed)
    draw = generate(cfg, ns.rep)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = draw.dataset
    if ds.mask is None:
        ds = Dataset(ds.y, ds.Z, np.ones(ds.Z.shape, dtype=np.int8), ds.provenance)
    write_dataset_csv(ds, out / "data.csv", out / "mask.csv")
    _write_json(out / "truth.json", {"beta0": draw.beta0.tolist(), "pi_used": draw.pi_used,
                                     "seed": ns.seed, "rep": ns.rep})
    if ns.write_oracle:
        with open(out / "x.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j + 1}" for j in range(ns.p)])
            w.writerows([repr(float(v)) for v in row] for row in draw.oracle_x)
    _write_config(parser, ns, out, {"sim": cfg.to_dict()})
    log.info("wrote %s (n=%d, p=%d)", out, ns.n, ns.p)
    return EXIT_OK


def cmd_estimate(parser, ns):
    ds, gm = _load_problem(ns)
    if gm is None:
        raise UserError("need --gamma, --sigma-w or a --mask for the bias correction")
    mode, lt, lu = _parse_lambda(ns.lam)
    hn = None if ns.hn == "auto" else HnMode(ns.hn.replace("-", "_"))
    cfg = SnConfig(alpha=ns.alpha, tau_scale=ns.tau_scale, lambda_mode=mode, lambda_t=lt,
                   lambda_u=lu, hn_mode=hn, solver=_settings(ns), refit=ns.refit)
    rep = fit(ds, gm, cfg)
    rep.to_json(ns.out)
    _write_config(parser, ns, ns.out, {"estimator": cfg.to_dict()})
    log.info("status %s, %d iterations, tau %.6g", rep.solver_diag["status"],
             rep.solver_diag["iterations"], rep.tuning.tau)
    if ns.threshold:
        print("selected:", " ".join(str(j + 1) for j in rep.threshold_set))
    _check_status(rep.solver_diag["status"], ns, "estimator solve")
    if ns.refit and rep.solver_diag.get("refit"):
        _check_status(rep.solver_diag["refit"]["status"], ns, "refit solve")
    return EXIT_OK


def _read_oracle(path, n, p):
    if not os.path.exists(path):
        raise UserError(f"oracle design file {path} does not exist")
    X = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if X.shape != (n, p):
        raise UserError(f"oracle design has shape {X.shape}, expected {(n, p)}")
    return X


def cmd_baseline(parser, ns):
    ds, gm = _load_problem(ns)
    X = None
    if ns.design == "oracle":
        if ns.oracle_x is None:
            raise UserError("--design oracle needs --oracle-x")
        X = _read_oracle(ns.oracle_x, ds.n, ds.p)
    if ns.method == "brt-conic" and gm is None and ns.design == "observed":
        raise UserError("brt-conic needs --gamma, --sigma-w or a --mask")
    cfg = BaselineConfig(which=ns.method, lam=ns.lam, sigma_xi_assumed=ns.sigma_xi,
                         design=ns.design, epsilon=ns.epsilon, mu=ns.mu,
                         brt_lambda=ns.brt_lambda, lasso_c=ns.lasso_c, alpha=ns.alpha)
    if ns.method == "brt-conic" and ns.design == "oracle":
        gm = GammaEstimate(np.zeros(ds.p))
    beta, info = run_baseline(cfg, ds, gm, X, _settings(ns))
    _write_json(ns.out, {"beta": beta.tolist(), "info": info})
    _write_config(parser, ns, ns.out, {"baseline": cfg.to_dict()})
    if "status" in info:
        _check_status(info["status"], ns, f"{ns.method} solve")
    return EXIT_OK


def cmd_replicate(parser, ns):
    settings = _settings(ns)
    if ns.parallelism < 1:
        raise UserError("--parallelism must be >= 1")
    methods = None if ns.methods is None else [m.strip() for m in ns.methods.split(",")]
    reps = 100 if ns.reps is None else ns.reps
    seed = 0 if ns.seed is None else ns.seed
    if ns.table in TABLE_PRESETS:
        plan = table_preset(ns.table, n=ns.n, p=ns.p, reps=reps, master_seed=seed,
                            parallelism=ns.parallelism, timing=ns.timing, methods=methods)
        plan = ReplicationPlan(plan.sim, plan.methods, plan.reps, plan.master_seed,
                               plan.parallelism, plan.timing, settings)
    elif ns.table.endswith(".json"):
        if not os.path.exists(ns.table):
            raise UserError(f"plan file {ns.table} does not exist")
        with open(ns.table) as fh:
            obj = json.load(fh)
        obj["parallelism"] = ns.parallelism
        obj["timing"] = ns.timing or obj.get("timing", False)
        if ns.reps is not None:
            obj["reps"] = ns.reps
        if ns.seed is not None:
            obj["master_seed"] = ns.seed
        obj.setdefault("solver", {k: getattr(settings, k)
                                  for k in settings.__dataclass_fields__})
        plan = ReplicationPlan.from_dict(obj)
        if methods is not None:
            keep = tuple(m for m in plan.methods if m.label in methods)
            if len(keep) != len(methods):
                raise UserError("--methods names a label that is not in the plan")
            plan = ReplicationPlan(plan.sim, keep, plan.reps, plan.master_seed,
                                   plan.parallelism, plan.timing, plan.solver)
    else:
        raise UserError(f"--table must be one of {sorted(TABLE_PRESETS)} or a .json plan")
    rows, per_rep = run_replications(plan, return_records=True)
    write_outputs(plan, rows, per_rep, ns.out)
    _write_config(parser, ns, ns.out)
    for r in rows:
        log.info("%-28s l2 %.4f pr %.4f fp %.2f fn %.2f", r.method, r.l2, r.pr, r.fp, r.fn)
    failed = sum(r.failures for r in rows)
    if failed:
        msg = f"{failed} method-replications did not converge"
        if ns.strict:
            raise NumericalFailure(msg)
        log.warning(msg)
    return EXIT_OK


def cmd_solve_socp(parser, ns):
    if not os.path.exists(ns.problem):
        raise UserError(f"problem file {ns.problem} does not exist")
    prog = load_program(ns.problem)
    res = solve(prog, _settings(ns))

    def clean(v):
        return [None if not math.isfinite(x) else float(x) for x in v]

    _write_json(ns.out, {
        "status": res.status.value, "iterations": res.iterations,
        "objective": None if not math.isfinite(res.objective) else res.objective,
        "primal_residual": res.primal_residual, "dual_residual": res.dual_residual,
        "gap": res.gap, "theta": clean(res.theta), "slack": clean(res.slack),
        "dual": clean(res.dual),
    })
    _write_config(parser, ns, ns.out)
    log.info("status %s after %d iterations", res.status.value, res.iterations)
    if res.status is SolverStatus.MAX_ITERS:
        _check_status(res.status.value, ns, "solve")
    return EXIT_OK


def cmd_kappa(parser, ns):
    if ns.psi is not None:
        if not os.path.exists(ns.psi):
            raise UserError(f"matrix file {ns.psi} does not exist")
        psi = np.loadtxt(ns.psi, delimiter=",", ndmin=2)
    else:
        idx = np.arange(ns.p)
        psi = ns.ar1 ** np.abs(np.subtract.outer(idx, idx))
    q = math.inf if ns.q == "inf" else float(ns.q)
    query = SensitivityQuery(psi, ns.s, ns.u, q)
    out = {"p": query.p, "s": ns.s, "u": ns.u, "q": ns.q}
    if q != 2.0:
        out["exact"] = kappa_exact(query)
    if ns.samples > 0:
        out["sampled"] = kappa_lower_bound(query, ns.samples, ns.seed)
    text = json.dumps(out, sort_keys=True)
    print(text)
    if ns.out is not None:
        _write_json(ns.out, out)
        _write_config(parser, ns, ns.out)
    return EXIT_OK


_COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "baseline": cmd_baseline,
             "replicate": cmd_replicate, "solve-socp": cmd_solve_socp, "kappa": cmd_kappa}


def _setup_logging(level):
    lvl = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}[level]
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("snconic")
    root.handlers[:] = [handler]
    root.setLevel(lvl)
    root.propagate = False


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        parser = build_parser(_default_parallelism())
        ns = parser.parse_args(argv)
        if ns.verb is None:
            parser.print_usage(sys.stderr)
            print("sn-conic: error: a verb is required", file=sys.stderr)
            return EXIT_USER
        _setup_logging(ns.log_level)
        return _COMMANDS[ns.verb](parser, ns)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (EstimationError, BaselineError, SensitivityError, NumericalFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, InvalidProgramError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
