"""``ratreg`` command line: gen, solve, rates, diagnose.

Exit codes: 0 success, 2 usage, 3 exhaustion, 4 data condition,
5 diagnostic failure.  Values come from ``--config`` (JSON) first and are
overridden by explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import polydiag
from .harness import RateStudyConfig, default_deltas, run_rate_study
from .linop import write_vector
from .problems import (NoiseSpec, load_problem, make_diagonal_problem, make_gravity_problem,
                       save_problem)
from .ratkrylov import aggregate, ratcg
from .stopping import (DataConditionError, DiscrepancyConfig, ExhaustionError, load_config,
                       make_schedule, parse_schedule, run_with_discrepancy)

EXIT_OK, EXIT_USAGE, EXIT_EXHAUSTED, EXIT_DATA, EXIT_DIAGNOSTIC = 0, 2, 3, 4, 5

log = logging.getLogger("ratreg")


class UsageError(Exception):
    pass


def _pick(flag, cfg: dict, key: str, default=None):
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _schedule_spec(args, cfg, default="constant:1"):
    if args.schedule is not None:
        kind, params = parse_schedule(args.schedule)
        return {"kind": kind, **params}
    sched = cfg.get("schedule")
    if sched:
        return dict(sched)
    kind, params = parse_schedule(default)
    return {"kind": kind, **params}


def _build_schedule(spec: dict, delta, mu_star, n):
    spec = dict(spec)
    return make_schedule(spec.pop("kind"), spec, delta=delta, mu_star=mu_star, n=n)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --- subcommands ---------------------------------------------------------------

def cmd_gen(args, cfg) -> int:
    pc = cfg.get("problem", {})
    kind = _pick(args.type, pc, "type", "diagonal")
    delta = _pick(args.delta, pc, "delta")
    if delta is None:
        raise UsageError("gen needs --delta (or problem.delta in the config)")
    delta = float(delta)
    if delta < 0:
        raise UsageError("--delta must be >= 0")
    seed = int(_pick(args.seed, pc, "seed", 0))
    noise = NoiseSpec(delta, seed) if delta > 0 else None
    if kind == "diagonal":
        prob = make_diagonal_problem(int(_pick(args.m, pc, "m", 400)),
                                     float(_pick(args.s, pc, "s", 1.0)),
                                     float(_pick(args.mu, pc, "mu", 0.5)), noise, seed=seed)
    elif kind == "gravity":
        prob = make_gravity_problem(int(_pick(args.m, pc, "m", 64)),
                                    float(_pick(args.d, pc, "d", 0.25)), noise, seed=seed)
    else:
        raise UsageError(f"unknown problem type {kind!r}")
    out = save_problem(prob, Path(args.out))
    print(out)
    return EXIT_OK


def cmd_solve(args, cfg) -> int:
    prob = load_problem(args.problem)
    delta = float(_pick(args.delta, cfg, "delta", prob.delta))
    if not delta > 0:
        raise UsageError("problem has no noise level; pass --delta")
    method = _pick(args.method, cfg, "method", "agg")
    path = _pick(args.path, cfg, "path", "nested")
    disc = DiscrepancyConfig(delta, float(_pick(args.tau, cfg, "tau", 1.5)),
                             float(_pick(args.tau2, cfg, "tau2", 3.0)),
                             int(_pick(args.max_n, cfg, "max_n", 100)),
                             reorthogonalize=bool(args.reorthogonalize))
    spec = _schedule_spec(args, cfg)
    mu_star = (prob.mu + 0.5) if prob.mu is not None else None
    sched = None if method == "cgne" else _build_schedule(spec, delta, mu_star, disc.max_n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = {"method": method, "path": path, "delta": delta, "tau": disc.tau,
              "tau2": disc.tau2, "max_n": disc.max_n,
              "schedule": None if method == "cgne" else spec}
    code = EXIT_OK
    log.info("solving %s with %s (path=%s, delta=%g)", args.problem, method, path, delta)
    try:
        trace = run_with_discrepancy(method, prob.op, prob.y_noisy, sched, disc, path=path)
    except DataConditionError as exc:
        print(f"data condition violated: {exc}", file=sys.stderr)
        result.update(status="data_condition", message=str(exc))
        _write_json(out / "result.json", result)
        return EXIT_DATA
    except ExhaustionError as exc:
        print(f"no stop: {exc}", file=sys.stderr)
        trace, code = exc.trace, EXIT_EXHAUSTED
    result.update(trace.to_dict())
    result["status"] = "stopped" if code == EXIT_OK else "exhausted"
    result["n_star"] = trace.stop_index
    if trace.stop_index is not None:
        x = trace.solution
        write_vector(out / "solution.csv", x)
        result["error"] = float(np.linalg.norm(x - prob.x_true))
        if args.compare_path and method != "cgne":
            solver = aggregate if method == "agg" else ratcg
            other = solver(prob.op, prob.y_noisy, sched, trace.stop_index, path=args.compare_path)
            rho = trace.residual_norms[trace.stop_index]
            agree = abs(other.residual_norm - rho) / max(rho, np.finfo(float).tiny)
            result["path_agreement"] = {"path": args.compare_path, "relative_residual_gap": agree}
            print(f"residual agreement {path} vs {args.compare_path}: {agree:.3e}")
    with open(out / "trace.csv", "w") as fh:
        fh.write("n,residual_norm,sigma_n,effective_rank\n")
        for k, r in enumerate(trace.residual_norms):
            s = trace.sigma_values[k] if k < len(trace.sigma_values) else float("nan")
            e = trace.effective_ranks[k] if k < len(trace.effective_ranks) else k
            fh.write(f"{k},{r!r},{s!r},{e}\n")
    _write_json(out / "result.json", result)
    print(json.dumps({"method": method, "n_star": trace.stop_index, "status": result["status"],
                      "residual": trace.residual_norms[-1]}))
    return code


def cmd_rates(args, cfg) -> int:
    rc = dict(cfg.get("rates", {}))
    for key in ("tau", "tau2", "max_n", "method", "path"):
        if key in cfg and key not in rc:
            rc[key] = cfg[key]
    if args.schedule is not None or "schedule" in cfg:
        rc["schedule"] = _schedule_spec(args, cfg)
    overrides = {"method": args.method, "mu_list": args.mu, "delta_list": args.deltas,
                 "seeds_per_cell": args.seeds, "m": args.m, "decay_s": args.s,
                 "tau": args.tau, "tau2": args.tau2, "max_n": args.max_n, "path": args.path,
                 "seed_base": args.seed}
    rc.update({k: v for k, v in overrides.items() if v is not None})
    rc.setdefault("delta_list", default_deltas())
    config = RateStudyConfig.from_dict(rc)
    workers = int(_pick(args.workers, cfg, "workers", 1))
    log.info("rate study: %d mu x %d delta x %d seeds, %d workers", len(config.mu_list),
             len(config.delta_list), config.seeds_per_cell, workers)
    result = run_rate_study(config, workers=workers)
    csv_path, _ = result.write(Path(args.out))
    for mu, fit in result.fits.items():
        lo, hi = fit.band
        print(f"mu={mu:g} slope={fit.slope:.3f} theory={fit.theoretical:.3f} "
              f"band=[{lo:.3f},{hi:.3f}] {'ok' if fit.within_band else 'outside'}")
    print(f"dropped cells: {result.dropped}")
    print(csv_path)
    return EXIT_OK


def cmd_diagnose(args, cfg) -> int:
    prob = load_problem(args.problem)
    dc = cfg.get("diagnose", {})
    n_max = int(_pick(args.n_max, dc, "n_max", 8))
    if not 2 <= n_max <= polydiag.DEGREE_CAP:
        raise UsageError(f"--n-max must lie in [2, {polydiag.DEGREE_CAP}]")
    spec = _schedule_spec(args, cfg, default="geometric:8,0.5,1")
    delta = prob.delta if prob.delta > 0 else None
    mu_star = prob.mu + 0.5 if prob.mu is not None else None
    sched = _build_schedule(spec, delta, mu_star, polydiag.DEGREE_CAP + 1)
    variants = {"agg": [False], "ratcg": [True], "both": [False, True]}[args.method or "both"]
    report = polydiag.DiagnosticReport(f"diagnostics for {args.problem}")
    y = prob.y_noisy
    for hatted in variants:
        report.extend(polydiag.check_root_lemmas(prob.op, y, sched, n_max, hatted=hatted))
        for n in range(1, n_max + 1):
            meas = polydiag.residual_measure(prob.op, y, sched, n, hatted)
            if n == n_max or n == meas.kappa:
                props = polydiag.polynomial_properties(meas, min(n, meas.kappa), n=n)
                report.extend(props)
            if n >= 2:
                report.extend(polydiag.check_energy_identity(prob.op, y, sched, n, hatted))
            report.extend(polydiag.verify_residual_factorization(prob.op, y, sched, n, hatted))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "diagnostics.json", report.to_dict())
    print(report.table())
    return EXIT_OK if report.passed else EXIT_DIAGNOSTIC


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ratreg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", type=Path, help="JSON config; flags override it")
        sp.add_argument("--out", default=out_default, help="output directory")

    def disc(sp):
        sp.add_argument("--schedule", help="e.g. constant:1, geometric:8,0.5,1, delta:1,0.1")
        sp.add_argument("--tau", type=float)
        sp.add_argument("--tau2", type=float)
        sp.add_argument("--max-n", dest="max_n", type=int)
        sp.add_argument("--path", choices=("nested", "qr", "gram", "factorized"))

    g = sub.add_parser("gen", help="generate a problem bundle")
    common(g, "problem")
    g.add_argument("--type", choices=("diagonal", "gravity"))
    g.add_argument("--m", type=int)
    g.add_argument("--s", type=float, help="singular value decay exponent (diagonal)")
    g.add_argument("--mu", type=float, help="source exponent (diagonal)")
    g.add_argument("--d", type=float, help="depth (gravity)")
    g.add_argument("--delta", type=float)
    g.add_argument("--seed", type=int)

    s = sub.add_parser("solve", help="solve a bundle with discrepancy stopping")
    common(s, "results")
    s.add_argument("problem", type=Path)
    s.add_argument("--method", choices=("agg", "ratcg", "cgne"))
    s.add_argument("--delta", type=float, help="override the bundle's noise level")
    s.add_argument("--reorthogonalize", action="store_true", help="CGNE reorthogonalization")
    s.add_argument("--compare-path", choices=("qr", "gram", "factorized"),
                   help="recompute the stopped iterate through another path")
    disc(s)

    r = sub.add_parser("rates", help="convergence-rate study")
    common(r, "rates")
    r.add_argument("--method", choices=("agg", "ratcg", "cgne"))
    r.add_argument("--mu", type=float, nargs="+")
    r.add_argument("--deltas", type=float, nargs="+")
    r.add_argument("--seeds", type=int, help="seeds per cell")
    r.add_argument("--seed", type=int, help="first seed")
    r.add_argument("--m", type=int)
    r.add_argument("--s", type=float)
    r.add_argument("--workers", type=int)
    disc(r)

    d = sub.add_parser("diagnose", help="orthogonal-polynomial diagnostics")
    common(d, "diagnostics")
    d.add_argument("problem", type=Path)
    d.add_argument("--n-max", dest="n_max", type=int)
    d.add_argument("--method", choices=("agg", "ratcg", "both"))
    d.add_argument("--schedule")
    return p


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "rates": cmd_rates, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else {}
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ratreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"ratreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
