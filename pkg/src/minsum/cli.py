"""Command-line front end: ``certify``, ``solve`` and ``compare``.

Exit codes: 0 success, 1 input or configuration error, 2 dominance
refused, 3 numerical degeneracy.  ``MINSUM_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import analysis, baselines, dominance, engine_hyper, engine_piecewise, engine_quadratic, scheduler
from .errors import ConvergenceError, DegenerateCurvatureError, DominanceRefused, ProblemFormatError, ScheduleError
from .model import Program, load_program

log = logging.getLogger("minsum")

EXIT_OK, EXIT_INPUT, EXIT_REFUSED, EXIT_NUMERIC = 0, 1, 2, 3
ENGINES = ("quadratic", "piecewise", "hyper")
SOLVERS = ENGINES + ("coordinate-descent", "gradient-descent")
MISSING = "—"


class InputError(Exception):
    """Bad command-line configuration (exit code 1)."""


@dataclass
class RunConfig:
    problem: str
    engine: str = "quadratic"
    schedule: str = "synchronous"
    seed: int = 0
    horizon: int = 1000
    window: int = 1
    lag_bound: int = 0
    script: Optional[str] = None
    grid_m: int = engine_piecewise.DEFAULT_M
    B: Optional[float] = None
    tol: float = 1e-12
    certificate: Optional[str] = None
    oracle: Optional[str] = None
    out_trace: Optional[str] = None
    out_summary: Optional[str] = None

    def validate(self, program: Program) -> None:
        if self.engine not in ENGINES:
            raise InputError(f"unknown engine {self.engine!r}")
        if self.engine == "piecewise":
            if not program.is_pairwise:
                raise InputError("engine 'piecewise' needs a pairwise program")
            if self.B is None and program.B is None:
                raise InputError("engine 'piecewise' needs B (problem field 'B' or --B)")
            if self.grid_m < 2:
                raise InputError("--grid-m must be at least 2")
        if self.engine == "hyper" and not program.hyper_factors:
            raise InputError("engine 'hyper' needs hyper_factors in the problem")
        if self.engine == "quadratic" and not program.is_pairwise:
            raise InputError("engine 'quadratic' needs a pairwise program; use --engine hyper")
        if self.horizon < 1:
            raise InputError("--horizon must be positive")


def _load(path) -> Program:
    try:
        return load_program(path)
    except OSError as exc:
        raise InputError(f"cannot read problem file: {exc}") from None
    except ProblemFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def _write_json(doc, path) -> None:
    text = json.dumps(doc, indent=2)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _oracle(program: Program, spec: Optional[str]):
    if spec is None:
        return None
    if spec == "newton":
        rep = baselines.newton_solve(program)
        if not rep.converged:
            raise ConvergenceError("Newton oracle did not converge")
        return rep.x
    try:
        with open(spec) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read oracle file: {exc}") from None
    x = np.asarray(doc["x"] if isinstance(doc, dict) else doc, dtype=float)
    if x.shape != (program.n,):
        raise InputError(f"oracle must have {program.n} entries")
    return x


def _certificate(program: Program, spec: Optional[str]):
    if spec is None:
        return None
    if spec == "auto":
        return dominance.certify(program)
    try:
        with open(spec) as fh:
            return dominance.DominanceCertificate.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot read certificate: {exc}") from None


def _schedule(cfg: RunConfig, n: int):
    try:
        return scheduler.make_schedule(
            cfg.schedule, n, cfg.horizon, cfg.seed, cfg.window, cfg.lag_bound, cfg.script
        )
    except (ScheduleError, OSError, json.JSONDecodeError) as exc:
        raise InputError(f"schedule: {exc}") from None


def run_solve(cfg: RunConfig):
    """Run one configuration; returns ``(trace, summary)``."""
    program = _load(cfg.problem)
    cfg.validate(program)
    cert = _certificate(program, cfg.certificate)
    x_star = _oracle(program, cfg.oracle)
    sync = cfg.schedule == "synchronous"
    bound_at = None
    if cert is not None and x_star is not None and sync:
        if cfg.engine == "hyper":
            s = engine_hyper.theorem2_sum(program, x_star)
            bound_at = lambda t: cert.K * cert.lam**t / (1.0 - cert.lam) * s  # noqa: E731
        elif cfg.engine == "quadratic" and program.is_quadratic:
            bound_at = analysis.bound_function(program, cert, x_star)

    opts = {"B": cfg.B, "m": cfg.grid_m} if cfg.engine == "piecewise" else {}

    if sync:
        if cfg.engine == "quadratic":
            _, trace = engine_quadratic.run(program, max_iter=cfg.horizon, tol=cfg.tol, bound_at=bound_at)
        elif cfg.engine == "piecewise":
            _, trace = engine_piecewise.run(program, max_iter=cfg.horizon, tol=cfg.tol, bound_at=bound_at, **opts)
        else:
            _, trace = engine_hyper.run_hyper(program, max_iter=cfg.horizon, tol=cfg.tol)
            if bound_at is not None:
                trace.extra["bound_value"] = [bound_at(t) for t in trace.times]
    else:
        trace = scheduler.run(cfg.engine, program, _schedule(cfg, program.n), tol=cfg.tol, **opts)

    summary = {
        "problem": cfg.problem,
        "engine": cfg.engine,
        "schedule": {
            "kind": cfg.schedule,
            "seed": cfg.seed,
            "horizon": cfg.horizon,
            "window": cfg.window,
            "lag_bound": cfg.lag_bound,
            "script": cfg.script,
        },
        "final": [float(v) for v in trace.final],
        "iterations": trace.iterations,
        "converged": trace.converged,
        "diverged": trace.diverged,
        "tol": cfg.tol,
    }
    if cfg.engine == "piecewise":
        summary["grid_m"] = cfg.grid_m
        summary["B"] = cfg.B if cfg.B is not None else program.B
    if cert is not None:
        summary["certificate"] = cert.to_dict()
    if x_star is not None:
        summary["oracle"] = [float(v) for v in x_star]
        summary["final_error"] = float(trace.errors(x_star)[-1])
    if "bound_value" in trace.extra:
        err = trace.errors(x_star)
        bound = np.array(trace.extra["bound_value"], dtype=float)
        excess = err - bound
        summary["bound"] = {
            "satisfied": bool(np.all(excess <= 1e-12)),
            "max_excess": float(excess.max()),
        }
    elif cert is not None and x_star is not None:
        summary["bound"] = None
        summary["bound_note"] = "bound is only emitted for exact min-sum runs under the synchronous schedule"
    return trace, summary


def cmd_certify(args) -> int:
    program = _load(args.problem)
    box = None
    if args.box is not None:
        box = args.box if len(args.box) != 1 else args.box[0]
        if isinstance(box, list):
            if len(box) != 2 * program.n:
                raise InputError(f"--box needs 1 or {2 * program.n} numbers")
            box = np.reshape(box, (program.n, 2))
    try:
        if program.is_quadratic and box is None:
            cert = dominance.certify_quadratic(program)
        else:
            if box is None:
                box = program.B
            if box is None:
                raise InputError("non-quadratic program: give --box or a problem field 'B'")
            cert = dominance.certify_sampled(program, box, args.samples)
    except DominanceRefused as exc:
        print(f"certification refused: {exc.diagnostic}", file=sys.stderr)
        return EXIT_REFUSED
    doc = cert.to_dict()
    _write_json(doc, args.out)
    if program.hyper_factors:
        rep = dominance.check_theorem2_conditions(program, w=cert.w)
        log.info("structural condition (i): %s, per-factor condition (ii): %s", rep.condition_i, rep.condition_ii)
    return EXIT_OK


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        problem=args.problem,
        engine=args.engine,
        schedule=args.schedule,
        seed=args.seed,
        horizon=args.horizon,
        window=args.window,
        lag_bound=args.lag_bound,
        script=args.script,
        grid_m=args.grid_m,
        B=args.B,
        tol=args.tol,
        certificate=args.certificate,
        oracle=args.oracle,
        out_trace=args.out_trace,
        out_summary=args.out_summary,
    )


def cmd_solve(args) -> int:
    cfg = _config_from_args(args)
    trace, summary = run_solve(cfg)
    if cfg.out_trace:
        with open(cfg.out_trace, "w", newline="") as fh:
            trace.write_csv(fh)
    _write_json(summary, cfg.out_summary)
    log.info("final estimate %s after %d steps", summary["final"], summary["iterations"])
    return EXIT_OK


def compare_table(
    program: Program,
    solvers: Sequence[str],
    seeds: Sequence[int],
    schedule_kind: str = "random-total-async",
    horizon: int = 2000,
    window: int = 3,
    lag_bound: int = 2,
    tol: float = 1e-8,
    alpha: Optional[float] = None,
    grid_m: int = engine_piecewise.DEFAULT_M,
    B: Optional[float] = None,
) -> List[List[str]]:
    """Rows of ``seed, <steps to tol per solver>`` plus a median row.

    Steps count until the error against the Newton oracle stays below
    ``tol``; runs that never get there are shown as an em dash.
    """
    if not solvers:
        raise InputError("empty solver list")
    bad = [s for s in solvers if s not in SOLVERS]
    if bad:
        raise InputError(f"unknown solvers {bad}; choose from {SOLVERS}")
    oracle = baselines.newton_solve(program)
    if not oracle.converged:
        raise ConvergenceError("Newton oracle did not converge")
    rows = [["seed", *solvers]]
    counts = {s: [] for s in solvers}
    for seed in seeds:
        sched = scheduler.make_schedule(schedule_kind, program.n, horizon, seed, window, lag_bound)
        row = [str(seed)]
        for s in solvers:
            if s == "coordinate-descent":
                trace = baselines.coordinate_descent_async(program, sched)
            elif s == "gradient-descent":
                trace = baselines.gradient_descent_async(program, sched, alpha)
            elif s == "piecewise":
                trace = scheduler.run(s, program, sched, B=B, m=grid_m)
            else:
                trace = scheduler.run(s, program, sched)
            steps = None if trace.diverged else trace.time_to_tolerance(oracle.x, tol)
            counts[s].append(steps)
            row.append(MISSING if steps is None else str(steps))
        rows.append(row)
    med = ["median"]
    for s in solvers:
        vals = [v for v in counts[s] if v is not None]
        med.append(MISSING if not vals else f"{float(np.median(vals)):g}")
    rows.append(med)
    return rows


def cmd_compare(args) -> int:
    program = _load(args.problem)
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    if args.seeds < 1:
        raise InputError("--seeds must be positive")
    if "piecewise" in solvers and args.B is None and program.B is None:
        raise InputError("solver 'piecewise' needs B (problem field 'B' or --B)")
    if "hyper" in solvers and not program.hyper_factors:
        raise InputError("solver 'hyper' needs hyper_factors in the problem")
    if not program.is_pairwise and set(solvers) - {"hyper"}:
        raise InputError("only the 'hyper' solver handles hyper factors")
    seeds = list(range(args.seed, args.seed + args.seeds))
    try:
        rows = compare_table(
            program,
            solvers,
            seeds,
            args.schedule,
            args.horizon,
            args.window,
            args.lag_bound,
            args.tol,
            args.alpha,
            args.grid_m,
            args.B,
        )
    except ScheduleError as exc:
        raise InputError(str(exc)) from None
    if args.out is None or args.out == "-":
        csv.writer(sys.stdout).writerows(rows)
    else:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    return EXIT_OK


def _add_schedule_args(p, default_kind, horizon, window, lag):
    p.add_argument("--schedule", default=default_kind, choices=scheduler.KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=horizon)
    p.add_argument("--window", type=int, default=window, help="asynchronism window W")
    p.add_argument("--lag-bound", type=int, default=lag, help="largest allowed lag L")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; exit code 2 is reserved for refusals."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="minsum", description="Min-sum solvers for separable convex programs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("certify", help="certify scaled diagonal dominance")
    c.add_argument("--problem", required=True)
    c.add_argument("--box", type=float, nargs="+", help="half-width B, or lo hi pairs per variable")
    c.add_argument("--samples", type=int, default=2048)
    c.add_argument("--out", help="certificate path (default: stdout)")
    c.set_defaults(func=cmd_certify)

    s = sub.add_parser("solve", help="run an engine under a schedule")
    s.add_argument("--problem", required=True)
    s.add_argument("--engine", default="quadratic", choices=ENGINES)
    _add_schedule_args(s, "synchronous", 1000, 1, 0)
    s.add_argument("--script", help="schedule script for adversarial-script")
    s.add_argument("--grid-m", type=int, default=engine_piecewise.DEFAULT_M)
    s.add_argument("--B", type=float)
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--certificate", help="certificate JSON, or 'auto'")
    s.add_argument("--oracle", help="'newton' or a JSON file holding x*")
    s.add_argument("--out-trace")
    s.add_argument("--out-summary", help="summary path (default: stdout)")
    s.set_defaults(func=cmd_solve)

    k = sub.add_parser("compare", help="steps to tolerance per solver and seed")
    k.add_argument("--problem", required=True)
    k.add_argument("--solvers", default="quadratic,coordinate-descent,gradient-descent")
    k.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    _add_schedule_args(k, "random-total-async", 2000, 3, 2)
    k.add_argument("--tol", type=float, default=1e-8)
    k.add_argument("--alpha", type=float, help="gradient-descent step size")
    k.add_argument("--grid-m", type=int, default=engine_piecewise.DEFAULT_M)
    k.add_argument("--B", type=float)
    k.add_argument("--out", help="CSV path (default: stdout)")
    k.set_defaults(func=cmd_compare)
    return parser


def _setup_logging():
    level = os.environ.get("MINSUM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateCurvatureError, ConvergenceError) as exc:
        doc = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(doc), file=sys.stderr)
        if getattr(args, "out_summary", None):
            _write_json(doc, args.out_summary)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
