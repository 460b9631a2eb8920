"""Command-line front end: ``blockeig {solve,compare,theory,gen}``.

Exit codes: 0 success, 1 input error, 2 solver did not converge
(max_iters or stagnated), 3 a theory bound was violated.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import sys
import time

import numpy as np

from . import theory
from .kernel import NotSPDError
from .matio import MatrixMarketError, from_generator_spec, read_matrix_market, write_matrix_market
from .solvers import PRECONDITIONERS, SOLVERS, SolverConfig, solve
from .strategy import KINDS, StrategyConfig

log = logging.getLogger("blockeig")

EXIT_OK, EXIT_INPUT, EXIT_NOCONV, EXIT_BOUND = 0, 1, 2, 3

CSV_COLUMNS = [
    "iteration",
    "r_overall",
    "n_now",
    "event",
    "spmv_cols_cum",
    "solve_cols_cum",
    "ortho_flops_cum",
    "rr_dim",
]

EXPAND_MODE_FLAGS = {"xdrop": "x_drop", "powered": "powered_x_drop", "random": "random"}
THEORY_SUITES = ("example3x3", "rate", "decomp", "main", "perturb", "all")


class InputError(Exception):
    pass


# -- argument plumbing ---------------------------------------------------------


def _add_run_args(p: argparse.ArgumentParser, with_strategy: bool = True):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", metavar="PATH", help="Matrix Market file")
    src.add_argument("--gen", metavar="SPEC", help="laplacian1d:N | diag:v1,v2,... | diag-geom:n,ratio")
    p.add_argument("--solver", choices=SOLVERS, default="lobpcg")
    p.add_argument("--nev", type=int, required=True, help="number of wanted eigenpairs")
    p.add_argument("--nex", type=int, help="initial/expanded block size")
    p.add_argument("--nes", type=int, help="block size after shrinking")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift", type=float, default=0.0, help="SI shift")
    p.add_argument("--cg-iters", type=int, default=5, help="TraceMIN inner CG steps")
    if with_strategy:
        p.add_argument("--strategy", choices=KINDS, default="none")
    p.add_argument("--je", type=int, default=12)
    p.add_argument("--js", type=int, default=2)
    p.add_argument("--mu", type=float, default=1.1)
    p.add_argument("--jp", type=int, default=10)
    p.add_argument("--jwarm", type=int, default=5)
    p.add_argument("--rwarm", type=float, default=1e-4)
    p.add_argument("--expand-mode", choices=sorted(EXPAND_MODE_FLAGS), default="xdrop")
    p.add_argument("--precond", choices=PRECONDITIONERS, default="identity")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blockeig", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("solve", help="run one solver and export its convergence history")
    _add_run_args(p)

    p = sub.add_parser("compare", help="run every strategy with the same seed and tabulate the work")
    _add_run_args(p, with_strategy=False)

    p = sub.add_parser("theory", help="numerical checks of the convergence theory")
    p.add_argument("suite", choices=THEORY_SUITES)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH", help="write all reports as JSON")

    p = sub.add_parser("gen", help="write a generated matrix in Matrix Market format")
    p.add_argument("spec")
    p.add_argument("--out", metavar="PATH", required=True)
    return ap


def _load_matrix(args):
    try:
        if args.matrix is not None:
            return read_matrix_market(args.matrix)
        return from_generator_spec(args.gen)
    except OSError as e:
        raise InputError(f"cannot read {args.matrix}: {e.strerror or e}") from e
    except (MatrixMarketError, ValueError) as e:
        raise InputError(str(e)) from e


def _configs(args, kind: str):
    try:
        strat = StrategyConfig(
            kind=kind, j_e=args.je, j_s=args.js, mu=args.mu, j_p=args.jp, j_warm=args.jwarm, r_warm=args.rwarm
        )
        cfg = SolverConfig(
            n_ev=args.nev,
            n_ex=args.nex,
            n_es=args.nes,
            tol=args.tol,
            max_iters=args.max_iters,
            seed=args.seed,
            shift=args.shift,
            cg_iters=args.cg_iters,
            preconditioner=args.precond,
            expand_mode=EXPAND_MODE_FLAGS[args.expand_mode],
        )
    except ValueError as e:
        raise InputError(str(e)) from e
    return cfg, strat


def _run(args, A, kind: str):
    cfg, strat = _configs(args, kind)
    try:
        # validate up front so that bad block sizes are input errors
        cfg.resolve(args.solver, A.n, strat)
        return solve(args.solver, A, cfg, strat)
    except NotSPDError as e:
        raise InputError(f"shifted matrix is not positive definite: {e}") from e
    except ValueError as e:
        raise InputError(str(e)) from e


@contextlib.contextmanager
def _thread_cap():
    env = os.environ.get("BLOCKEIG_THREADS")
    if not env:
        yield
        return
    try:
        limit = int(env)
    except ValueError:
        raise InputError(f"BLOCKEIG_THREADS must be an integer, got {env!r}") from None
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=limit):
        yield


# -- output --------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def history_rows(result) -> list[dict]:
    rows = []
    for rec in result.history:
        rows.append(
            {
                "iteration": rec.iteration,
                "r_overall": float(rec.overall_residual),
                "n_now": rec.n_now,
                "event": rec.event,
                "spmv_cols_cum": rec.work.spmv_cols,
                "solve_cols_cum": rec.work.solve_cols,
                "ortho_flops_cum": rec.work.ortho_flops,
                "rr_dim": rec.work.rr_dim,
            }
        )
    return rows


def history_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in history_rows(result):
        row["r_overall"] = _fmt(row["r_overall"])
        w.writerow([row[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def result_json(result, args) -> str:
    w = result.work
    doc = {
        "solver": args.solver,
        "strategy": getattr(args, "strategy", "none"),
        "status": result.status,
        "iterations": result.iterations,
        "values": [float(v) for v in result.values],
        "work": {
            "spmv_cols": w.spmv_cols,
            "solve_cols": w.solve_cols,
            "ortho_flops": w.ortho_flops,
            "rr_flops": w.rr_flops,
            "apply_flops": w.apply_flops,
            "rr_dim": w.rr_dim,
            "total": w.total,
        },
        "history": history_rows(result),
    }
    return json.dumps(doc, indent=1) + "\n"


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# -- commands ------------------------------------------------------------------


def cmd_solve(args) -> int:
    A = _load_matrix(args)
    res = _run(args, A, args.strategy)
    if args.out:
        _write(args.out, history_csv(res) if args.format == "csv" else result_json(res, args))
    r = res.history[-1].overall_residual if res.history else float("nan")
    w = res.work
    print(
        f"{res.status}: iterations={res.iterations} r={r:.3e} spmv_cols={w.spmv_cols} "
        f"solve_cols={w.solve_cols} ortho_flops={w.ortho_flops} rr_flops={w.rr_flops} work={w.total}"
    )
    for i, v in enumerate(res.values, start=1):
        print(f"lambda[{i}] = {float(v)!r}")
    return EXIT_OK if res.converged else EXIT_NOCONV


def compare_rows(args, A) -> list[dict]:
    rows, base = [], None
    for kind in KINDS:
        res = _run(args, A, kind)
        w = res.work
        if base is None:
            base = w.total
        rows.append(
            {
                "strategy": kind,
                "status": res.status,
                "iterations": res.iterations,
                "spmv_cols": w.spmv_cols,
                "solve_cols": w.solve_cols,
                "ortho_flops": w.ortho_flops,
                "rr_flops": w.rr_flops,
                "work": w.total,
                "save_pct": 100.0 * (1.0 - w.total / base) if base else 0.0,
                "values": [float(v) for v in res.values],
            }
        )
    return rows


def cmd_compare(args) -> int:
    A = _load_matrix(args)
    rows = compare_rows(args, A)
    print(f"{'strategy':<8} {'status':<10} {'iters':>6} {'work':>14} {'ortho+rr':>14} {'save%':>7}")
    for r in rows:
        print(
            f"{r['strategy']:<8} {r['status']:<10} {r['iterations']:>6} {r['work']:>14} "
            f"{r['ortho_flops'] + r['rr_flops']:>14} {r['save_pct']:>7.1f}"
        )
    ref = np.array(rows[0]["values"])
    for r in rows[1:]:
        v = np.array(r["values"])
        if r["status"] == "converged" and rows[0]["status"] == "converged":
            dev = float(np.max(np.abs(v - ref) / np.abs(ref))) if len(v) == len(ref) else float("inf")
            log.info("%s: max relative deviation from strategy none %.2e", r["strategy"], dev)
    if args.out:
        if args.format == "json":
            _write(args.out, json.dumps(rows, indent=1) + "\n")
        else:
            buf = io.StringIO()
            cols = ["strategy", "status", "iterations", "spmv_cols", "solve_cols", "ortho_flops", "rr_flops", "work", "save_pct"]
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(r[c]) if c == "save_pct" else r[c] for c in cols])
            _write(args.out, buf.getvalue())
    return EXIT_OK if all(r["status"] == "converged" for r in rows) else EXIT_NOCONV


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _main_suite(trials: int, seed: int) -> list[theory.BoundReport]:
    """The exact-expansion limit and the perturbation sweep on random instances."""
    out = []
    eps_values = [1e-5, 1e-4, 1e-3]
    for t in range(min(trials, 20)):
        inst = theory.random_main_instance(np.random.default_rng([seed, t]))
        k, l = inst["k"], inst["l"]
        eig = (inst["sigma"], inst["V"])
        sw = theory.main_bound_sweep(None, inst["X"], k, l, eps_values, rng=inst["rng"], eig=eig)
        ref = sw["reference"]
        limit = theory.BoundReport(
            "main_limit", ref.measured, ref.detail["floor"] + 1e-10, ref.inconclusive, dict(ref.detail)
        )
        slope = sw["slope_change"]
        scaling = theory.BoundReport(
            "main_scaling", abs(slope - 1.0), 0.3, any(r.inconclusive for r in sw["reports"]), {"slope": slope}
        )
        for rep in (limit, scaling, *sw["reports"]):
            rep.detail.update(seed=seed, trial=t)
            out.append(rep)
    return out


def cmd_theory(args) -> int:
    if args.trials < 0:
        raise InputError("--trials must be nonnegative")
    suites = ["example3x3", "rate", "decomp", "perturb", "main"] if args.suite == "all" else [args.suite]
    reports: list[theory.BoundReport] = []
    golden_ok = True
    for suite in suites:
        t0 = time.perf_counter()
        if suite == "example3x3":
            ex = theory.reproduce_3x3()
            for name, (got, expected, ok) in theory.compare_3x3(ex).items():
                golden_ok &= ok
                if np.ndim(got) == 0:
                    print(f"{name:<11} {got:.4e}  expected {expected:.4e}  {'ok' if ok else 'MISMATCH'}")
                else:
                    print(f"{name:<11} {'matches' if ok else 'MISMATCH'}")
            continue
        if suite == "rate":
            reps = theory.fuzz_rate_bound(args.trials, args.seed)
        elif suite == "decomp":
            reps = theory.fuzz_decomp_bounds(args.trials, args.seed)
        elif suite == "perturb":
            reps = theory.fuzz_perturbation_structure(args.trials, args.seed)
        else:
            reps = _main_suite(args.trials, args.seed)
        bad = [r for r in reps if not r.ok]
        inconc = sum(r.inconclusive for r in reps)
        print(
            f"{suite:<8} checks={len(reps)} violations={len(bad)} inconclusive={inconc} "
            f"time={time.perf_counter() - t0:.2f}s"
        )
        reports.extend(reps)
    failing = [r for r in reports if not r.ok]
    if args.out:
        _write(args.out, json.dumps(_jsonable([r.as_dict() for r in reports]), indent=1) + "\n")
    if failing:
        for r in failing:
            print("violation: " + json.dumps(_jsonable(r.as_dict())), file=sys.stderr)
        return EXIT_BOUND
    if not golden_ok:
        return EXIT_BOUND
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        A = from_generator_spec(args.spec)
    except ValueError as e:
        raise InputError(str(e)) from e
    _write(args.out, write_matrix_market(A))
    print(f"wrote {args.out}: n={A.n} nnz={A.nnz}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "compare": cmd_compare, "theory": cmd_theory, "gen": cmd_gen}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse reports usage errors with status 2; they are input errors here
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with _thread_cap():
            return COMMANDS[args.cmd](args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
