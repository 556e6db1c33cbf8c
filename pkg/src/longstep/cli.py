"""Command-line front end: ``longstep <command> [options]``.

Exit status is 0 when every requested check passes, 1 when a check fails
and 2 on usage errors.  JSON numbers carrying extended-precision values are
written as decimal strings.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, gd_engine
from .numeric import BITS_HIGH, BITS_LOW, BITS_SWITCH_K, MIN_BITS, PRECISION_ENV, resolve_bits, to_decimal, working_precision
from .sequence_core import build_schedule, building_block, closed_form, delta_conservative
from .verification import bisect_stage, verify

# Reference values of the best Delta found by unconstrained search, k = 1..5;
# bisection over the fixed certificate family must stay below them.
REFERENCE_DELTA = {1: 9.33e-2, 2: 1.28e-2, 3: 2.03e-3, 4: 3.34e-4, 5: 5.63e-5}

# Stage 2 of the conservative schedule starts beyond 1e9 iterations.
CONSERVATIVE_RUN_MAX_STAGE = 1

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def version_text() -> str:
    return (
        f"longstep {__version__}\n"
        f"precision: {BITS_LOW} bits for k <= {BITS_SWITCH_K}, {BITS_HIGH} bits beyond; "
        f"override with {PRECISION_ENV} or --precision (floor {MIN_BITS})\n"
        "psd tolerance: min eigenvalue >= -2^(-bits/2) * (1 + ||A||_inf)\n"
        "identity tolerance: relative 2^(-3*bits/4)"
    )


def parse_k_range(text: str) -> list[int]:
    """'3' -> [3]; '1..4' -> [1, 2, 3, 4]."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K or K1..K2, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad k range {text!r}")
    return list(range(lo, hi + 1))


def _eta(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("eta must lie in (0, 1)")
    return v


def load_delta_overrides(path: str) -> list[str]:
    """A JSON list of values, or an object with a "deltas" list."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read delta overrides from {path}: {exc}") from None
    if isinstance(data, dict):
        data = data.get("deltas")
    if not isinstance(data, list) or not data:
        raise UsageError(f"{path}: expected a non-empty list of deltas")
    return [str(d) for d in data]


def _dump(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _pool_map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# commands


def cmd_pattern(args) -> int:
    bits = resolve_bits(args.precision, args.k)
    pat = building_block(args.k, bits)
    with working_precision(bits):
        out = {
            "k": args.k,
            "t": pat.t,
            "precision_bits": bits,
            "steps": [to_decimal(h) for h in pat.steps],
            "sum": to_decimal(pat.sum_H),
        }
    forms = closed_form(args.k)
    if forms is not None:
        out["closed_form"] = forms
    _dump(out, args.out)
    return EXIT_OK


def _schedule(args, max_stage):
    overrides = load_delta_overrides(args.delta_override) if args.delta_override else None
    return build_schedule(eta=args.eta, max_stage=max_stage, delta_overrides=overrides, bits=args.precision)


def cmd_schedule(args) -> int:
    if args.stages < 1:
        raise UsageError("--stages must be at least 1")
    sched = _schedule(args, args.stages - 1)
    stages = []
    for st in sched.stages():
        with working_precision(sched.bits):
            stages.append({
                "k": st.k,
                "start": st.start,
                "reps": st.reps,
                "length": st.length,
                "delta": to_decimal(sched.delta(st.k)),
                "pattern_sum": to_decimal((1 - sched.eta) * st.pattern.sum_H),
            })
    _dump({
        "eta": to_decimal(sched.eta),
        "precision_bits": sched.bits,
        "delta_source": sched.delta_source,
        "stages": stages,
    }, args.out)
    return EXIT_OK


def _certify_job(job):
    k, bits, psd_tol, bisect = job
    rep = verify(k, bits=bits, psd_tol=psd_tol, bisect_iterations=bisect)
    return rep.to_json()


def cmd_certify(args) -> int:
    ks = args.k
    if len(ks) > 1 and args.out and not (Path(args.out).is_dir() or args.out.endswith("/")):
        raise UsageError("--out must be a directory when certifying a k range")
    jobs = [(k, args.precision, args.psd_tol, args.bisect) for k in ks]
    reports = _pool_map(_certify_job, jobs, args.jobs)
    for rep in reports:
        if args.out is None:
            _dump(rep, None)
        elif len(ks) > 1:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            _dump(rep, str(Path(args.out) / f"report_k{rep['k']}.json"))
        else:
            _dump(rep, args.out)
        if not rep["passed"]:
            print(f"k={rep['k']}: verification failed", file=sys.stderr)
    return EXIT_OK if all(r["passed"] for r in reports) else EXIT_FAIL


def _delta_job(job):
    k, iterations, bits, psd_tol = job
    res = bisect_stage(k, iterations, bits=bits, psd_tol=psd_tol)
    return k, res


def cmd_delta(args) -> int:
    if any(k < 1 for k in args.k):
        raise UsageError("delta bisection needs k >= 1")
    results = _pool_map(_delta_job, [(k, args.iterations, args.precision, args.psd_tol) for k in args.k], args.jobs)
    rows = []
    ok = True
    for k, res in results:
        cap = REFERENCE_DELTA.get(k)
        with working_precision(resolve_bits(args.precision, k)):
            cons = delta_conservative(k, resolve_bits(args.precision, k))
            within = bool(res.lo >= cons and (cap is None or res.lo <= cap))
            scaled = res.lo * args.scale
            rows.append({
                "k": k,
                "conservative": to_decimal(cons),
                "bisected": res.to_json(),
                "reference_cap": cap,
                "within_bracket": within,
                "scaled": to_decimal(scaled),
            })
        ok &= within
    _dump({"scale": args.scale, "results": rows, "deltas": [r["scaled"] for r in rows]}, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_run(args) -> int:
    obj = gd_engine.make_objective(args.objective, args.dim)
    x0 = gd_engine.default_x0(obj)
    max_stage = args.stages - 1 if args.stages else None
    if args.delta_override is None and (max_stage is None or max_stage > CONSERVATIVE_RUN_MAX_STAGE):
        max_stage = CONSERVATIVE_RUN_MAX_STAGE
    sched = _schedule(args, max_stage)
    trace = gd_engine.run(obj, x0, sched, args.budget)
    if args.trace:
        trace.write_csv(args.trace)
    reached = [k for k, _ in trace.stage_starts]
    sums = {k: sum(sched.scaled_pattern(k)) for k in reached}
    deltas = {k: float(sched.delta(k)) for k in reached}
    D = obj.D(x0)
    LD2 = obj.L * D * D
    rec = gd_engine.verify_descent_recurrence(trace, sums, obj.L, D, deltas)
    boundaries = []
    for k, I in trace.stage_starts:
        gap = trace.gaps[I]
        boundaries.append({"k": k, "I": I, "gap": gap, "bound": LD2 * deltas[k], "ok": gap <= LD2 * deltas[k]})
    out = {
        "objective": obj.name,
        "dim": int(np.asarray(x0).size),
        "L": obj.L,
        "D": D,
        "eta": args.eta,
        "delta_source": sched.delta_source,
        "iterations": trace.T,
        "last_gap": trace.last_gap,
        "best_gap": trace.best_gap,
        "stage_boundaries": boundaries,
        "recurrence": {
            "checked": rec.checked,
            "skipped": rec.skipped,
            "violations": len(rec.violations),
            "solved_violations": len(rec.solved_violations),
        },
    }
    _dump(out, args.out)
    ok = rec.ok and all(b["ok"] for b in boundaries)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_adversary(args) -> int:
    try:
        steps = [float(v) for v in args.steps.split(",")]
    except ValueError:
        raise UsageError(f"--steps expects comma-separated numbers, got {args.steps!r}") from None
    if not steps or any(h <= 0 for h in steps):
        raise UsageError("steps must be positive")
    chk = gd_engine.check_adversaries(steps)
    _dump(chk.to_json(), args.out)
    return EXIT_OK if chk.consistent else EXIT_FAIL


def _sweep_job(job):
    k, bits, bisect = job
    rep = verify(k, bits=bits, bisect_iterations=bisect)
    return rep.to_json()


def _fmt(x) -> str:
    return "-" if x is None else f"{float(x):.4e}"


def cmd_sweep(args) -> int:
    if any(k < 1 for k in args.k):
        raise UsageError("sweep needs k >= 1")
    reports = _pool_map(_sweep_job, [(k, args.precision, args.bisect) for k in args.k], args.jobs)
    lines = [
        "| k | conservative | bisected | reference | second eigenvalue | eigenvalue bound | passed |",
        "|---|---|---|---|---|---|---|",
    ]
    for r in reports:
        k = r["k"]
        bis = r["delta_bisected"]["lo"] if r["delta_bisected"] else None
        se = r["second_eig"] or {}
        lines.append(
            f"| {k} | {_fmt(r['delta_conservative'])} | {_fmt(bis)} | {_fmt(REFERENCE_DELTA.get(k))} "
            f"| {_fmt(se.get('second'))} | {_fmt(se.get('bound'))} | {'yes' if r['passed'] else 'no'} |"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if all(r["passed"] for r in reports) else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="longstep", description="Long-step gradient descent schedules and their certificates.")
    p.add_argument("--version", action="version", version=version_text())
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--precision", type=int, default=None, metavar="BITS",
                        help=f"mantissa bits (default: policy or ${PRECISION_ENV})")
    common.add_argument("--out", default=None, help="output file (stdout when omitted)")
    jobs = argparse.ArgumentParser(add_help=False)
    jobs.add_argument("--jobs", type=int, default=1, help="worker processes for independent k values")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("pattern", parents=[common], help="dump the building block h^(k)")
    s.add_argument("--k", type=int, required=True)
    s.set_defaults(func=cmd_pattern)

    s = sub.add_parser("schedule", parents=[common], help="plan stage starts and repetitions")
    s.add_argument("--eta", type=_eta, default=0.5)
    s.add_argument("--stages", type=int, required=True, help="number of stages to plan")
    s.add_argument("--delta-override", metavar="FILE")
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("certify", parents=[common, jobs], help="verify the certificate for k or a k range")
    s.add_argument("--k", type=parse_k_range, required=True, help="K or K1..K2")
    s.add_argument("--bisect", type=int, default=None, metavar="N", help="bisection iterations for Delta")
    s.add_argument("--psd-tol", type=str, default=None, help="override the relative PSD tolerance")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("delta", parents=[common, jobs], help="bisect the largest certified Delta")
    s.add_argument("--k", type=parse_k_range, required=True)
    s.add_argument("--iterations", type=int, default=20)
    s.add_argument("--scale", type=float, default=1.0, help="factor applied to the emitted deltas list")
    s.add_argument("--psd-tol", type=str, default=None)
    s.set_defaults(func=cmd_delta)

    s = sub.add_parser(
        "run", parents=[common],
        help="gradient descent on a bundled objective",
        description="Without --delta-override the conservative schedule is capped at stage "
                    f"{CONSERVATIVE_RUN_MAX_STAGE}: its stage 2 starts beyond 1e9 iterations.",
    )
    s.add_argument("--objective", choices=sorted(gd_engine.OBJECTIVES), required=True)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--eta", type=_eta, default=0.5)
    s.add_argument("--budget", type=int, required=True)
    s.add_argument("--stages", type=int, default=None, help="plan at most this many stages")
    s.add_argument("--delta-override", metavar="FILE")
    s.add_argument("--trace", metavar="CSV", help="write the trace (gzip when ending in .gz)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("adversary", parents=[common], help="run the one-dimensional adversaries on a pattern")
    s.add_argument("--steps", required=True, help="comma-separated pattern, e.g. 1.5,5,1.5")
    s.set_defaults(func=cmd_adversary)

    s = sub.add_parser("sweep", parents=[common, jobs], help="markdown summary over a k range")
    s.add_argument("--k", type=parse_k_range, default=parse_k_range("1..5"))
    s.add_argument("--bisect", type=int, default=20)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "precision", None) is not None and args.precision < MIN_BITS:
        parser.error(f"--precision must be at least {MIN_BITS}")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be positive")
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"longstep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"longstep: failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
