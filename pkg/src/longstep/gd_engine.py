"""Gradient descent under arbitrary stepsize streams, in double precision.

Traces are empirical evidence, not certificates: the checks here compare
observed objective gaps against the recurrences the schedule is designed
to satisfy, with a small floating-point allowance.
"""

from __future__ import annotations

import contextlib
import csv
import gzip
import io
import math
from array import array
from dataclasses import dataclass, field
from itertools import islice
from typing import Iterator, Sequence

import numpy as np

from .sequence_core import Schedule, building_block, delta_conservative

# Relative allowance for float comparisons between gaps.
FLOAT_RTOL = 1e-9


class DivergenceError(ArithmeticError):
    def __init__(self, index: int, value: float):
        super().__init__(f"non-finite objective value {value!r} at iteration {index}")
        self.index = index
        self.value = value


class InsufficientDataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# objectives


class Objective:
    name: str = "objective"
    L: float = 1.0
    mu: float | None = None
    optimum_value: float = 0.0

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def D(self, x0) -> float:
        """sup{||x - x_star|| : f(x) <= f(x0)}."""
        raise NotImplementedError

    def gap(self, x) -> float:
        return self.value(x) - self.optimum_value


class Quadratic1D(Objective):
    """f(x) = x^2 / 2."""

    name = "quadratic"
    mu = 1.0

    def value(self, x):
        return 0.5 * float(x[0]) ** 2

    def gradient(self, x):
        return np.array([x[0]], dtype=float)

    def D(self, x0):
        return abs(float(np.asarray(x0)[0]))


class Huber1D(Objective):
    """x^2/2 inside [-1, 1], |x| - 1/2 outside."""

    name = "huber"

    def value(self, x):
        a = abs(float(x[0]))
        return 0.5 * a * a if a <= 1 else a - 0.5

    def gradient(self, x):
        v = float(x[0])
        return np.array([v if abs(v) <= 1 else math.copysign(1.0, v)])

    def D(self, x0):
        return abs(float(np.asarray(x0)[0]))


class Splice1D(Objective):
    """x^2/2 + 1/2 for x <= 1 and x beyond; minimum 1/2 at 0."""

    name = "splice"
    optimum_value = 0.5

    def value(self, x):
        v = float(x[0])
        return 0.5 * v * v + 0.5 if v <= 1 else v

    def gradient(self, x):
        v = float(x[0])
        return np.array([v if v <= 1 else 1.0])

    def D(self, x0):
        c = self.value(np.asarray(x0, dtype=float))
        # sublevel set is [-sqrt(2c - 1), right] with right = c beyond 1
        right = c if c > 1 else math.sqrt(2 * c - 1)
        return max(math.sqrt(2 * c - 1), right)


class DiagonalQuadratic(Objective):
    """f(x) = sum d_i x_i^2 / 2 with d_i > 0."""

    name = "diagquad"

    def __init__(self, diag: Sequence[float]):
        self.d = np.asarray(diag, dtype=float)
        if self.d.ndim != 1 or np.any(self.d <= 0):
            raise ValueError("diagonal entries must be positive")
        self.L = float(self.d.max())
        self.mu = float(self.d.min())

    @classmethod
    def logspaced(cls, dim: int, lo: float, hi: float = 1.0) -> "DiagonalQuadratic":
        return cls(np.geomspace(lo, hi, dim))

    def value(self, x):
        return 0.5 * float(np.dot(self.d * x, x))

    def gradient(self, x):
        return self.d * x

    def D(self, x0):
        # the sublevel ellipsoid reaches furthest along the flattest axis
        return math.sqrt(2 * self.value(np.asarray(x0, dtype=float)) / self.mu)


class LogSumExp(Objective):
    """f(x) = log sum_j (exp(x_j) + exp(-x_j)); 1-smooth, minimum log(2n) at 0."""

    name = "logsumexp"

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.n = dim
        self.optimum_value = math.log(2 * dim)

    def value(self, x):
        m = float(np.max(np.abs(x)))
        return m + math.log(float(np.sum(np.exp(x - m) + np.exp(-x - m))))

    def gradient(self, x):
        m = float(np.max(np.abs(x)))
        ep, em = np.exp(x - m), np.exp(-x - m)
        return (ep - em) / float(np.sum(ep + em))

    def D(self, x0):
        c = float(np.sum(np.cosh(np.asarray(x0, dtype=float))))
        # acosh(u)^2 is concave, so the farthest point splits c evenly
        return math.sqrt(self.n) * math.acosh(c / self.n)


OBJECTIVES = {
    "quadratic": lambda dim: Quadratic1D(),
    "huber": lambda dim: Huber1D(),
    "splice": lambda dim: Splice1D(),
    "diagquad": lambda dim: DiagonalQuadratic.logspaced(dim, 1e-3),
    "logsumexp": lambda dim: LogSumExp(dim),
}


def make_objective(name: str, dim: int = 1) -> Objective:
    try:
        return OBJECTIVES[name](dim)
    except KeyError:
        raise ValueError(f"unknown objective {name!r}; choose from {sorted(OBJECTIVES)}") from None


def default_x0(obj: Objective) -> np.ndarray:
    if isinstance(obj, (DiagonalQuadratic, LogSumExp)):
        return np.ones(len(obj.d) if isinstance(obj, DiagonalQuadratic) else obj.n)
    if isinstance(obj, Huber1D):
        return np.array([10.0])
    if isinstance(obj, Splice1D):
        return np.array([5.0])
    return np.array([1.0])


# ---------------------------------------------------------------------------
# runs


@dataclass
class GdTrace:
    gaps: array
    stage: array
    applications: list  # (start, end, k) with end exclusive of further steps
    steps_used: array
    x_final: np.ndarray
    stage_starts: list = field(default_factory=list)
    exhausted: bool = False  # the schedule ended before the budget

    @property
    def T(self) -> int:
        return len(self.gaps) - 1

    @property
    def min_gap(self) -> np.ndarray:
        return np.minimum.accumulate(np.frombuffer(self.gaps, dtype=float)) if len(self.gaps) else np.array([])

    @property
    def pattern_boundaries(self) -> list[int]:
        return [end for _, end, _ in self.applications]

    @property
    def last_gap(self) -> float:
        return self.gaps[-1]

    @property
    def best_gap(self) -> float:
        return min(self.gaps)

    def write_csv(self, path: str) -> None:
        """Write the trace; gzip-compressed when ``path`` ends in ``.gz``."""
        ends = set(self.pattern_boundaries)
        mins = self.min_gap
        with contextlib.ExitStack() as stack:
            if str(path).endswith(".gz"):
                raw = stack.enter_context(open(path, "wb"))
                # mtime=0 keeps the archive byte-identical across runs
                gz = stack.enter_context(gzip.GzipFile(fileobj=raw, mode="wb", mtime=0))
                fh = stack.enter_context(io.TextIOWrapper(gz, newline=""))
            else:
                fh = stack.enter_context(open(path, "w", newline=""))
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "gap", "min_gap", "stage_k", "pattern_boundary"])
            for i, g in enumerate(self.gaps):
                w.writerow([i, repr(g), repr(float(mins[i])), self.stage[i], int(i in ends)])


def _stream(schedule) -> Iterator[tuple[float, int, bool]]:
    """Normalize a schedule into (step, stage, completes-application) triples."""
    if isinstance(schedule, Schedule):
        yield from schedule.entries()
        return
    for item in schedule:
        if isinstance(item, tuple):
            yield item
        else:
            yield float(item), 0, False


def _checked_value(objective: Objective, x, n: int) -> float:
    try:
        val = objective.value(x)
    except OverflowError:
        val = math.inf
    if not math.isfinite(val):
        raise DivergenceError(n, val)
    return val


def run(objective: Objective, x0, schedule, budget: int) -> GdTrace:
    """Iterate x <- x - (h / L) grad f(x) for at most ``budget`` steps.

    Stops early when the schedule stream ends.  Raises
    :class:`DivergenceError` on a non-finite objective value.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    x = np.array(x0, dtype=float).reshape(-1)
    L = objective.L
    f_star = objective.optimum_value
    gaps = array("d")
    stage = array("i")
    used = array("d")
    apps: list = []
    starts: list = []
    val = _checked_value(objective, x, 0)
    gaps.append(max(val - f_star, 0.0))
    app_start = 0
    cur_stage = None
    for n, (h, k, done) in enumerate(islice(_stream(schedule), budget), start=1):
        if k != cur_stage:
            starts.append((k, n - 1))
            cur_stage = k
            app_start = n - 1
        if n == 1:
            stage.append(k)
        x = x - (h / L) * objective.gradient(x)
        val = _checked_value(objective, x, n)
        gaps.append(max(val - f_star, 0.0))
        stage.append(k)
        used.append(h)
        if done:
            apps.append((app_start, n, k))
            app_start = n
    if len(stage) < len(gaps):
        stage.append(0)
    return GdTrace(gaps, stage, apps, used, x, starts, exhausted=len(used) < budget)


def repeat_pattern(steps: Sequence[float], k: int = 0) -> Iterator[tuple[float, int, bool]]:
    """Infinite stream repeating one pattern, marking each completed application."""
    steps = [float(h) for h in steps]
    last = len(steps) - 1
    while True:
        for j, h in enumerate(steps):
            yield h, k, j == last


# ---------------------------------------------------------------------------
# recurrence checks


@dataclass
class RecurrenceReport:
    checked: int
    skipped: int
    violations: list
    solved_violations: list

    @property
    def ok(self) -> bool:
        return not self.violations and not self.solved_violations


def verify_descent_recurrence(trace: GdTrace, pattern_sums: dict, L: float, D: float, deltas: dict) -> RecurrenceReport:
    """Check delta_next <= delta - (H_app / (L D^2)) delta^2 per completed application.

    ``pattern_sums[k]`` is the total of the scaled stage-k pattern and
    ``deltas[k]`` the straightforwardness parameter in force; applications
    whose starting gap exceeds ``L D^2 deltas[k]`` are skipped.  Along each
    run of consecutive checked applications within a stage, the solved form
    delta_s <= L D^2 / (H_app s) is also checked.
    """
    LD2 = L * D * D
    checked = skipped = 0
    bad: list = []
    solved_bad: list = []
    run_stage, run_len = None, 0
    for start, end, k in trace.applications:
        d0, d1 = trace.gaps[start], trace.gaps[end]
        Hk = float(pattern_sums[k])
        if d0 > LD2 * float(deltas[k]):
            skipped += 1
            run_stage, run_len = None, 0
            continue
        checked += 1
        bound = d0 - Hk / LD2 * d0 * d0
        if d1 > bound + FLOAT_RTOL * d0:
            bad.append((start, end, k, d0, d1, bound))
        if run_stage != k:
            run_stage, run_len = k, 0
        run_len += 1
        if d1 > LD2 / (Hk * run_len) * (1 + FLOAT_RTOL):
            solved_bad.append((end, k, d1, LD2 / (Hk * run_len)))
    return RecurrenceReport(checked, skipped, bad, solved_bad)


def stage_boundary_gaps(trace: GdTrace, stage_starts: Sequence[int]) -> list[tuple[int, float]]:
    """(I_k, delta at I_k) for the boundaries the trace reached."""
    return [(I, trace.gaps[I]) for I in stage_starts if I <= trace.T]


@dataclass
class RateFit:
    slope: float
    intercept: float
    points: list


def rate_fit(trace: GdTrace, stage_starts: Sequence[int] | None = None, points: Sequence[int] | None = None) -> RateFit:
    """Least-squares fit of log(min gap) against log T.

    Uses ``points`` when given, else the stage boundaries ``stage_starts``
    (or those recorded in the trace, closed by the final iterate when the
    schedule ran out).  Needs at least three usable points.
    """
    mins = trace.min_gap
    if points is None:
        if stage_starts is None:
            stage_starts = [s for _, s in trace.stage_starts]
            if trace.exhausted:
                stage_starts.append(trace.T)
        points = [I for I in stage_starts if I > 0]
    use = [(T, float(mins[T])) for T in points if 0 < T <= trace.T and mins[T] > 0]
    if len(use) < 3:
        raise InsufficientDataError(f"rate fit needs 3 boundary points with positive gaps, got {len(use)}")
    lx = np.log([T for T, _ in use])
    ly = np.log([g for _, g in use])
    slope, intercept = np.polyfit(lx, ly, 1)
    return RateFit(float(slope), float(intercept), use)


# ---------------------------------------------------------------------------
# strongly convex regime

# Amortized per-iteration factor 1 - C kappa^(-p) from the conservative constants.
SC_COEF = 0.204652
SC_EXP = 0.94662


def k_of_kappa(kappa: float, deltas: Sequence[float] | None = None, k_max: int = 40) -> int:
    """Largest k with Delta^(k) >= 1/(2 kappa); ``deltas[i]`` overrides Delta^(i+1)."""
    target = 1.0 / (2.0 * kappa)
    best = 0
    for k in range(1, k_max + 1):
        if deltas is not None:
            if k - 1 >= len(deltas):
                break
            d = float(deltas[k - 1])
        else:
            d = float(delta_conservative(k))
        if d >= target:
            best = k
    return best


@dataclass
class ContractionReport:
    kappa: float
    k: int
    delta: float
    per_application_bound: float
    worst_observed: float
    amortized_observed: float
    amortized_bound: float
    theorem_bound: float
    applications: int
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations and self.amortized_observed <= self.amortized_bound * (1 + FLOAT_RTOL)


def strongly_convex_run(
    objective: Objective,
    x0,
    budget: int,
    kappa: float | None = None,
    eta: float = 0.5,
    deltas: Sequence[float] | None = None,
) -> ContractionReport:
    """Repeat (1 - eta) h^(k(kappa)) and check the per-application contraction.

    Each application must shrink the gap by at least
    1 - min(Delta, mu / (2L)) * (1 - eta) * H_k.
    """
    if objective.mu is None or objective.mu <= 0:
        raise ValueError("objective needs a positive strong convexity constant")
    if kappa is None:
        kappa = objective.L / objective.mu
    k = k_of_kappa(kappa, deltas)
    pat = building_block(k)
    steps = [(1 - eta) * float(h) for h in pat.steps]
    Hs = sum(steps)
    delta = 0.5 if k == 0 else float(deltas[k - 1] if deltas is not None else delta_conservative(k))
    factor = 1 - min(delta, objective.mu / (2 * objective.L)) * Hs
    trace = run(objective, x0, repeat_pattern(steps, k), budget)
    worst = 0.0
    bad = []
    for start, end, _ in trace.applications:
        d0, d1 = trace.gaps[start], trace.gaps[end]
        if d0 <= 0:
            break
        ratio = d1 / d0
        worst = max(worst, ratio)
        if d1 > factor * d0 * (1 + FLOAT_RTOL) + 1e-300:
            bad.append((start, end, d0, d1))
    napps = len(trace.applications)
    if napps:
        end = trace.applications[-1][1]
        d0, d1 = trace.gaps[0], trace.gaps[end]
        amort = (d1 / d0) ** (1.0 / end) if d0 > 0 and d1 > 0 else 0.0
    else:
        amort = 1.0
    t = len(steps)
    return ContractionReport(
        kappa=kappa,
        k=k,
        delta=delta,
        per_application_bound=factor,
        worst_observed=worst,
        amortized_observed=amort,
        amortized_bound=factor ** (1.0 / t),
        theorem_bound=1 - SC_COEF * kappa ** (-SC_EXP),
        applications=napps,
        violations=bad,
    )


# ---------------------------------------------------------------------------
# adversarial one-dimensional instances


@dataclass
class AdversaryOutcome:
    rule: str
    index: int
    x0: float
    f0: float
    ft: float

    @property
    def descended(self) -> bool:
        return self.ft < self.f0


@dataclass
class AdversaryReport:
    product: AdversaryOutcome
    sum_rule: list
    mixed_rule: list

    def failing(self) -> list[AdversaryOutcome]:
        return [o for o in [self.product, *self.sum_rule, *self.mixed_rule] if not o.descended]


def _run_1d(obj: Objective, x0: float, steps: Sequence[float]) -> AdversaryOutcome:
    x = x0
    for h in steps:
        x = x - h * float(obj.gradient(np.array([x]))[0])
    return x


def adversary_suite(steps: Sequence[float]) -> AdversaryReport:
    """Run the three one-dimensional instances with their designated starts.

    * quadratic from 1;
    * Huber, one run per i, started so that x_i = -1;
    * quadratic/linear splice, one run per consecutive pair (i, i+1 mod t),
      started so that x_i = 1.  The wrap-around pair runs the pattern
      rotated to start at step t-1.
    """
    h = [float(v) for v in steps]
    if not h or any(v <= 0 for v in h):
        raise ValueError("steps must be positive")
    t = len(h)
    q = Quadratic1D()
    xt = _run_1d(q, 1.0, h)
    product = AdversaryOutcome("product", 0, 1.0, 0.5, 0.5 * xt * xt)
    hub = Huber1D()
    sums = []
    for i in range(t):
        x0 = -sum(h[:i]) - 1
        xt = _run_1d(hub, x0, h)
        sums.append(AdversaryOutcome("sum", i, x0, hub.value([x0]), hub.value([xt])))
    sp = Splice1D()
    mixed = []
    for i in range(t):
        pattern = h if i < t - 1 or t == 1 else h[t - 1:] + h[: t - 1]
        j = i if pattern is h else 0
        x0 = 1 + sum(pattern[:j])
        xt = _run_1d(sp, x0, pattern)
        mixed.append(AdversaryOutcome("mixed", i, x0, sp.value([x0]), sp.value([xt])))
    return AdversaryReport(product, sums, mixed)


@dataclass
class AdversaryCheck:
    steps: list
    bounds: object  # verification.FeasibilityBounds
    report: AdversaryReport
    mismatches: list

    @property
    def consistent(self) -> bool:
        return not self.mismatches

    @property
    def converse_holds(self) -> bool:
        """Strictly satisfied conditions came with descent on every instance."""
        return not self.bounds.strict or not self.report.failing()

    def to_json(self) -> dict:
        fb, rep = self.bounds, self.report

        def row(o, margin):
            return {"index": o.index, "x0": o.x0, "f0": o.f0, "ft": o.ft, "descended": o.descended,
                    "margin": float(margin), "violated": bool(margin < -fb.tol)}

        return {
            "steps": self.steps,
            "bounds_hold": fb.ok,
            "bounds_strict": fb.strict,
            "product": row(rep.product, fb.product_margin) | {"value": float(fb.product)},
            "sum": [row(o, m) for o, m in zip(rep.sum_rule, fb.sum_margins)],
            "mixed": [row(o, m) for o, m in zip(rep.mixed_rule, fb.mixed_margins)],
            "mismatches": [list(m) for m in self.mismatches],
            "consistent": self.consistent,
            "converse_holds": self.converse_holds,
        }


def check_adversaries(steps: Sequence[float]) -> AdversaryCheck:
    """Cross-check the necessary conditions against the adversarial runs.

    A violated condition must show up as non-descent of its instance.  The
    converse is not implied (an instance may fail for a pattern that meets
    every condition); :attr:`AdversaryCheck.converse_holds` reports it.
    """
    from .verification import pattern_feasibility_bounds

    h = [float(v) for v in steps]
    fb = pattern_feasibility_bounds(h)
    rep = adversary_suite(h)
    bad = []
    if not fb.product_ok and rep.product.descended:
        bad.append(("product", 0))
    for i in fb.violated_sums():
        if rep.sum_rule[i].descended:
            bad.append(("sum", i))
    for i in fb.violated_mixed():
        if rep.mixed_rule[i].descended:
            bad.append(("mixed", i))
    return AdversaryCheck(h, fb, rep, bad)
