"""Scalar sequences, building-block stepsize patterns and the full schedule.

The building block of stage ``k`` is the palindromic pattern

    [alpha_0, pi(0), alpha_1, pi(1), ..., alpha_{k-1}, pi(k-1), mu_k,
     pi(k-1), alpha_{k-1}, ..., pi(0), alpha_0]

of length ``2**(k+1) - 1``.  Stepsizes are normalized by the smoothness
constant L.  All values are ``gmpy2.mpfr`` at a configurable precision.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import gmpy2
from gmpy2 import mpfr

from .numeric import as_real, rel_err, resolve_bits, silver, working_precision

INFINITE_VALUATION = math.inf


def nu(n: int) -> int | float:
    """2-adic valuation of ``n``; ``nu(0)`` is :data:`INFINITE_VALUATION`."""
    if n < 0:
        raise ValueError("valuation is defined for nonnegative integers")
    if n == 0:
        return INFINITE_VALUATION
    return (n & -n).bit_length() - 1


class _Table:
    """Memo of (beta_i, alpha_i, mu_i) for one precision; only ever appended to."""

    def __init__(self, bits: int):
        self.bits = bits
        self.beta: list[mpfr] = []
        self.alpha: list[mpfr] = []
        self.mu: list[mpfr] = []
        self.lock = threading.Lock()
        with working_precision(bits):
            self.s = silver()

    def _beta(self, i: int) -> mpfr:
        while len(self.beta) <= i:
            j = len(self.beta)
            self.beta.append(1 + self.s ** (j - 1))
        return self.beta[i]

    def _mu(self, i: int) -> mpfr:
        while len(self.mu) <= i:
            j = len(self.mu)
            # mu_j depends on alpha_l for l < j only
            total = mpfr(2)
            for ell in range(j):
                total += 2 * self._alpha(ell)
            for ell in range(j - 1):
                total += 2 * (2 ** (j - ell - 1) - 1) * self._beta(ell)
            self.mu.append(total)
        return self.mu[i]

    def _alpha(self, i: int) -> mpfr:
        while len(self.alpha) <= i:
            j = len(self.alpha)
            m1 = self._mu(j) - 1
            c = (self._beta(j + 1) - 1) * m1
            # positive root y = x - 1 of 2y^2 + m1*y - c, written without cancellation
            y = 2 * c / (m1 + gmpy2.sqrt(m1 * m1 + 8 * c))
            self.alpha.append(1 + y)
        return self.alpha[i]

    def get(self, name: str, i: int) -> mpfr:
        if i < 0:
            raise ValueError(f"index must be nonnegative, got {i}")
        with self.lock, working_precision(self.bits):
            return getattr(self, "_" + name)(i)


_TABLES: dict[int, _Table] = {}
_TABLES_LOCK = threading.Lock()


def _table(bits: int) -> _Table:
    with _TABLES_LOCK:
        tab = _TABLES.get(bits)
        if tab is None:
            tab = _TABLES[bits] = _Table(bits)
        return tab


def beta(i: int, bits: int | None = None) -> mpfr:
    """beta_i = 1 + (1 + sqrt 2)**(i - 1)."""
    return _table(resolve_bits(bits)).get("beta", i)


def alpha(i: int, bits: int | None = None) -> mpfr:
    """Root larger than one of 2(x-1)^2 + (mu_i-1)(x-1) - (beta_{i+1}-1)(mu_i-1)."""
    return _table(resolve_bits(bits)).get("alpha", i)


def mu(i: int, bits: int | None = None) -> mpfr:
    return _table(resolve_bits(bits)).get("mu", i)


def pi_vector(ell: int, bits: int | None = None) -> list[mpfr]:
    """Entries beta_{nu(i)} for i = 1 .. 2**ell - 1."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    bits = resolve_bits(bits)
    return [beta(nu(i), bits) for i in range(1, 2**ell)]


@dataclass(frozen=True)
class StepPattern:
    k: int
    steps: tuple
    sum_H: mpfr
    bits: int

    @property
    def t(self) -> int:
        return len(self.steps)

    def scaled(self, factor) -> list[mpfr]:
        with working_precision(self.bits):
            f = as_real(factor)
            return [f * h for h in self.steps]

    def as_floats(self) -> list[float]:
        return [float(h) for h in self.steps]


_PATTERNS: dict[tuple[int, int], StepPattern] = {}


def building_block(k: int, bits: int | None = None) -> StepPattern:
    if k < 0:
        raise ValueError("k must be nonnegative")
    bits = resolve_bits(bits, k)
    key = (k, bits)
    pat = _PATTERNS.get(key)
    if pat is not None:
        return pat
    left: list[mpfr] = []
    for ell in range(k):
        left.append(alpha(ell, bits))
        left.extend(pi_vector(ell, bits))
    steps = left + [mu(k, bits)] + left[::-1]
    with working_precision(bits):
        total = mpfr(0)
        for h in steps:
            total += h
    pat = StepPattern(k=k, steps=tuple(steps), sum_H=total, bits=bits)
    _PATTERNS[key] = pat
    return pat


def delta_conservative(k: int, bits: int | None = None) -> mpfr:
    """Certified straightforwardness parameter of the halved building block."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    bits = resolve_bits(bits, k)
    with working_precision(bits):
        if k == 0:
            return mpfr(1) / 2
        return 1 / (768768 * gmpy2.sqrt(mpfr(2)) * silver() ** (4 * k))


def repetitions(k: int, eta, delta_next, bits: int | None = None) -> int:
    """R_k = ceil(1 / ((1 - eta) * H_k * delta_next))."""
    bits = resolve_bits(bits, k)
    with working_precision(bits):
        eta = as_real(eta)
        d = as_real(delta_next)
        if not d > 0:
            raise ValueError(f"delta_next must be positive, got {delta_next}")
        if not 0 < eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {eta}")
        q = 1 / ((1 - eta) * building_block(k, bits).sum_H * d)
        return int(gmpy2.ceil(q))


@dataclass
class Stage:
    k: int
    pattern: StepPattern
    reps: int
    start: int

    @property
    def length(self) -> int:
        return self.pattern.t * self.reps


@dataclass
class Schedule:
    """Concatenation of ``(1 - eta) * h^(k)`` repeated ``R_k`` times, k = 0, 1, ...

    Stages are planned lazily; ``max_stage`` (inclusive) bounds planning when
    given, and override lists bound it implicitly.
    """

    eta: mpfr
    bits: int
    delta_overrides: tuple | None = None
    max_stage: int | None = None
    _stages: list[Stage] = field(default_factory=list, repr=False)

    @property
    def delta_source(self) -> str:
        return "override" if self.delta_overrides is not None else "conservative"

    @property
    def last_stage(self) -> int | None:
        """Largest plannable stage index, or None when unbounded."""
        caps = []
        if self.max_stage is not None:
            caps.append(self.max_stage)
        if self.delta_overrides is not None:
            # R_k needs delta^(k+1), overrides list delta^(1), delta^(2), ...
            caps.append(len(self.delta_overrides) - 1)
        return min(caps) if caps else None

    def delta(self, k: int) -> mpfr:
        """Straightforwardness parameter in force for stage ``k``."""
        if k == 0:
            with working_precision(self.bits):
                return mpfr(1) / 2
        if self.delta_overrides is not None:
            if k - 1 >= len(self.delta_overrides):
                raise IndexError(f"no delta override for stage {k}")
            return self.delta_overrides[k - 1]
        return delta_conservative(k, self.bits)

    def stage(self, k: int) -> Stage:
        last = self.last_stage
        if last is not None and k > last:
            raise IndexError(f"stage {k} beyond the last plannable stage {last}")
        while len(self._stages) <= k:
            j = len(self._stages)
            start = 0 if j == 0 else self._stages[-1].start + self._stages[-1].length
            reps = repetitions(j, self.eta, self.delta(j + 1), self.bits)
            self._stages.append(Stage(j, building_block(j, self.bits), reps, start))
        return self._stages[k]

    def stages(self) -> Iterator[Stage]:
        k = 0
        while self.last_stage is None or k <= self.last_stage:
            yield self.stage(k)
            k += 1

    def stage_starts(self, upto: int) -> list[int]:
        """[I_0, ..., I_{upto}]; I_{upto} needs stages 0 .. upto-1 planned."""
        out = [0]
        for k in range(upto):
            st = self.stage(k)
            out.append(st.start + st.length)
        return out

    def scaled_pattern(self, k: int) -> list[float]:
        pat = self.stage(k).pattern
        return [float(h) for h in pat.scaled(1 - self.eta)]

    def entries(self) -> Iterator[tuple[float, int, bool]]:
        """Lazy stream of (step, stage k, completes-an-application) in double precision."""
        for st in self.stages():
            steps = self.scaled_pattern(st.k)
            last = len(steps) - 1
            for _ in range(st.reps):
                for j, h in enumerate(steps):
                    yield h, st.k, j == last

    def __iter__(self) -> Iterator[float]:
        for h, _, _ in self.entries():
            yield h

    def step_at(self, n: int) -> mpfr:
        """Extended-precision step at global index ``n``."""
        if n < 0:
            raise IndexError(n)
        for st in self.stages():
            if n < st.start + st.length:
                j = (n - st.start) % st.pattern.t
                with working_precision(self.bits):
                    return (1 - self.eta) * st.pattern.steps[j]
        raise IndexError(f"index {n} lies beyond the planned stages")

    def materialize(self, n: int) -> list[float]:
        out = []
        for h in self:
            if len(out) >= n:
                break
            out.append(h)
        return out


def build_schedule(
    eta=0.5,
    max_stage: int | None = None,
    delta_overrides: Sequence | None = None,
    bits: int | None = None,
) -> Schedule:
    """Plan the nonperiodic schedule.

    ``delta_overrides[i]`` replaces the conservative parameter of stage
    ``i + 1``; stage 0 always uses 1/2.
    """
    bits = resolve_bits(bits, max_stage)
    with working_precision(bits):
        eta_r = as_real(eta)
        if not 0 < eta_r < 1:
            raise ValueError(f"eta must lie in (0, 1), got {eta}")
        overrides = None
        if delta_overrides is not None:
            if len(delta_overrides) == 0:
                raise ValueError("delta_overrides must not be empty")
            overrides = tuple(as_real(d) for d in delta_overrides)
            for i, d in enumerate(overrides):
                if not (d > 0 and gmpy2.is_finite(d)):
                    raise ValueError(f"delta override #{i} must be positive and finite, got {d}")
    if max_stage is not None and max_stage < 0:
        raise ValueError("max_stage must be nonnegative")
    return Schedule(eta=eta_r, bits=bits, delta_overrides=overrides, max_stage=max_stage)


@dataclass(frozen=True)
class BoundsReport:
    k: int
    alpha_bracket: bool
    H_bracket: bool
    mu_bracket: bool
    mu_increment: bool

    @property
    def ok(self) -> bool:
        return self.alpha_bracket and self.H_bracket and self.mu_bracket and self.mu_increment


def sequence_bounds_check(k: int, bits: int | None = None) -> BoundsReport:
    """Evaluate the four growth brackets on alpha_k, H_k, mu_k - 1 and mu_k - mu_{k-1}."""
    if k < 1:
        raise ValueError("bounds hold for k >= 1")
    bits = resolve_bits(bits, k)
    a, b0, b1 = alpha(k, bits), beta(k, bits), beta(k + 1, bits)
    m, m_prev = mu(k, bits), mu(k - 1, bits)
    H = building_block(k, bits).sum_H
    with working_precision(bits):
        s = silver()
        r2 = gmpy2.sqrt(mpfr(2))
        sk = s**k
        return BoundsReport(
            k=k,
            alpha_bracket=bool(b0 <= a <= b1),
            H_bracket=bool(2 * r2 * sk <= H <= 4 * r2 * sk),
            mu_bracket=bool(r2 * sk <= m - 1 <= 2 * r2 * sk),
            mu_increment=bool((2 - r2) * s ** (k - 1) <= m - m_prev),
        )


def closed_form(k: int) -> list[str] | None:
    """Radical expressions of the first four building blocks, as printed strings."""
    a2 = "-1/2-sqrt(2)+3*sqrt(5)/2+sqrt(10)"
    forms = {
        0: ["2"],
        1: ["3/2", "5", "3/2"],
        2: ["3/2", "1+sqrt(2)", "sqrt(2)", "7+4*sqrt(2)", "sqrt(2)", "1+sqrt(2)", "3/2"],
        3: ["3/2", "1+sqrt(2)", "sqrt(2)", a2, "sqrt(2)", "2", "sqrt(2)",
            "1+(3+2*sqrt(2))*(3+sqrt(5))",
            "sqrt(2)", "2", "sqrt(2)", a2, "sqrt(2)", "1+sqrt(2)", "3/2"],
    }
    return forms.get(k)


def identity_residuals(k: int, bits: int | None = None) -> dict[str, mpfr]:
    """Relative residuals of the exact algebraic identities tying h^(k), alpha, beta, mu.

    Keys: ``product`` (prod(h_i - 1) = 1), ``mu_step`` (mu_{k+1} = mu_k +
    2(alpha_k + beta_{k+1} - 2)), ``sqrt_mu`` (sqrt(mu_k - 1)/(alpha_k - 1) =
    sqrt(mu_{k+1} - 1)/(beta_{k+1} - 1)), ``mu_prev`` (2(beta_k - 1) +
    sqrt((mu_{k-1} - 1)(mu_k - 1)) = mu_k - 1, k >= 1) and ``sum_H``
    (H_k = 2(mu_k - 1)).
    """
    bits = resolve_bits(bits, k)
    pat = building_block(k, bits)
    a, b1 = alpha(k, bits), beta(k + 1, bits)
    m, m1 = mu(k, bits), mu(k + 1, bits)
    with working_precision(bits):
        prod = mpfr(1)
        for h in pat.steps:
            prod *= h - 1
        out = {
            "product": abs(prod - 1),
            "mu_step": rel_err(m1, m + 2 * (a + b1 - 2)),
            "sqrt_mu": rel_err(gmpy2.sqrt(m - 1) / (a - 1), gmpy2.sqrt(m1 - 1) / (b1 - 1)),
            "sum_H": rel_err(pat.sum_H, 2 * (m - 1)),
        }
        if k >= 1:
            mp = mu(k - 1, bits)
            out["mu_prev"] = rel_err(2 * (beta(k, bits) - 1) + gmpy2.sqrt((mp - 1) * (m - 1)), m - 1)
        return out


def clear_caches() -> None:
    """Drop memoized sequences and patterns (all precisions)."""
    with _TABLES_LOCK:
        _TABLES.clear()
    _PATTERNS.clear()
