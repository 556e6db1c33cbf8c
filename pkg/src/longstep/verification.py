"""Numerical verification of certificates.

Matrices over the Gram coordinates ``[x0, g_0, ..., g_t]`` are assembled at
extended precision by streaming over the sparse multiplier support; the
dense per-pair generators in :class:`PepWorkspace` exist for cross-checks
on small patterns.

A matrix is accepted as PSD when its minimum eigenvalue exceeds
``-eps * (1 + ||A||_inf)`` with ``eps = 2**(-bits/2)`` by default.  The
comparison is strict, so a zero tolerance demands positive definiteness.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import gmpy2
import numpy as np
from gmpy2 import mpfr

from . import linalg
from .certificate import (
    STAR,
    Certificate,
    GammaMultiplier,
    edge_weight_report,
    gamma_from_phi,
    lambda_cert,
    phi,
    superdiag_bound,
    superdiag_min,
)
from .numeric import current_bits, psd_epsilon, resolve_bits, silver, to_decimal, working_precision
from .sequence_core import StepPattern, building_block, delta_conservative

# Upper end of the bisection bracket; every certified stage-k>=1 value is below it.
BISECT_HI = 1

LAMBDA2_DENOM = 286
QUANT_DENOM = 21
LEMMA_DENOM = 768768


def identity_tol(bits: int) -> mpfr:
    """Pass threshold for exact identities: 2**(-3*bits/4)."""
    with working_precision(bits):
        return gmpy2.exp2(mpfr(-(3 * bits // 4)))


# ---------------------------------------------------------------------------
# dense generators


class PepWorkspace:
    """Selector vectors and per-pair matrices for a fixed step vector.

    Coordinates of the Gram matrix: index 0 is ``x0``, index ``1 + i`` is
    ``g_i``.  Function values use index ``i`` for ``f_i``.  Generators are
    built on demand.
    """

    def __init__(self, steps, bits: int | None = None):
        self.bits = resolve_bits(bits)
        with working_precision(self.bits):
            self.steps = [mpfr(h) for h in steps]
        self.t = len(self.steps)
        self.n = self.t + 2

    def _zeros(self, n):
        return linalg.zeros_mp(n)

    def g(self, i) -> np.ndarray:
        v = self._zeros(self.n)
        if i != STAR:
            v[1 + i] = mpfr(1)
        return v

    def x(self, i) -> np.ndarray:
        v = self._zeros(self.n)
        if i == STAR:
            return v
        with working_precision(self.bits):
            v[0] = mpfr(1)
            for l in range(i):
                v[1 + l] = -self.steps[l]
        return v

    def f(self, i) -> np.ndarray:
        v = self._zeros(self.t + 1)
        if i != STAR:
            v[i] = mpfr(1)
        return v

    @staticmethod
    def sym_outer(a, b) -> np.ndarray:
        return (np.multiply.outer(a, b) + np.multiply.outer(b, a)) / 2

    def A(self, i, j) -> np.ndarray:
        with working_precision(self.bits):
            return self.sym_outer(self.g(j), self.x(i) - self.x(j))

    def B(self, i, j) -> np.ndarray:
        with working_precision(self.bits):
            d = self.x(i) - self.x(j)
            return self.sym_outer(d, d)

    def C(self, i, j) -> np.ndarray:
        with working_precision(self.bits):
            d = self.g(i) - self.g(j)
            return self.sym_outer(d, d)

    def a(self, i, j) -> np.ndarray:
        with working_precision(self.bits):
            return self.f(j) - self.f(i)

    def Z_dense(self, entries: dict, v=0) -> np.ndarray:
        """v B_{0,*} + sum lam_ij (A_ij + C_ij / 2), summed pair by pair."""
        with working_precision(self.bits):
            Z = self.B(0, STAR) * mpfr(v)
            for (i, j), lam in entries.items():
                Z = Z + (self.A(i, j) + self.C(i, j) / 2) * lam
            return Z


def assemble_pep(pattern) -> PepWorkspace:
    steps = pattern.steps if isinstance(pattern, StepPattern) else pattern
    bits = pattern.bits if isinstance(pattern, StepPattern) else None
    return PepWorkspace(steps, bits)


# ---------------------------------------------------------------------------
# streaming assembly


@dataclass
class Blocks:
    """Z without its corner: ``m`` (length t+1) and ``M = W1 + W2``."""

    W1: np.ndarray
    W2: np.ndarray
    m: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return self.W1 + self.W2


def _entries_of(mult) -> dict:
    if isinstance(mult, Certificate):
        return dict(mult.entries)
    if isinstance(mult, GammaMultiplier):
        return mult.entries()
    return dict(mult)


def assemble_blocks(mult, steps, bits: int) -> Blocks:
    """Accumulate W1, W2 and m for a sparse multiplier over labels {STAR, 0..t}."""
    entries = _entries_of(mult)
    t = len(steps)
    n = t + 1
    with working_precision(bits):
        W1 = linalg.zeros_mp(n, n)
        W2 = linalg.zeros_mp(n, n)
        m = linalg.zeros_mp(n)
        h = [mpfr(x) for x in steps]
        for (i, j), lam in entries.items():
            if lam == 0:
                continue
            half = lam / 2
            if i == STAR and j == STAR:
                continue
            if i == STAR:
                # -g_j (.) x_j: the x0 part feeds m, the step part W1
                m[j] -= half
                for l in range(j):
                    val = half * h[l]
                    W1[j, l] += val
                    W1[l, j] += val
                W2[j, j] += half
                continue
            if j == STAR:
                W2[i, i] += half
                continue
            if i < j:
                lo, hi, sign = i, j, 1
            else:
                lo, hi, sign = j, i, -1
            for l in range(lo, hi):
                val = half * h[l] if sign > 0 else -half * h[l]
                W1[j, l] += val
                W1[l, j] += val
            W2[i, i] += half
            W2[j, j] += half
            W2[i, j] -= half
            W2[j, i] -= half
    return Blocks(W1, W2, m)


def assemble_M(cert: Certificate, pattern: StepPattern):
    """Return (M, W1, W2, m) for a certificate at its own pattern."""
    if cert.t != pattern.t:
        raise ValueError(f"certificate has t={cert.t} but pattern has t={pattern.t}")
    b = assemble_blocks(cert, pattern.steps, pattern.bits)
    with working_precision(pattern.bits):
        return b.M, b.W1, b.W2, b.m


# ---------------------------------------------------------------------------
# individual checks


@dataclass
class Residual:
    ok: bool
    residual: mpfr

    def to_json(self) -> dict:
        return {"ok": self.ok, "residual": to_decimal(self.residual)}


def flow_residuals(entries: dict, t: int, rhs: Callable[[int], object]) -> list:
    """Per-index (col_sum - row_sum - rhs(m), scale) over iterate labels 0..t."""
    rows = [mpfr(0)] * (t + 1)
    cols = [mpfr(0)] * (t + 1)
    for (i, j), v in entries.items():
        if i != STAR:
            rows[i] += v
        if j != STAR:
            cols[j] += v
    out = []
    for q in range(t + 1):
        r = cols[q] - rows[q] - rhs(q)
        out.append((r, max(abs(rows[q]), abs(cols[q]), mpfr(1))))
    return out


def check_rowcol(cert: Certificate) -> Residual:
    """Row 0 exceeds column 0 by one, row t falls short of column t by one, others balance."""
    t = cert.t
    with working_precision(cert.bits):
        res = flow_residuals(cert.entries, t, lambda q: (q == t) - (q == 0))
        worst = max(abs(r) / s for r, s in res)
        return Residual(bool(worst <= identity_tol(cert.bits)), worst)


def check_gamma_lin(gamma: GammaMultiplier, H) -> Residual:
    """Linear constraint on gamma at a pattern of total length ``H``."""
    t = gamma.t
    with working_precision(gamma.bits):
        H = mpfr(H)
        # sum gamma_ij (f_j - f_i) = 2H (f_0 - f_*): column minus row sums is 2H at 0
        res = flow_residuals(gamma.entries(), t, lambda q: 2 * H if q == 0 else 0)
        worst = max(abs(r) for r, _ in res) / (2 * H)
        return Residual(bool(worst <= identity_tol(gamma.bits)), worst)


@dataclass
class RankOneReport:
    ok: bool
    deviation: mpfr
    sv_ratio: mpfr
    sv_method: str
    nonneg_ok: bool

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "deviation": to_decimal(self.deviation),
            "sv_ratio": to_decimal(self.sv_ratio),
            "sv_method": self.sv_method,
            "nonneg_ok": self.nonneg_ok,
        }


def check_rank_one(M: np.ndarray, phi_values, bits: int, exact: bool = False) -> RankOneReport:
    """Compare M with phi phi^T / 2.

    ``sv_ratio`` bounds sigma_2 / sigma_1 by Eckart-Young with the Frobenius
    norm of the deviation; ``exact=True`` uses the eigensolver instead.
    """
    with working_precision(bits):
        f = np.array([mpfr(x) for x in phi_values], dtype=object)
        if len(f) != M.shape[0]:
            raise ValueError("phi length does not match M")
        E = M - np.multiply.outer(f, f) / 2
        scale = linalg.max_abs(M)
        dev = linalg.max_abs(E) / scale
        if exact:
            vals = sorted((abs(v) for v in linalg.eigvalsh(M)), reverse=True)
            ratio = vals[1] / vals[0] if len(vals) > 1 else mpfr(0)
            method = "eigensolver"
        else:
            e = linalg.frobenius(E)
            top = np.dot(f, f) / 2 - e
            ratio = e / top if top > 0 else mpfr("inf")
            method = "eckart-young bound"
        tol = identity_tol(bits)
        nonneg = all(x >= -tol * scale for x in M.ravel())
        return RankOneReport(bool(dev <= tol and ratio <= tol), dev, ratio, method, bool(nonneg))


def laplacian(cert: Certificate, weight=1) -> np.ndarray:
    """Laplacian over iterates with edge weight ``weight * (lam_ij + lam_ji)``."""
    n = cert.t + 1
    with working_precision(cert.bits):
        w = mpfr(weight)
        Lp = linalg.zeros_mp(n, n)
        for (i, j), v in cert.entries.items():
            x = w * v
            Lp[i, i] += x
            Lp[j, j] += x
            Lp[i, j] -= x
            Lp[j, i] -= x
        return Lp


@dataclass
class SpectralReport:
    smallest: mpfr
    second: mpfr
    bound: mpfr
    kernel_residual: mpfr
    reconstruction: mpfr | None = None

    @property
    def ok(self) -> bool:
        return bool(self.second >= self.bound)

    def to_json(self) -> dict:
        out = {
            "ok": self.ok,
            "smallest": to_decimal(self.smallest),
            "second": to_decimal(self.second),
            "bound": to_decimal(self.bound),
            "kernel_residual": to_decimal(self.kernel_residual),
        }
        if self.reconstruction is not None:
            out["reconstruction"] = to_decimal(self.reconstruction)
        return out


def lambda2_bound(k: int, bits: int) -> mpfr:
    with working_precision(bits):
        return silver() ** (-k) / LAMBDA2_DENOM


def w2_second_eigenvalue(cert: Certificate, weight=1, vectors: bool = False) -> SpectralReport:
    """Second-smallest eigenvalue of the weighted Laplacian of the certificate.

    ``weight=1`` puts ``lam_ij + lam_ji`` on each edge; ``weight=1/2`` gives
    the block that appears inside ``M``.
    """
    Lp = laplacian(cert, weight)
    with working_precision(cert.bits):
        if vectors:
            vals, Q = linalg.eigh(Lp, vectors=True)
            recon = linalg.reconstruction_error(Lp, vals, Q)
        else:
            vals, recon = linalg.eigvalsh(Lp), None
        ones = np.array([mpfr(1)] * Lp.shape[0], dtype=object)
        kern = linalg.max_abs(Lp.dot(ones)) / max(linalg.max_abs(Lp), mpfr(1))
        return SpectralReport(vals[0], vals[1], lambda2_bound(cert.k, cert.bits), kern, recon)


def delta_quantitative(cert: Certificate, pattern: StepPattern, lfrak) -> mpfr:
    """min(min superdiagonal / H, lfrak / (21 H^3)) for eta = 1/2."""
    H = pattern.sum_H
    with working_precision(pattern.bits):
        lfrak = mpfr(lfrak)
        if pattern.t < 3:
            raise ValueError(f"needs t >= 3, got t={pattern.t}")
        if H < 8:
            raise ValueError(f"needs H >= 8, got H={H}")
        if not 0 < lfrak <= 1:
            raise ValueError("lfrak must lie in (0, 1]")
        return min(superdiag_min(cert) / H, lfrak / (QUANT_DENOM * H**3))


def lemma_constant_composition(k: int, bits: int | None = None) -> dict:
    """Evaluate the lfrak/(21 H^3) branch at the worst-case lfrak and H bounds.

    With lfrak = (1+sqrt2)^-k / 286 and H = 4 sqrt2 (1+sqrt2)^k this is
    (1+sqrt2)^(-4k) / (286 * 21 * 128 * sqrt 2), i.e. the conservative
    constant; the integer product is checked separately.
    """
    bits = resolve_bits(bits, k)
    with working_precision(bits):
        s = silver()
        r2 = gmpy2.sqrt(mpfr(2))
        lf = s ** (-k) / LAMBDA2_DENOM
        Hb = 4 * r2 * s**k
        composed = lf / (QUANT_DENOM * Hb**3)
        target = delta_conservative(k, bits)
        superdiag_branch = superdiag_bound(k, bits) / Hb
        return {
            "integer_identity": LAMBDA2_DENOM * QUANT_DENOM * 128 == LEMMA_DENOM,
            "composed": composed,
            "target": target,
            "rel_err": abs(composed - target) / target,
            "superdiag_branch": superdiag_branch,
            "superdiag_dominates": bool(superdiag_branch >= composed),
        }


# ---------------------------------------------------------------------------
# membership


@dataclass
class MembershipReport:
    lambda_lin: bool
    gamma_lin: bool
    m_lambda_zero: bool
    lambda_nonneg: bool
    shifted_nonneg: bool
    psd_first: bool
    psd_second: bool
    min_eig_first: mpfr
    min_eig_second: mpfr
    delta: mpfr

    @property
    def ok(self) -> bool:
        return all(
            (self.lambda_lin, self.gamma_lin, self.m_lambda_zero, self.lambda_nonneg,
             self.shifted_nonneg, self.psd_first, self.psd_second)
        )

    def failures(self) -> list[str]:
        names = ["lambda_lin", "gamma_lin", "m_lambda_zero", "lambda_nonneg",
                 "shifted_nonneg", "psd_first", "psd_second"]
        return [n for n in names if not getattr(self, n)]

    def to_json(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if isinstance(v, bool)}
        d.update(ok=self.ok, delta=to_decimal(self.delta),
                 min_eig_first=to_decimal(self.min_eig_first),
                 min_eig_second=to_decimal(self.min_eig_second))
        return d


def psd_check(A: np.ndarray, eps) -> tuple[bool, mpfr]:
    lmin = linalg.min_eigenvalue(A)
    return bool(lmin > -eps * (1 + linalg.inf_norm(A))), lmin


def _bordered(corner, border: np.ndarray, M: np.ndarray) -> np.ndarray:
    n = M.shape[0] + 1
    out = linalg.zeros_mp(n, n)
    out[0, 0] = corner
    out[0, 1:] = border
    out[1:, 0] = border
    out[1:, 1:] = M
    return out


class MembershipProblem:
    """Candidate (lam, gamma) at a step vector; Delta-independent parts cached."""

    def __init__(self, steps, lam: Certificate, gamma: GammaMultiplier, bits: int | None = None, psd_tol=None):
        self.bits = resolve_bits(bits if bits is not None else lam.bits)
        with working_precision(self.bits):
            self.steps = [mpfr(h) for h in steps]
            self.H = sum(self.steps, mpfr(0))
            self.eps = psd_epsilon(self.bits) if psd_tol is None else mpfr(psd_tol)
        self.lam = lam
        self.gamma = gamma
        self.t = len(self.steps)
        if lam.t != self.t or gamma.t != self.t:
            raise ValueError("pattern, lambda and gamma disagree on t")
        self.lam_b = assemble_blocks(lam, self.steps, self.bits)
        self.gam_b = assemble_blocks(gamma, self.steps, self.bits)
        tol = identity_tol(self.bits)
        with working_precision(self.bits):
            self.lambda_lin = check_rowcol(lam).ok
            self.gamma_lin = check_gamma_lin(gamma, self.H).ok
            self.m_lambda_zero = bool(linalg.max_abs(self.lam_b.m) <= tol)
            self.lambda_nonneg = all(v >= 0 for v in lam.entries.values())
            self.M_lam = self.lam_b.M
            self.M_gam = self.gam_b.M
            self.first = _bordered(self.H, self.gam_b.m, self.M_lam)
            self.psd_first, self.min_first = psd_check(self.first, self.eps)

    def shifted_nonneg(self, delta) -> bool:
        lam = self.lam.entries
        for key, g in self.gamma.entries().items():
            if lam.get(key, mpfr(0)) + delta * g < 0:
                return False
        return True

    def evaluate(self, delta) -> MembershipReport:
        with working_precision(self.bits):
            delta = mpfr(delta)
            second = _bordered(self.H, self.gam_b.m, self.M_lam + self.M_gam * delta)
            ok2, lmin2 = psd_check(second, self.eps)
            return MembershipReport(
                self.lambda_lin, self.gamma_lin, self.m_lambda_zero, self.lambda_nonneg,
                self.shifted_nonneg(delta), self.psd_first, ok2, self.min_first, lmin2, delta,
            )


def membership_S(steps, delta, cert: Certificate, gamma: GammaMultiplier, psd_tol=None) -> MembershipReport:
    return MembershipProblem(steps, cert, gamma, psd_tol=psd_tol).evaluate(delta)


def halved_candidate(k: int, bits: int | None = None):
    """(steps/2, lam, gamma/2) for the stage-k building block."""
    bits = resolve_bits(bits, k)
    pat = building_block(k, bits)
    cert = lambda_cert(k, bits)
    gamma = gamma_from_phi(pat.sum_H, phi(k, bits), bits)
    return pat.scaled("1/2"), cert, gamma.scaled(mpfr(1) / 2)


def first_block_split(k: int, bits: int | None = None) -> dict:
    """Check the first PSD block equals (A + B)/2 with A rank-one, B = diag(0, W2).

    Returns the max deviation and the rank-one residual of A.
    """
    bits = resolve_bits(bits, k)
    steps, cert, g2 = halved_candidate(k, bits)
    prob = MembershipProblem(steps, cert, g2, bits)
    pat = building_block(k, bits)
    full = assemble_blocks(cert, pat.steps, bits)
    gam = gamma_from_phi(pat.sum_H, phi(k, bits), bits)
    gb = assemble_blocks(gam, pat.steps, bits)
    with working_precision(bits):
        A = _bordered(pat.sum_H, gb.m, full.M)
        Bm = _bordered(mpfr(0), linalg.zeros_mp(cert.t + 1), full.W2)
        dev = linalg.max_abs(prob.first - (A + Bm) / 2) / linalg.max_abs(prob.first)
        vec = np.array([gmpy2.sqrt(pat.sum_H)] + [-x / gmpy2.sqrt(mpfr(2)) for x in phi(k, bits)], dtype=object)
        rank1 = linalg.max_abs(A - np.multiply.outer(vec, vec)) / linalg.max_abs(A)
        return {"split_deviation": dev, "rank_one_residual": rank1}


@dataclass
class BisectionResult:
    lo: mpfr
    hi: mpfr
    steps: int
    hi_is_bracket: bool

    def to_json(self) -> dict:
        return {"lo": to_decimal(self.lo), "hi": to_decimal(self.hi), "steps": self.steps}


def bisect_delta(problem: MembershipProblem, lo, iterations: int, hi=BISECT_HI) -> BisectionResult:
    """Geometric bisection for the largest Delta in [lo, hi] passing membership.

    Each iteration halves log(hi/lo); the returned ``lo`` always passes.
    Raises if ``lo`` itself fails.
    """
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    with working_precision(problem.bits):
        lo, hi = mpfr(lo), mpfr(hi)
        if not problem.evaluate(lo).ok:
            raise ArithmeticError(f"membership fails already at the starting Delta {lo}")
        if iterations == 0:
            return BisectionResult(lo, hi, 0, False)
        if problem.evaluate(hi).ok:
            return BisectionResult(hi, hi, 0, False)
        for _ in range(iterations):
            mid = gmpy2.sqrt(lo * hi)
            if problem.evaluate(mid).ok:
                lo = mid
            else:
                hi = mid
        return BisectionResult(lo, hi, iterations, True)


def bisect_stage(k: int, iterations: int, bits: int | None = None, psd_tol=None) -> BisectionResult:
    bits = resolve_bits(bits, k)
    steps, cert, g2 = halved_candidate(k, bits)
    prob = MembershipProblem(steps, cert, g2, bits, psd_tol)
    return bisect_delta(prob, delta_conservative(k, bits), iterations)


# ---------------------------------------------------------------------------
# necessary conditions on arbitrary patterns


@dataclass
class FeasibilityBounds:
    """Product, sum and mixed necessary conditions on a pattern.

    Margins are ``rhs - lhs``.  A condition is *violated* when its margin is
    below ``-tol``, *tight* when within ``tol`` of zero.  Building blocks sit
    exactly on the product and sum boundaries, so tightness alone does not
    rule a pattern out.
    """

    product: object
    product_margin: object
    sum_margins: list
    mixed_margins: list
    tol: object

    def _violated(self, m) -> bool:
        return bool(m < -self.tol)

    def _strict(self, m) -> bool:
        return bool(m > self.tol)

    @property
    def product_ok(self) -> bool:
        return not self._violated(self.product_margin)

    @property
    def sum_ok(self) -> bool:
        return not any(self._violated(m) for m in self.sum_margins)

    @property
    def mixed_ok(self) -> bool:
        return not any(self._violated(m) for m in self.mixed_margins)

    @property
    def ok(self) -> bool:
        """No condition is violated."""
        return self.product_ok and self.sum_ok and self.mixed_ok

    @property
    def strict(self) -> bool:
        """Every condition holds with a margin beyond the tolerance."""
        margins = [self.product_margin, *self.sum_margins, *self.mixed_margins]
        return all(self._strict(m) for m in margins)

    def violated_sums(self) -> list[int]:
        return [i for i, m in enumerate(self.sum_margins) if self._violated(m)]

    def violated_mixed(self) -> list[int]:
        return [i for i, m in enumerate(self.mixed_margins) if self._violated(m)]


def pattern_feasibility_bounds(steps, tol=None) -> FeasibilityBounds:
    """Evaluate the product, sum and mixed conditions; any violation rules the pattern out.

    Works for float or mpfr entries.  ``tol`` defaults to 0 for floats and
    to the identity tolerance of the current precision for mpfr.
    """
    h = list(steps)
    t = len(h)
    if t == 0:
        raise ValueError("empty pattern")
    if any(x <= 0 for x in h):
        raise ValueError("steps must be positive")
    mp = isinstance(h[0], type(mpfr(0)))
    bits = max(x.precision for x in h) if mp else current_bits()
    with working_precision(bits):
        if tol is None:
            tol = identity_tol(bits) if mp else 0.0
        prod = h[0] * 0 + 1
        for x in h:
            prod *= x - 1
        total = sum(h[1:], h[0])
        sums = [(total - x + 2) - x for x in h]
        mixed = []
        for i in range(t):
            ip = (i + 1) % t
            rest = total - h[i] - (h[ip] if ip != i else 0)
            mixed.append((rest + 1) - (1 - h[i]) * (1 - h[ip]))
        return FeasibilityBounds(product=prod, product_margin=1 - abs(prod), sum_margins=sums, mixed_margins=mixed, tol=tol)


# ---------------------------------------------------------------------------
# full report


@dataclass
class VerificationReport:
    k: int
    t: int
    precision_bits: int
    psd_tol: mpfr
    rowcol: Residual
    gamma_lin: Residual
    rank_one: RankOneReport
    m_lambda_zero_ok: bool
    nonneg_ok: bool
    superdiag_positive_ok: bool
    M_psd_ok: bool
    M_min_eig: mpfr
    spectral: SpectralReport | None
    superdiag_min: mpfr
    superdiag_bound: mpfr
    delta_quant: mpfr | None
    delta_conservative: mpfr
    membership: MembershipReport | None = None
    bisection: BisectionResult | None = None
    edge_weights: dict = field(default_factory=dict)

    @property
    def superdiag_ok(self) -> bool:
        return bool(self.k == 0 or self.superdiag_min >= self.superdiag_bound)

    @property
    def delta_quant_ok(self) -> bool:
        if self.delta_quant is None:
            return True
        with working_precision(self.precision_bits):
            return bool(self.delta_quant >= self.delta_conservative * (1 - identity_tol(self.precision_bits)))

    @property
    def passed(self) -> bool:
        parts = [
            self.rowcol.ok, self.gamma_lin.ok, self.rank_one.ok, self.rank_one.nonneg_ok,
            self.m_lambda_zero_ok, self.nonneg_ok, self.superdiag_positive_ok, self.M_psd_ok,
            self.superdiag_ok, self.delta_quant_ok,
        ]
        if self.spectral is not None:
            parts.append(self.spectral.ok)
        if self.membership is not None:
            parts.append(self.membership.ok)
        return all(parts)

    def to_json(self) -> dict:
        out = {
            "k": self.k,
            "t": self.t,
            "precision_bits": self.precision_bits,
            "psd_tol": to_decimal(self.psd_tol),
            "passed": self.passed,
            "rowcol": self.rowcol.to_json(),
            "gamma_lin": self.gamma_lin.to_json(),
            "rank_one": self.rank_one.to_json(),
            "m_lambda_zero_ok": self.m_lambda_zero_ok,
            "nonneg_ok": self.nonneg_ok,
            "superdiag_positive_ok": self.superdiag_positive_ok,
            "M_psd_ok": self.M_psd_ok,
            "M_min_eig": to_decimal(self.M_min_eig),
            "second_eig": self.spectral.to_json() if self.spectral else None,
            "superdiag_min": to_decimal(self.superdiag_min),
            "superdiag_bound": to_decimal(self.superdiag_bound),
            "superdiag_ok": self.superdiag_ok,
            "delta_quant": to_decimal(self.delta_quant) if self.delta_quant is not None else None,
            "delta_conservative": to_decimal(self.delta_conservative),
            "delta_quant_ok": self.delta_quant_ok,
            "membership": self.membership.to_json() if self.membership else None,
            "delta_bisected": self.bisection.to_json() if self.bisection else None,
            "edge_weights": {k: (to_decimal(v) if v is not None else None) for k, v in self.edge_weights.items()},
        }
        return out


# Membership needs two dense eigen-solves per Delta; beyond this stage it is opt-in.
MEMBERSHIP_MAX_K = 5


def verify(
    k: int,
    bits: int | None = None,
    psd_tol=None,
    bisect_iterations: int | None = None,
    membership: bool | None = None,
    spectral: bool = True,
    exact_sv: bool = False,
) -> VerificationReport:
    """Run every certificate check for stage ``k``."""
    bits = resolve_bits(bits, k)
    pat = building_block(k, bits)
    cert = lambda_cert(k, bits)
    f = phi(k, bits)
    with working_precision(bits):
        eps = psd_epsilon(bits) if psd_tol is None else mpfr(psd_tol)
    M, W1, W2, m = assemble_M(cert, pat)
    rowcol = check_rowcol(cert)
    gamma = gamma_from_phi(pat.sum_H, f, bits)
    glin = check_gamma_lin(gamma, pat.sum_H)
    r1 = check_rank_one(M, f, bits, exact=exact_sv)
    tol = identity_tol(bits)
    with working_precision(bits):
        m_ok = bool(linalg.max_abs(m) <= tol)
        nonneg = all(v >= 0 for v in cert.entries.values()) and all(
            i != STAR and j != STAR for i, j in cert.entries
        )
        sd_min = superdiag_min(cert)
        sd_pos = bool(sd_min > 0)
        M_ok, M_min = psd_check(M, eps)
    spec = w2_second_eigenvalue(cert) if (spectral and k >= 1) else None
    dq = None
    if k >= 1:
        # the block inside M carries half the edge weight of the Laplacian above
        with working_precision(bits):
            lfrak = min(spec.second / 2, mpfr(1)) if spec is not None else lambda2_bound(k, bits)
        dq = delta_quantitative(cert, pat, lfrak)
    mem = bis = None
    if membership is None:
        membership = k <= MEMBERSHIP_MAX_K or bisect_iterations is not None
    if membership or bisect_iterations is not None:
        steps2, _, g2 = halved_candidate(k, bits)
        prob = MembershipProblem(steps2, cert, g2, bits, eps)
        mem = prob.evaluate(delta_conservative(k, bits))
        if bisect_iterations is not None and mem.ok:
            bis = bisect_delta(prob, delta_conservative(k, bits), bisect_iterations)
    return VerificationReport(
        k=k, t=pat.t, precision_bits=bits, psd_tol=eps, rowcol=rowcol, gamma_lin=glin,
        rank_one=r1, m_lambda_zero_ok=m_ok, nonneg_ok=nonneg, superdiag_positive_ok=sd_pos,
        M_psd_ok=M_ok, M_min_eig=M_min, spectral=spec, superdiag_min=sd_min,
        superdiag_bound=superdiag_bound(k, bits) if k >= 1 else mpfr(0),
        delta_quant=dq, delta_conservative=delta_conservative(k, bits),
        membership=mem, bisection=bis,
        edge_weights=edge_weight_report(cert) if k >= 1 else {},
    )
