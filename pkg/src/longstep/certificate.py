"""Sparse certificate matrices for the building-block patterns.

Row and column labels are ``STAR`` for the optimum and ``0 .. t`` for the
iterates, with ``t = 2**(k+1) - 1``.  Every certificate built here is zero
on the ``STAR`` row and column, so entries are stored as ``(i, j) -> mpfr``
with integer iterate labels.

Two independent constructions are provided: :func:`lambda_rows` places
scaled copies of the auxiliary vectors ``rho``, ``sigma`` and ``w`` into
row windows, and :func:`lambda_entrywise` evaluates each entry from its own
closed form.  They must agree; :func:`lambda_cert` uses the row form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from .numeric import psd_epsilon, resolve_bits, silver, to_decimal, working_precision
from .sequence_core import INFINITE_VALUATION, beta, mu, nu, pi_vector

STAR = "*"

CASE_STAR = "star"
CASE_ZERO = "zero"


def popcount(n: int) -> int:
    return bin(n).count("1")


def is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class IndexMeta:
    """Binary statistics of ``i + 1`` for row/column index ``i``."""

    nu: int | float
    p: int
    z: int


def index_meta(i: int) -> IndexMeta:
    if i < 0:
        raise ValueError("index must be nonnegative")
    return IndexMeta(nu=nu(i + 1), p=popcount(i + 1), z=(i + 1).bit_length() - 1)


def rev(r: int, k: int) -> int:
    """Reflect an index of the stage-k certificate: 2**(k+1) - 2 - r."""
    return 2 ** (k + 1) - 2 - r


def _p(i: int) -> int:
    return popcount(i + 1)


def _z(i: int) -> int:
    return (i + 1).bit_length() - 1


def sigma(k: int, bits: int | None = None) -> list[mpfr]:
    """Length ``2**(k-1) - 1``; empty for k = 1."""
    if k < 1:
        raise ValueError("sigma is defined for k >= 1")
    bits = resolve_bits(bits, k)
    out: list[mpfr] = []
    with working_precision(bits):
        s = silver()
        for m in range(2, k + 1):
            c = s ** (-2 * (m - 1)) / 2
            head = [c * b for b in pi_vector(m - 2, bits)] + [c * beta(m, bits)]
            out = head + out
    return out


def rho(k: int, bits: int | None = None) -> list[mpfr]:
    if k < 0:
        raise ValueError("rho is defined for k >= 0")
    bits = resolve_bits(bits, k)
    with working_precision(bits):
        if k == 0:
            return [mpfr(0), mpfr(1)]
        s = silver()
        sig = sigma(k, bits)
        prev = pi_vector(k - 1, bits)
        c = s ** (2 * k - 1)
        mid = [c * a - b / (2 * s) for a, b in zip(sig, prev)]
        return [s ** (k - 2)] + mid + [mpfr(0)] + pi_vector(k, bits) + [mpfr(1)]


def w_vec(k: int, bits: int | None = None) -> list[mpfr]:
    if k < 0:
        raise ValueError("w is defined for k >= 0")
    bits = resolve_bits(bits, k)
    with working_precision(bits):
        out = [mpfr(1)]
        for m in range(1, k + 1):
            r = gmpy2.sqrt(mu(m, bits) - 1)
            out = [b / r for b in pi_vector(m - 1, bits)] + [beta(m, bits) / r] + out
        return out


def phi(k: int, bits: int | None = None) -> list[mpfr]:
    """Rank-one factor, length ``2**(k+1)``, indexed by iterates ``0 .. t``."""
    bits = resolve_bits(bits, k)
    with working_precision(bits):
        if k == 0:
            return [mpfr(1), mpfr(1)]
        return [mpfr(0)] * (2**k - 1) + [gmpy2.sqrt(mu(k, bits) - 1)] + w_vec(k, bits)


@dataclass
class Certificate:
    k: int
    t: int
    bits: int
    entries: dict = field(default_factory=dict)
    cases: dict = field(default_factory=dict)

    def get(self, i, j) -> mpfr:
        if i == STAR or j == STAR:
            return mpfr(0)
        return self.entries.get((i, j), mpfr(0))

    def labels(self) -> list:
        return [STAR] + list(range(self.t + 1))

    def row(self, i) -> dict:
        return {j: v for (r, j), v in self.entries.items() if r == i}

    def nonzeros(self):
        return sorted(self.entries.items())

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "t": self.t,
            "precision_bits": self.bits,
            "entries": [[i, j, to_decimal(v)] for (i, j), v in self.nonzeros()],
            "cases": {str(lab): self.cases[lab] for lab in self.labels() if lab in self.cases},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def from_json(cls, data: dict) -> "Certificate":
        bits = int(data["precision_bits"])
        with working_precision(bits):
            entries = {(int(i), int(j)): mpfr(v) for i, j, v in data["entries"]}
        cases = {}
        for key, c in data.get("cases", {}).items():
            cases[STAR if key == STAR else int(key)] = c
        return cls(k=int(data["k"]), t=int(data["t"]), bits=bits, entries=entries, cases=cases)


def row_case(i: int, k: int) -> int:
    """Which of the five row families index ``i`` of the stage-k certificate uses."""
    t = 2 ** (k + 1) - 1
    if not 0 <= i < t:
        raise ValueError(f"row {i} has no case for k={k}")
    if i == 2**k - 1:
        return 4
    if i + 1 < 2**k:
        return 3 if is_pow2(i + 1) else 1
    return 5 if is_pow2(t - i) else 2


def _row_vector(i: int, k: int, bits: int) -> list[mpfr]:
    """Window vector v with lambda_{i, i - floor(2**(l-1)) + m} = v[m], l = nu(i + 1)."""
    case = row_case(i, k)
    s = silver()
    t = 2 ** (k + 1) - 1
    if case == 1:
        z, p = _z(i), _p(i)
        c = (mu(z + 1, bits) - 1) / s ** (2 * (z - p) + 3)
        return [c * x for x in rho(nu(i + 1), bits)]
    if case == 2:
        zr = _z(rev(i, k))
        c = s ** (2 * (_p(i) + zr - k) - 1) / (mu(zr + 1, bits) - 1)
        return [c * x for x in rho(nu(i + 1), bits)]
    if case in (3, 4):
        ell = (i + 1).bit_length() - 1
        if ell == 0:
            return [mpfr(0), mpfr(2)]
        m1 = mu(ell, bits) - 1
        head = [m1 * s ** (-(ell - 1)) / 2 - 1] + [m1 * x for x in sigma(ell, bits)] + [mpfr(0)]
        if case == 3:
            c = (mu(ell + 1, bits) - 1) / (2 * s ** (2 * ell))
            return head + [c * x for x in pi_vector(ell, bits)] + [c]
        r = gmpy2.sqrt(m1)
        return head + [x / r for x in w_vec(k, bits)]
    ell = (t - i).bit_length() - 1
    if ell == 0:
        return [mpfr(0), mpfr(1) / 2]
    m2 = mu(ell + 1, bits) - 1
    left = [s ** (ell - 1) / m2]
    left += [(s ** (2 * ell) * a - b / 2) / m2 for a, b in zip(sigma(ell, bits), pi_vector(ell - 1, bits))]
    c = 1 / gmpy2.sqrt(mu(ell, bits) - 1) - 1 / gmpy2.sqrt(m2)
    return left + [mpfr(0)] + [c * x for x in w_vec(ell, bits)]


def _zero_cert(k: int, bits: int) -> Certificate:
    with working_precision(bits):
        cert = Certificate(k=0, t=1, bits=bits, entries={(0, 1): mpfr(1)})
    cert.cases = {STAR: CASE_STAR, 0: CASE_ZERO, 1: CASE_ZERO}
    return cert


def lambda_rows(k: int, bits: int | None = None) -> Certificate:
    """Certificate assembled from row windows."""
    bits = resolve_bits(bits, k)
    if k == 0:
        return _zero_cert(k, bits)
    t = 2 ** (k + 1) - 1
    cert = Certificate(k=k, t=t, bits=bits)
    cert.cases[STAR] = CASE_STAR
    with working_precision(bits):
        for i in range(t):
            v = _row_vector(i, k, bits)
            left = (2 ** (nu(i + 1) - 1)) if nu(i + 1) >= 1 else 0
            for m, val in enumerate(v):
                j = i - left + m
                if j != i and val != 0:
                    cert.entries[(i, j)] = val
            cert.cases[i] = row_case(i, k)
    cert.cases[t] = CASE_ZERO
    return cert


def _left_block(i: int, ell: int, scale_a, scale_between, first, put) -> None:
    """Fill columns i - 2**(ell-1) .. i - 1 of a row with window width 2**(ell-1).

    ``first`` is the entry at column i - 2**(ell-1); ``scale_a(a)`` gives the
    entry at i - 2**a and ``scale_between(a, j)`` those strictly between
    i - 2**(a+1) and i - 2**a, for 0 <= a < ell - 1.
    """
    if ell < 1:
        return
    put(i - 2 ** (ell - 1), first)
    for a in range(ell - 1):
        put(i - 2**a, scale_a(a))
        for j in range(i - 2 ** (a + 1) + 1, i - 2**a):
            put(j, scale_between(a, j))


def lambda_entrywise(k: int, bits: int | None = None) -> Certificate:
    """Certificate assembled entry by entry from the per-entry closed forms."""
    bits = resolve_bits(bits, k)
    if k == 0:
        return _zero_cert(k, bits)
    t = 2 ** (k + 1) - 1
    cert = Certificate(k=k, t=t, bits=bits)
    cert.cases[STAR] = CASE_STAR
    cert.cases[t] = CASE_ZERO
    with working_precision(bits):
        s = silver()

        def B(n):
            return beta(n, bits)

        def bnu(j):
            return beta(nu(j + 1), bits)

        for i in range(t):
            case = row_case(i, k)
            cert.cases[i] = case
            ell = nu(i + 1)

            def put(j, val, i=i):
                if val != 0:
                    cert.entries[(i, j)] = val

            if case == 1:
                z, p = _z(i), _p(i)
                m1 = mu(z + 1, bits) - 1
                c = m1 / s ** (2 * (z - p) + 3)
                _left_block(
                    i, ell,
                    lambda a: c * (s ** (2 * (ell - a) - 3) * B(a + 2) / 2 - B(a) / (2 * s)),
                    lambda a, j: m1 / (2 * s ** (2 * (z - p) + 4)) * (s ** (2 * (ell - a) - 2) - 1) * bnu(j),
                    m1 / s ** (2 * (z - p) - ell + 5),
                    put,
                )
                for j in range(i + 1, i + 2**ell):
                    put(j, c * bnu(j))
                put(i + 2**ell, c)
            elif case == 2:
                z, p = _z(rev(i, k)), _p(i)
                m1 = mu(z + 1, bits) - 1
                E = 2 * (p + z - k)
                _left_block(
                    i, ell,
                    lambda a: s ** (E - 1) / (2 * m1) * (s ** (2 * (ell - a) - 3) * B(a + 2) - B(a) / s),
                    lambda a, j: s ** (E - 2) / (2 * m1) * (s ** (2 * (ell - a) - 2) - 1) * bnu(j),
                    s ** (E - 3 + ell) / m1,
                    put,
                )
                c = s ** (E - 1) / m1
                for j in range(i + 1, i + 2**ell):
                    put(j, c * bnu(j))
                put(i + 2**ell, c)
            elif case in (3, 4):
                L = (i + 1).bit_length() - 1
                if L == 0:
                    put(1, mpfr(2))
                    continue
                m1 = mu(L, bits) - 1
                _left_block(
                    i, L,
                    lambda a: m1 * s ** (-2 * (a + 1)) * B(a + 2) / 2,
                    lambda a, j: m1 * s ** (-2 * (a + 1)) * bnu(j) / 2,
                    m1 * s ** (-(L - 1)) / 2 - 1,
                    put,
                )
                if case == 3:
                    c = (mu(L + 1, bits) - 1) / (2 * s ** (2 * L))
                    for j in range(2**L, 2 ** (L + 1) - 1):
                        put(j, c * bnu(j))
                    put(2 ** (L + 1) - 1, c)
                else:
                    r = gmpy2.sqrt(m1)
                    _right_w_block(i, k, k, lambda a: 1 / (r * gmpy2.sqrt(mu(a + 1, bits) - 1)), bnu, B, put)
                    put(t, 1 / r)
            else:
                L = (t - i).bit_length() - 1
                if L == 0:
                    put(t, mpfr(1) / 2)
                    continue
                m2 = mu(L + 1, bits) - 1
                _left_block(
                    i, L,
                    lambda a: (s ** (2 * (L - a - 1)) * B(a + 2) - B(a)) / (2 * m2),
                    lambda a, j: (s ** (2 * (L - a - 1)) - 1) * bnu(j) / (2 * m2),
                    s ** (L - 1) / m2,
                    put,
                )
                d = 1 / gmpy2.sqrt(mu(L, bits) - 1) - 1 / gmpy2.sqrt(m2)
                _right_w_block(i, k, L, lambda a: d / gmpy2.sqrt(mu(a + 1, bits) - 1), bnu, B, put)
                put(t, d)
    return cert


def _right_w_block(i, k, top, coef, bnu, B, put) -> None:
    """Columns between rev(2**top - 1) and t - 1, laid out like w_top."""
    for a in range(top):
        c = coef(a)
        put(rev(2**a - 1, k), c * B(a + 1))
        for j in range(rev(2 ** (a + 1) - 1, k) + 1, rev(2**a - 1, k)):
            put(j, c * bnu(j))


def lambda_cert(k: int, bits: int | None = None) -> Certificate:
    return lambda_rows(k, bits)


@dataclass
class GammaMultiplier:
    """Second multiplier: a ``STAR`` row and a superdiagonal, zero elsewhere."""

    star_row: list
    superdiag: list
    bits: int

    @property
    def t(self) -> int:
        return len(self.superdiag)

    def scaled(self, factor) -> "GammaMultiplier":
        with working_precision(self.bits):
            f = mpfr(factor)
            return GammaMultiplier([f * g for g in self.star_row], [f * g for g in self.superdiag], self.bits)

    def entries(self) -> dict:
        """Sparse map over labels, ``STAR`` included."""
        out = {(STAR, i): g for i, g in enumerate(self.star_row) if g != 0}
        out.update({(i, i + 1): g for i, g in enumerate(self.superdiag) if g != 0})
        return out

    def to_json(self) -> dict:
        return {
            "star_row": [to_decimal(g) for g in self.star_row],
            "superdiag": [to_decimal(g) for g in self.superdiag],
        }


def gamma_from_phi(H, phi_values, bits: int | None = None, rtol=None) -> GammaMultiplier:
    """Star row sqrt(2H) * phi and superdiagonal of partial sums minus 2H.

    Rejects ``phi`` whose entries do not sum to sqrt(2H) within ``rtol``
    (default 2**(-bits/2)), since the last linear constraint would then fail.
    """
    bits = resolve_bits(bits)
    with working_precision(bits):
        H = mpfr(H)
        root = gmpy2.sqrt(2 * H)
        total = mpfr(0)
        for x in phi_values:
            total += x
        tol = psd_epsilon(bits) if rtol is None else mpfr(rtol)
        if abs(total - root) > tol * root:
            raise ValueError(f"phi sums to {total}, expected sqrt(2H) = {root}")
        star = [root * x for x in phi_values]
        superdiag = []
        acc = mpfr(0)
        for g in star[:-1]:
            acc += g
            superdiag.append(acc - 2 * H)
    return GammaMultiplier(star, superdiag, bits)


def support_sets(k: int, j: int) -> tuple[set, set]:
    """(S_minus, S_plus): rows above/below ``j`` with a nonzero in column ``j``.

    S_minus comes from the binary-suffix rule for ``1 <= j < 2**k`` and from
    the row windows elsewhere; S_plus always from the row windows.
    """
    t = 2 ** (k + 1) - 1
    if not 0 <= j <= t:
        raise ValueError(f"column {j} outside [0, {t}]")
    if k == 0:
        return ({0} if j == 1 else set()), set()
    if 1 <= j < 2**k:
        bits_j = [(j >> a) & 1 for a in range(j.bit_length())]
        s_minus = set()
        for r in range(len(bits_j)):
            if bits_j[r]:
                s_minus.add(sum(b << a for a, b in enumerate(bits_j) if a >= r) - 1)
    else:
        s_minus = {i for i in range(max(0, j - 2**k), j) if i < t and i + 2 ** nu(i + 1) >= j}
    z = (j + 1).bit_length() - 1
    if j == 2**z - 1 and z < k:
        s_plus = {2 ** (z + 1) - 1}
    else:
        s_plus = set()
        for i in range(j + 1, t):
            ell = nu(i + 1)
            width = 2 ** (ell - 1) if ell >= 1 else 0
            if i - j <= width:
                s_plus.add(i)
    return s_minus, s_plus


def superdiag_min(cert: Certificate) -> mpfr:
    with working_precision(cert.bits):
        return min(cert.get(i, i + 1) for i in range(cert.t))


def superdiag_bound(k: int, bits: int | None = None) -> mpfr:
    """((2 - sqrt 2) / (8 sqrt 2)) * (1 + sqrt 2)**(1 - 2k)."""
    bits = resolve_bits(bits, k)
    with working_precision(bits):
        r2 = gmpy2.sqrt(mpfr(2))
        return (2 - r2) / (8 * r2) * silver() ** (1 - 2 * k)


def edge_weight_report(cert: Certificate) -> dict:
    """Worst slack of the three entrywise lower bounds on the long-range rows."""
    k = cert.k
    with working_precision(cert.bits):
        s = silver()
        r2 = gmpy2.sqrt(mpfr(2))
        worst = {"anchor": None, "interior": None, "tail": None}

        def upd(key, val, bound):
            ratio = val / bound
            if worst[key] is None or ratio < worst[key]:
                worst[key] = ratio

        for ell in range(1, k + 1):
            row = 2**ell - 1
            upd("anchor", cert.get(row, 2 ** (ell - 1) - 1), 1 / r2)
            for j in range(2 ** (ell - 1), 2**ell - 1):
                upd("interior", cert.get(row, j), s**2 / r2 * s ** (-ell))
        for j in range(2**k, 2 ** (k + 1)):
            upd("tail", cert.get(2**k - 1, j), s ** (-k) / (2 * r2))
    return worst
