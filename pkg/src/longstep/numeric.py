"""Extended-precision scalar helpers shared by every module.

All arithmetic on certificate quantities runs on :mod:`gmpy2` ``mpfr``
values.  gmpy2 rounds every operation to the precision of the *current*
context, so any code combining these values must run inside
:func:`working_precision`.
"""

from __future__ import annotations

import contextlib
import os
from fractions import Fraction
from typing import Iterator

import gmpy2
from gmpy2 import mpfr

PRECISION_ENV = "LONGSTEP_PRECISION"

# Mantissa widths for the default precision policy.
BITS_LOW = 128
BITS_HIGH = 256
BITS_SWITCH_K = 8
MIN_BITS = 64


def default_bits(k: int | None = None) -> int:
    """Precision policy: env override, else 128 bits up to k=8 and 256 beyond."""
    env = os.environ.get(PRECISION_ENV)
    if env:
        bits = int(env)
        if bits < MIN_BITS:
            raise ValueError(f"{PRECISION_ENV}={bits} is below the {MIN_BITS}-bit floor")
        return bits
    if k is not None and k > BITS_SWITCH_K:
        return BITS_HIGH
    return BITS_LOW


def resolve_bits(bits: int | None, k: int | None = None) -> int:
    if bits is None:
        return default_bits(k)
    if bits < MIN_BITS:
        raise ValueError(f"precision must be at least {MIN_BITS} bits, got {bits}")
    return int(bits)


@contextlib.contextmanager
def working_precision(bits: int) -> Iterator[None]:
    with gmpy2.context(gmpy2.get_context(), precision=int(bits)):
        yield


def current_bits() -> int:
    return gmpy2.get_context().precision


def psd_epsilon(bits: int) -> mpfr:
    """Relative PSD tolerance 2**(-bits/2)."""
    with working_precision(bits):
        return gmpy2.exp2(mpfr(-(bits // 2)))


def silver() -> mpfr:
    """The silver ratio 1 + sqrt(2) at the current precision."""
    return 1 + gmpy2.sqrt(mpfr(2))


def to_decimal(x) -> str:
    """Shortest decimal string that round-trips at the value's own precision."""
    if isinstance(x, int):
        return str(x)
    if not isinstance(x, type(mpfr(0))):
        x = mpfr(x)
    # str() rounds to the context precision, not the value's
    with working_precision(x.precision):
        return str(x)


def from_decimal(s: str, bits: int) -> mpfr:
    with working_precision(bits):
        return mpfr(s)


def as_real(x) -> mpfr:
    """Coerce int/float/str/Fraction/mpfr to an mpfr at the current precision."""
    if isinstance(x, str):
        if "/" in x:
            num, den = x.split("/", 1)
            return mpfr(num.strip()) / mpfr(den.strip())
        return mpfr(x)
    if isinstance(x, Fraction):
        return mpfr(x.numerator) / mpfr(x.denominator)
    return mpfr(x)


def rel_err(a, b) -> mpfr:
    """|a - b| / max(|b|, tiny); both arguments at the current precision."""
    a, b = mpfr(a), mpfr(b)
    den = abs(b)
    if den == 0:
        return abs(a)
    return abs(a - b) / den
