from fractions import Fraction

import pytest
from gmpy2 import mpfr

from longstep.numeric import (
    BITS_HIGH,
    BITS_LOW,
    MIN_BITS,
    PRECISION_ENV,
    as_real,
    current_bits,
    default_bits,
    from_decimal,
    psd_epsilon,
    rel_err,
    resolve_bits,
    silver,
    to_decimal,
    working_precision,
)


def test_policy_switches_at_k8():
    assert default_bits(8) == BITS_LOW
    assert default_bits(9) == BITS_HIGH
    assert default_bits() == BITS_LOW


def test_env_override_and_floor(monkeypatch):
    monkeypatch.setenv(PRECISION_ENV, "200")
    assert default_bits(20) == 200
    monkeypatch.setenv(PRECISION_ENV, str(MIN_BITS - 1))
    with pytest.raises(ValueError):
        default_bits(1)


def test_resolve_bits_rejects_low_precision():
    assert resolve_bits(96) == 96
    with pytest.raises(ValueError):
        resolve_bits(32)


def test_working_precision_is_scoped():
    before = current_bits()
    with working_precision(300):
        assert current_bits() == 300
    assert current_bits() == before


def test_decimal_round_trip(mp128):
    x = silver()
    assert from_decimal(to_decimal(x), 128) == x
    assert to_decimal(7) == "7"


def test_as_real_forms(mp128):
    assert as_real("3/2") == mpfr("1.5")
    assert as_real(Fraction(1, 4)) == mpfr("0.25")
    assert as_real(2) == 2


def test_psd_epsilon():
    assert psd_epsilon(128) == mpfr(2) ** -64


def test_rel_err_zero_reference(mp128):
    assert rel_err(mpfr("1e-3"), 0) == mpfr("1e-3")
    assert rel_err(2, 2) == 0
