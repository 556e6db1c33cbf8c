import json

import gmpy2
import pytest
from gmpy2 import mpfr

from conftest import radical
from longstep.certificate import (
    CASE_STAR,
    CASE_ZERO,
    STAR,
    Certificate,
    gamma_from_phi,
    index_meta,
    lambda_cert,
    lambda_entrywise,
    lambda_rows,
    phi,
    rev,
    row_case,
    support_sets,
    superdiag_bound,
    superdiag_min,
    w_vec,
)
from longstep.numeric import rel_err, working_precision
from longstep.sequence_core import building_block, mu

LAMBDA1 = {(0, 1): "2", (1, 0): "1", (1, 2): "1/2", (1, 3): "1/2", (2, 3): "1/2"}

LAMBDA2 = {
    (0, 1): "2",
    (1, 0): "1",
    (1, 2): "sqrt(2)",
    (1, 3): "1",
    (2, 3): "2*(sqrt(2)+1)",
    (3, 1): "sqrt(2)",
    (3, 2): "sqrt(2)+2",
    (3, 4): "3/sqrt(2)-2",
    (3, 5): "1-1/sqrt(2)",
    (3, 6): "1-1/sqrt(2)",
    (3, 7): "1-1/sqrt(2)",
    (4, 5): "1/sqrt(2)-1/2",
    (5, 4): "3/2-sqrt(2)",
    (5, 6): "1/sqrt(2)-1/2",
    (5, 7): "1/sqrt(2)-1/2",
    (6, 7): "1/2",
}


@pytest.mark.parametrize("k, table", [(1, LAMBDA1), (2, LAMBDA2)])
@pytest.mark.parametrize("build", [lambda_rows, lambda_entrywise])
def test_printed_certificates(k, table, build):
    cert = build(k)
    assert set(cert.entries) == set(table)
    with working_precision(cert.bits):
        for key, expr in table.items():
            assert rel_err(cert.entries[key], radical(expr)) < mpfr("1e-30"), key


@pytest.mark.parametrize("k", range(1, 7))
def test_row_and_entrywise_routes_agree(k):
    a, b = lambda_rows(k), lambda_entrywise(k)
    assert set(a.entries) == set(b.entries)
    with working_precision(a.bits):
        worst = max(rel_err(a.entries[key], b.entries[key]) for key in a.entries)
    assert worst < mpfr("1e-30")


@pytest.mark.parametrize("k", range(0, 7))
def test_entries_positive_and_off_diagonal(k):
    cert = lambda_cert(k)
    assert all(v > 0 for v in cert.entries.values())
    assert all(i != j and STAR not in (i, j) for i, j in cert.entries)
    assert all(0 <= i < cert.t and 0 <= j <= cert.t for i, j in cert.entries)


@pytest.mark.parametrize("k", range(1, 7))
def test_support_sets_match_nonzeros(k):
    cert = lambda_cert(k)
    for j in range(cert.t + 1):
        lo, hi = support_sets(k, j)
        col = {i for (i, jj) in cert.entries if jj == j}
        assert lo == {i for i in col if i < j}, j
        assert hi == {i for i in col if i > j}, j


def test_support_sets_range_check():
    with pytest.raises(ValueError):
        support_sets(2, 8)


def test_row_cases_cover_pattern():
    k = 3
    cases = [row_case(i, k) for i in range(2 ** (k + 1) - 1)]
    assert cases[2**k - 1] == 4
    assert cases[0] == 3 and cases[1] == 3 and cases[3] == 3
    assert cases[-1] == 5 and cases[-2] == 5
    assert set(cases) == {1, 2, 3, 4, 5}
    with pytest.raises(ValueError):
        row_case(15, 3)


def test_cases_recorded():
    cert = lambda_cert(2)
    assert cert.cases[STAR] == CASE_STAR and cert.cases[cert.t] == CASE_ZERO


def test_index_helpers():
    assert rev(0, 2) == 6 and rev(6, 2) == 0
    meta = index_meta(5)  # 6 = 0b110
    assert (meta.nu, meta.p, meta.z) == (1, 2, 2)


@pytest.mark.parametrize("k", range(0, 8))
def test_w_sums_to_sqrt_mu_minus_one(k):
    bits = 128
    with working_precision(bits):
        total = sum(w_vec(k, bits), mpfr(0))
        assert rel_err(total, gmpy2.sqrt(mu(k, bits) - 1)) < mpfr("1e-30")


@pytest.mark.parametrize("k", range(0, 8))
def test_phi_sums_to_sqrt_2H(k):
    pat = building_block(k)
    f = phi(k)
    assert len(f) == pat.t + 1
    with working_precision(pat.bits):
        assert rel_err(sum(f, mpfr(0)), gmpy2.sqrt(2 * pat.sum_H)) < mpfr("1e-30")


def test_gamma_construction():
    pat = building_block(2)
    g = gamma_from_phi(pat.sum_H, phi(2))
    assert g.t == pat.t
    with working_precision(pat.bits):
        # superdiagonal ends at -(sqrt(2H) * phi_t)
        assert rel_err(g.superdiag[-1], -gmpy2.sqrt(2 * pat.sum_H) * phi(2)[-1]) < mpfr("1e-30")
    assert all((STAR, i) in g.entries() for i in range(2**2 - 1, pat.t + 1))
    half = g.scaled("0.5")
    with working_precision(pat.bits):
        assert half.star_row[-1] * 2 == g.star_row[-1]


def test_gamma_rejects_wrong_phi():
    pat = building_block(1)
    with pytest.raises(ValueError):
        gamma_from_phi(pat.sum_H, [1, 1, 1, 2])


@pytest.mark.parametrize("k", range(1, 7))
def test_superdiagonal_bound(k):
    cert = lambda_cert(k)
    assert superdiag_min(cert) >= superdiag_bound(k)


@pytest.mark.parametrize("k", [0, 2])
def test_json_round_trip(k):
    cert = lambda_cert(k)
    text = json.dumps(cert.to_json())
    back = Certificate.from_json(json.loads(text))
    assert back.entries == cert.entries
    assert back.cases == cert.cases
    assert (back.k, back.t, back.bits) == (cert.k, cert.t, cert.bits)
