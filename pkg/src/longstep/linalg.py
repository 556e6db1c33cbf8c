"""Dense symmetric eigensolver usable at extended precision.

Householder reduction to tridiagonal form followed by the implicit QL
iteration with Wilkinson-style shifts.  Works on numpy object arrays of
``gmpy2.mpfr`` (call inside :func:`longstep.numeric.working_precision`) and
on ordinary float arrays.
"""

from __future__ import annotations

import math

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .numeric import current_bits


def _is_mp(a: np.ndarray) -> bool:
    return a.dtype == object


def _sqrt(x):
    return gmpy2.sqrt(x) if isinstance(x, type(mpfr(0))) else math.sqrt(x)


def _hypot(a, b):
    return gmpy2.hypot(a, b) if isinstance(a, type(mpfr(0))) or isinstance(b, type(mpfr(0))) else math.hypot(a, b)


def to_mp_array(rows) -> np.ndarray:
    """Copy a nested sequence into an object array of mpfr at the current precision."""
    a = np.array(rows, dtype=object)
    return np.vectorize(mpfr, otypes=[object])(a) if a.size else a


def zeros_mp(n: int, m: int | None = None) -> np.ndarray:
    shape = (n,) if m is None else (n, m)
    out = np.empty(shape, dtype=object)
    out.fill(mpfr(0))
    return out


def identity_mp(n: int) -> np.ndarray:
    out = zeros_mp(n, n)
    for i in range(n):
        out[i, i] = mpfr(1)
    return out


def tridiagonalize(a: np.ndarray, want_q: bool = False):
    """Return (d, e, Q) with Q^T a Q tridiagonal, diagonal d and off-diagonal e.

    ``Q`` is None unless requested.  The input is not modified.
    """
    n = a.shape[0]
    A = a.copy()
    mp = _is_mp(A)
    zero = mpfr(0) if mp else 0.0
    Q = (identity_mp(n) if mp else np.eye(n)) if want_q else None
    e = [zero] * max(n - 1, 0)
    for k in range(n - 2):
        x = A[k + 1:, k].copy()
        scale = zero
        for xi in x:
            scale += abs(xi)
        if scale == 0:
            e[k] = zero
            continue
        x = x / scale
        norm = _sqrt(np.dot(x, x))
        alpha = -norm if x[0] > 0 else norm
        v = x
        v[0] = v[0] - alpha
        vv = np.dot(v, v)
        e[k] = alpha * scale
        if vv == 0:
            continue
        B = A[k + 1:, k + 1:]
        p = B.dot(v) * (2 / vv)
        K = np.dot(v, p) / vv
        w = p - K * v
        B -= np.multiply.outer(v, w) + np.multiply.outer(w, v)
        A[k + 1:, k] = zero
        A[k, k + 1:] = zero
        if Q is not None:
            # Q <- Q (I - 2 v v^T / v^T v)
            Qs = Q[:, k + 1:]
            Qs -= np.multiply.outer(Qs.dot(v) * (2 / vv), v)
    if n >= 2:
        e[n - 2] = A[n - 1, n - 2]
    d = [A[i, i] for i in range(n)]
    return d, e, Q


def tridiagonal_eig(d, e, Z: np.ndarray | None = None, eps=None, max_sweeps: int = 60):
    """Eigenvalues (ascending) of the symmetric tridiagonal (d, e); rotates Z's columns.

    ``e[i]`` couples entries i and i+1.  Returns (values, Z) with Z permuted to
    match the sorted order.
    """
    n = len(d)
    d = list(d)
    if n == 0:
        return d, Z
    mp = isinstance(d[0], type(mpfr(0)))
    zero = mpfr(0) if mp else 0.0
    one = mpfr(1) if mp else 1.0
    E = list(e) + [zero]
    if eps is None:
        eps = gmpy2.exp2(mpfr(-current_bits())) if mp else np.finfo(float).eps
    f = zero
    tst1 = zero
    for l in range(n):
        tst1 = max(tst1, abs(d[l]) + abs(E[l]))
        m = l
        while m < n - 1 and abs(E[m]) > eps * tst1:
            m += 1
        if m > l:
            sweeps = 0
            while True:
                sweeps += 1
                if sweeps > max_sweeps:
                    raise ArithmeticError(f"QL iteration failed to converge at index {l}")
                g = d[l]
                p = (d[l + 1] - g) / (2 * E[l])
                r = _hypot(p, one)
                if p < 0:
                    r = -r
                d[l] = E[l] / (p + r)
                d[l + 1] = E[l] * (p + r)
                dl1 = d[l + 1]
                h = g - d[l]
                for i in range(l + 2, n):
                    d[i] -= h
                f += h
                p = d[m]
                c = c2 = c3 = one
                el1 = E[l + 1]
                s = s2 = zero
                for i in range(m - 1, l - 1, -1):
                    c3 = c2
                    c2 = c
                    s2 = s
                    g = c * E[i]
                    h = c * p
                    r = _hypot(p, E[i])
                    E[i + 1] = s * r
                    s = E[i] / r
                    c = p / r
                    p = c * d[i] - s * g
                    d[i + 1] = h + s * (c * g + s * d[i])
                    if Z is not None:
                        zi1 = Z[:, i + 1].copy()
                        zi = Z[:, i]
                        Z[:, i + 1] = s * zi + c * zi1
                        Z[:, i] = c * zi - s * zi1
                p = -s * s2 * c3 * el1 * E[l] / dl1
                E[l] = s * p
                d[l] = c * p
                if not abs(E[l]) > eps * tst1:
                    break
        d[l] = d[l] + f
        E[l] = zero
    order = sorted(range(n), key=lambda i: d[i])
    vals = [d[i] for i in order]
    if Z is not None:
        Z = Z[:, order]
    return vals, Z


def eigh(a: np.ndarray, vectors: bool = False):
    """Eigen-decomposition of a symmetric matrix; values ascending.

    Returns ``values`` or ``(values, Q)`` with ``a = Q diag(values) Q^T``.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    d, e, Q = tridiagonalize(a, want_q=vectors)
    vals, Q = tridiagonal_eig(d, e, Q)
    return (vals, Q) if vectors else vals


def eigvalsh(a: np.ndarray) -> list:
    return eigh(a, vectors=False)


def min_eigenvalue(a: np.ndarray):
    return eigvalsh(a)[0]


def inf_norm(a: np.ndarray):
    """Max absolute row sum."""
    best = mpfr(0) if _is_mp(np.asarray(a)) else 0.0
    for row in a:
        s = sum((abs(x) for x in row), best * 0)
        if s > best:
            best = s
    return best


def max_abs(a: np.ndarray):
    best = mpfr(0) if _is_mp(np.asarray(a)) else 0.0
    for x in np.asarray(a).ravel():
        if abs(x) > best:
            best = abs(x)
    return best


def frobenius(a: np.ndarray):
    flat = np.asarray(a).ravel()
    return _sqrt(np.dot(flat, flat)) if flat.size else (mpfr(0) if _is_mp(a) else 0.0)


def reconstruction_error(a: np.ndarray, vals, Q: np.ndarray):
    """max |a - Q diag(vals) Q^T| relative to max |a|."""
    D = np.array(vals, dtype=a.dtype)
    R = (Q * D).dot(Q.T)
    scale = max_abs(a)
    err = max_abs(a - R)
    return err / scale if scale else err
