"""Compiled inner loops: exchange rates and one Dormand-Prince attempt.

Contractions use Neumaier-compensated summation in increasing index order.
No fastmath: results must be bitwise reproducible.
"""
import numpy as np
from numba import njit

SEPARABLE = 0
DENSE = 1

_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1 = 35 / 384 - 5179 / 57600
_E3 = 500 / 1113 - 7571 / 16695
_E4 = 125 / 192 - 393 / 640
_E5 = -2187 / 6784 + 92097 / 339200
_E6 = 11 / 84 - 187 / 2100
_E7 = -1 / 40


@njit(cache=True)
def compensated_dot(a, b, start, stop):
    s = 0.0
    comp = 0.0
    for k in range(start, stop):
        x = a[k] * b[k]
        t = s + x
        if abs(s) >= abs(x):
            comp += (s - t) + x
        else:
            comp += (x - t) + s
        s = t
    return s + comp


@njit(cache=True)
def rates_separable(A, B, c, D, U):
    n1 = c.shape[0]
    N = n1 - 1
    R = A.shape[0]
    for j in range(n1):
        D[j] = 0.0
        U[j] = 0.0
    for r in range(R):
        bsum = compensated_dot(B[r], c, 0, N)
        asum = compensated_dot(A[r], c, 1, n1)
        for j in range(1, n1):
            D[j] += A[r, j] * bsum
        for j in range(N):
            U[j] += B[r, j] * asum
    for j in range(n1):
        D[j] *= c[j]
        U[j] *= c[j]
    U[N] = 0.0


@njit(cache=True)
def rates_dense(M, c, D, U):
    n1 = c.shape[0]
    N = n1 - 1
    D[0] = 0.0
    for j in range(1, n1):
        D[j] = c[j] * compensated_dot(M[j], c, 0, N)
    for j in range(N):
        s = 0.0
        comp = 0.0
        for k in range(1, n1):
            x = M[k, j] * c[k]
            t = s + x
            if abs(s) >= abs(x):
                comp += (s - t) + x
            else:
                comp += (x - t) + s
            s = t
        U[j] = c[j] * (s + comp)
    U[N] = 0.0


@njit(cache=True)
def rhs_into(kind, A, B, M, c, out, D, U):
    if kind == SEPARABLE:
        rates_separable(A, B, c, D, U)
    else:
        rates_dense(M, c, D, U)
    N = c.shape[0] - 1
    # flux I_j = U_j - D_{j+1}; dc_j = I_{j-1} - I_j
    prev = 0.0
    for j in range(N):
        cur = U[j] - D[j + 1]
        out[j] = prev - cur
        prev = cur
    out[N] = prev


@njit(cache=True)
def dp_attempt(kind, A, B, M, c, h, ks, y, D, U, atol, rtol, floor, ctrl0):
    """Dormand-Prince 5(4) trial step from ``c`` with ``ks[0]`` = f(c).

    Writes the 5th-order solution into ``y`` and f(y) into ``ks[6]``.
    Returns ``(err_ratio, status)``; status 0 ok, 1 negativity, 2 non-finite.
    """
    n1 = c.shape[0]
    for i in range(n1):
        y[i] = c[i] + h * (_A21 * ks[0, i])
    rhs_into(kind, A, B, M, y, ks[1], D, U)
    for i in range(n1):
        y[i] = c[i] + h * (_A31 * ks[0, i] + _A32 * ks[1, i])
    rhs_into(kind, A, B, M, y, ks[2], D, U)
    for i in range(n1):
        y[i] = c[i] + h * (_A41 * ks[0, i] + _A42 * ks[1, i] + _A43 * ks[2, i])
    rhs_into(kind, A, B, M, y, ks[3], D, U)
    for i in range(n1):
        y[i] = c[i] + h * (_A51 * ks[0, i] + _A52 * ks[1, i] + _A53 * ks[2, i] + _A54 * ks[3, i])
    rhs_into(kind, A, B, M, y, ks[4], D, U)
    for i in range(n1):
        y[i] = c[i] + h * (_A61 * ks[0, i] + _A62 * ks[1, i] + _A63 * ks[2, i]
                           + _A64 * ks[3, i] + _A65 * ks[4, i])
    rhs_into(kind, A, B, M, y, ks[5], D, U)
    for i in range(n1):
        y[i] = c[i] + h * (_B1 * ks[0, i] + _B3 * ks[2, i] + _B4 * ks[3, i]
                           + _B5 * ks[4, i] + _B6 * ks[5, i])
    rhs_into(kind, A, B, M, y, ks[6], D, U)

    ratio = 0.0
    negative = False
    for i in range(n1):
        yi = y[i]
        if not (np.isfinite(yi) and np.isfinite(ks[6, i])):
            return np.inf, 2
        if yi < -floor or (yi < 0.0 and c[i] > 0.0):
            negative = True
        if i >= ctrl0:
            err = h * (_E1 * ks[0, i] + _E3 * ks[2, i] + _E4 * ks[3, i]
                       + _E5 * ks[4, i] + _E6 * ks[5, i] + _E7 * ks[6, i])
            if not np.isfinite(err):
                return np.inf, 2
            sc = atol + rtol * max(abs(c[i]), abs(yi))
            r = abs(err) / sc
            if r > ratio:
                ratio = r
    if negative:
        return ratio, 1
    return ratio, 0
