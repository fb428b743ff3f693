"""Independent reference evaluators used only by the tests.

Written as plain loops straight from the truncated equations so they share
no code with the package's vectorized and compiled paths.
"""
import math


def rhs_reference(K, c):
    """dc/dt by direct summation of the truncated equations, row by row."""
    N = len(c) - 1

    def export(j):
        return c[j] * math.fsum(K(j, k) * c[k] for k in range(0, N))

    def imp(j):
        return c[j] * math.fsum(K(k, j) * c[k] for k in range(1, N + 1))

    d = [0.0] * (N + 1)
    d[0] = math.fsum([export(1), -imp(0)])
    for j in range(1, N):
        d[j] = math.fsum([export(j + 1), -export(j), -imp(j), imp(j - 1)])
    d[N] = math.fsum([imp(N - 1), -export(N)])
    return d


def second_identity(K, c, g):
    """Regrouped moment-rate expression valid for nearly symmetric kernels.

    The interior weight is the second difference ``g_{j+1} - 2 g_j + g_{j-1}``
    and the corner term carries ``c_N``.  Both follow from splitting the index
    set of the first identity into interior, ``k = 0`` and ``j = N`` blocks.
    """
    N = len(c) - 1
    terms = []
    for j in range(1, N):
        inner = math.fsum(K(j, k) * c[k] for k in range(1, N))
        terms.append((g[j + 1] - 2 * g[j] + g[j - 1]) * c[j] * inner)
    for j in range(1, N):
        terms.append(((g[j - 1] - g[j]) + (g[1] - g[0])) * K(j, 0) * c[j] * c[0])
    for j in range(1, N):
        terms.append(((g[j + 1] - g[j]) + (g[N - 1] - g[N])) * c[j] * K(N, j) * c[N])
    terms.append(((g[N - 1] - g[N]) + (g[1] - g[0])) * c[N] * K(N, 0) * c[0])
    return math.fsum(terms)
