"""Right-hand side of the truncated exchange-driven growth system.

Every exchange event moves one unit from a donor of size ``j >= 1`` to a
receiver of size ``k <= N-1`` (a receiver of size ``N`` would leave the
truncated range).  Writing

    D_j = c_j * sum_{k=0}^{N-1} K(j, k) c_k     (export rate of size j)
    U_j = c_j * sum_{k=1}^{N}   K(k, j) c_k     (import rate, j <= N-1)

the mass-flow flux across the ``j | j+1`` boundary is ``I_j = U_j - D_{j+1}``
and ``dc_j/dt = I_{j-1} - I_j`` with ``I_{-1} = I_N = 0``.  Both evaluation
paths below produce ``D`` and ``U`` and share that assembly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _numerics as _nx
from .errors import InvalidKernel
from .state import ClusterState

__all__ = [
    "Derivative",
    "FluxProfile",
    "exchange_rates",
    "rhs_direct",
    "rhs_separable",
    "rhs",
    "flux",
    "moment_rate",
    "make_rhs",
    "Evaluator",
]


@dataclass(frozen=True, eq=False)
class Derivative:
    d: np.ndarray

    @property
    def N(self):
        return self.d.size - 1


@dataclass(frozen=True, eq=False)
class FluxProfile:
    """``I[j]`` for ``j = 0..N-1``."""

    I: np.ndarray

    def divergence(self):
        return _divergence(self.I)


def _as_array(state):
    return state.c if isinstance(state, ClusterState) else np.asarray(state, dtype=float)


_EMPTY2 = np.zeros((0, 0))


class Evaluator:
    """Kernel arrays plus scratch space for one truncation order."""

    def __init__(self, kernel, N, method="auto"):
        if method == "auto":
            method = "separable" if kernel.is_separable else "direct"
        if method == "separable":
            if not kernel.is_separable:
                raise InvalidKernel("separable path needs a separable-sum kernel")
            self.kind = _nx.SEPARABLE
            self.A, self.B = kernel.factors(N)
            self.M = _EMPTY2
        elif method == "direct":
            self.kind = _nx.DENSE
            self.A = self.B = _EMPTY2
            self.M = kernel.matrix(N)
        else:
            raise ValueError(f"unknown rhs method {method!r}")
        self.method = method
        self.N = N
        self.D = np.zeros(N + 1)
        self.U = np.zeros(N + 1)

    def rates(self, c):
        D = np.zeros(self.N + 1)
        U = np.zeros(self.N + 1)
        if self.kind == _nx.SEPARABLE:
            _nx.rates_separable(self.A, self.B, c, D, U)
        else:
            _nx.rates_dense(self.M, c, D, U)
        return D, U

    def __call__(self, c, out=None):
        out = np.empty(self.N + 1) if out is None else out
        _nx.rhs_into(self.kind, self.A, self.B, self.M, c, out, self.D, self.U)
        return out


def exchange_rates(kernel, state, method="auto"):
    """Return ``(D, U)``: per-size export and import rates (length ``N+1``).

    ``U[N]`` is zero by construction.
    """
    c = np.ascontiguousarray(_as_array(state), dtype=float)
    D, U = Evaluator(kernel, c.size - 1, method).rates(c)
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(U))):
        raise InvalidKernel(f"{kernel.name}: non-finite exchange rate")
    return D, U


def _flux_from_rates(D, U):
    return U[:-1] - D[1:]


def _divergence(I):
    N = I.size
    d = np.empty(N + 1)
    d[0] = -I[0]
    d[1:N] = I[:-1] - I[1:]
    d[N] = I[N - 1]
    return d


def rhs_direct(kernel, state):
    """``O(N^2)`` evaluation from the dense kernel matrix."""
    D, U = exchange_rates(kernel, state, "direct")
    return Derivative(_divergence(_flux_from_rates(D, U)))


def rhs_separable(kernel, state):
    """``O(N R)`` evaluation for separable-sum kernels."""
    if not kernel.is_separable:
        raise InvalidKernel("rhs_separable needs a separable-sum kernel")
    D, U = exchange_rates(kernel, state, "separable")
    return Derivative(_divergence(_flux_from_rates(D, U)))


def rhs(kernel, state):
    D, U = exchange_rates(kernel, state)
    return Derivative(_divergence(_flux_from_rates(D, U)))


def flux(kernel, state, method="auto"):
    D, U = exchange_rates(kernel, state, method)
    return FluxProfile(_flux_from_rates(D, U))


def moment_rate(kernel, state, g, method="auto"):
    """Rate of change of ``sum_j g_j c_j`` from the exchange-rate form.

    Computes ``sum_{j>=1} (g_{j-1} - g_j) D_j + sum_{j<=N-1} (g_{j+1} - g_j) U_j``,
    which never forms ``dc/dt``.
    """
    D, U = exchange_rates(kernel, state, method)
    g = np.asarray(g, dtype=float)
    if g.shape != D.shape:
        raise ValueError(f"weight sequence needs {D.size} entries, got {g.size}")
    down = (g[:-1] - g[1:]) * D[1:]
    up = (g[1:] - g[:-1]) * U[:-1]
    return math.fsum(np.concatenate((down, up)))


def make_rhs(kernel, N, method="auto"):
    """Return a fast ``f(c) -> dc/dt`` callable on raw arrays."""
    return Evaluator(kernel, N, method)
