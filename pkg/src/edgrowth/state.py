"""Truncated cluster-size distributions, initial conditions and moments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import IndexOutOfRange, InvalidParameter, NormalizationExceeded

__all__ = [
    "ClusterState",
    "InitialSpec",
    "MomentSeries",
    "init_distribution",
    "moment",
    "moments_of",
    "tail_weighted_sum",
    "TAIL_WEIGHTS",
]

TAIL_WEIGHTS = ("count", "linear-excess", "quadratic-excess")


@dataclass(frozen=True, eq=False)
class ClusterState:
    """Volume fractions ``c[0..N]`` at time ``t``; ``c[0]`` is empty volume."""

    c: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise InvalidParameter("state needs c[0..N] with N >= 1")
        if not np.all(np.isfinite(c)):
            raise InvalidParameter("state has non-finite entries")
        if np.any(c < 0):
            raise InvalidParameter("state has negative entries")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "t", float(self.t))

    @property
    def N(self):
        return self.c.size - 1

    def replace(self, c=None, t=None):
        return ClusterState(self.c if c is None else c, self.t if t is None else t)


@dataclass(frozen=True)
class InitialSpec:
    """Recipe for an initial distribution.

    ``type`` is one of ``monodisperse`` (``c_1 = rho``), ``geometric``
    (``c_j = A kappa**j``), ``algebraic`` (``c_j = A j**-q``) or
    ``explicit`` (``values`` are ``c_1, c_2, ...``).  For geometric and
    algebraic tails, giving ``rho`` instead of ``scale`` picks ``A`` so that
    the occupied fraction ``sum_{j>=1} c_j`` equals ``rho``.

    ``c0`` switches to unnormalized mode: ``c[0] = c0`` and ``m0`` is ignored.
    """

    type: str
    rho: Optional[float] = None
    kappa: Optional[float] = None
    q: Optional[float] = None
    scale: Optional[float] = None
    values: Optional[Sequence[float]] = None
    m0: float = 1.0
    c0: Optional[float] = None


def init_distribution(spec, N):
    """Build the ``t = 0`` state for truncation order ``N``.

    ``c[0]`` is the remainder ``m0 - sum_{j>=1} c_j`` unless ``spec.c0`` is set.
    """
    if N < 1:
        raise InvalidParameter("truncation order N must be >= 1")
    j = np.arange(1, N + 1, dtype=float)
    occupied = np.zeros(N)

    if spec.type == "monodisperse":
        rho = 1.0 if spec.rho is None else spec.rho
        if rho < 0:
            raise InvalidParameter("rho must be >= 0")
        occupied[0] = rho
    elif spec.type == "geometric":
        if spec.kappa is None or not 0 < spec.kappa < 1:
            raise InvalidParameter(f"geometric tail needs 0 < kappa < 1, got {spec.kappa}")
        occupied = np.power(spec.kappa, j)
        occupied = _scaled(occupied, spec)
    elif spec.type == "algebraic":
        if spec.q is None or not spec.q > 2:
            raise InvalidParameter(f"algebraic tail needs q > 2 (finite first moment), got {spec.q}")
        occupied = np.power(j, -spec.q)
        occupied = _scaled(occupied, spec)
    elif spec.type == "explicit":
        vals = np.asarray(spec.values if spec.values is not None else [], dtype=float)
        if vals.size > N:
            raise InvalidParameter(f"{vals.size} explicit values exceed truncation order {N}")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise InvalidParameter("explicit values must be finite and >= 0")
        occupied[: vals.size] = vals
    else:
        raise InvalidParameter(f"unknown initial condition type {spec.type!r}")

    total = math.fsum(occupied)
    if spec.c0 is not None:
        if spec.c0 < 0:
            raise InvalidParameter("c0 must be >= 0")
        c0 = float(spec.c0)
    else:
        if total > spec.m0 * (1 + 1e-15):
            raise NormalizationExceeded(f"occupied fraction {total!r} exceeds m0 = {spec.m0!r}")
        c0 = max(spec.m0 - total, 0.0)
    return ClusterState(np.concatenate(([c0], occupied)), 0.0)


def _scaled(shape, spec):
    if spec.scale is not None and spec.rho is not None:
        raise InvalidParameter("give either scale or rho, not both")
    if spec.rho is not None:
        return shape * (spec.rho / math.fsum(shape))
    return shape * (1.0 if spec.scale is None else spec.scale)


def _powers(N, p):
    j = np.arange(N + 1, dtype=float)
    if p == 0:
        return np.ones(N + 1)
    w = np.zeros(N + 1)
    w[1:] = np.exp(p * np.log(j[1:])) if p != int(p) else j[1:] ** int(p)
    return w


def moment(state, p):
    """``M_p = sum_{j=0}^N j**p c_j`` with ``0**0 = 1``."""
    if p < 0:
        raise InvalidParameter("moment exponent must be >= 0")
    c = state.c if isinstance(state, ClusterState) else np.asarray(state, dtype=float)
    return math.fsum(_powers(c.size - 1, p) * c)


def moments_of(snapshots, p):
    """Moment ``M_p`` for each row of a ``(T, N+1)`` snapshot array."""
    snapshots = np.atleast_2d(snapshots)
    w = _powers(snapshots.shape[1] - 1, p)
    return np.array([math.fsum(w * row) for row in snapshots])


def tail_weights(N, m, weight):
    if not 0 <= m <= N:
        raise IndexOutOfRange(f"tail index m = {m} outside [0, {N}]")
    j = np.arange(N + 1, dtype=float)
    w = np.zeros(N + 1)
    if weight == "count":
        w[m:] = 1.0
    elif weight == "linear-excess":
        w[m:] = j[m:] - m
    elif weight == "quadratic-excess":
        w[m:] = j[m:] ** 2 - float(m) ** 2
    else:
        raise InvalidParameter(f"unknown tail weight {weight!r}; expected one of {TAIL_WEIGHTS}")
    return w


def tail_weighted_sum(state, m, weight="count"):
    """Truncated tail sum over ``j = m..N`` with the given weight.

    ``count``: ``sum c_j``; ``linear-excess``: ``sum (j-m) c_j``;
    ``quadratic-excess``: ``sum (j**2 - m**2) c_j``.
    """
    c = state.c if isinstance(state, ClusterState) else np.asarray(state, dtype=float)
    return math.fsum(tail_weights(c.size - 1, m, weight) * c)


@dataclass
class MomentSeries:
    """Moments sampled along a trajectory plus the conservation drift ledger."""

    times: np.ndarray
    values: dict = field(default_factory=dict)
    m0_drift: float = 0.0
    m1_drift: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidParameter("moment sample times must be strictly increasing")

    @classmethod
    def from_snapshots(cls, times, snapshots, exponents=(0, 1, 2)):
        exps = sorted(set(exponents) | {0, 1})
        values = {p: moments_of(snapshots, p) for p in exps}
        m0, m1 = values[0], values[1]
        return cls(times, values,
                   m0_drift=float(np.max(np.abs(m0 - m0[0]))) if m0.size else 0.0,
                   m1_drift=float(np.max(np.abs(m1 - m1[0]))) if m1.size else 0.0)
