"""Microscopic exchange process on a complete graph of ``L`` sites.

Each ordered pair of distinct sites ``(x, y)`` with masses ``(j, k)``,
``j >= 1``, fires at rate ``K(j, k) / L`` and moves one unit from ``x`` to
``y``.  With this scaling the expected flow of occupancy fractions matches
the mean-field terms ``K(j, k) c_j c_k``.

By symmetry of the complete graph the law of the occupancy histogram
``n_j = #{x : mass_x = j}`` is itself Markov, so the simulation only tracks
``n``.  Donor and receiver sizes are drawn from

    P(donor j)            ~ n_j (sum_k K(j, k) n_k - K(j, j))
    P(receiver k | j)     ~ K(j, k) (n_k - [k == j])

at ``O(#occupied sizes * R)`` per event.  Uniform variates come from a
PCG64 stream seeded with ``seed + replica``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import GridMismatch, InvalidParameter, RateOverflow

__all__ = [
    "ParticleConfig",
    "EmpiricalTrajectory",
    "simulate_exchange",
    "simulate_ensemble",
    "ensemble_mean",
    "compare_to_meanfield",
    "MeanFieldDistance",
]

_BATCH = 3 * 65536
_RATE_CAP = 1e300

# status codes from the compiled loop
_DONE, _NEED_UNIFORMS, _NEED_TABLE, _OVERFLOW = 0, 1, 2, 3


@dataclass(frozen=True)
class ParticleConfig:
    """Site masses.  Sites are exchangeable, so the order carries no meaning."""

    masses: np.ndarray
    t: float = 0.0
    seed: Optional[int] = None

    @property
    def L(self):
        return self.masses.size

    @classmethod
    def from_histogram(cls, n, t=0.0, seed=None):
        return cls(np.repeat(np.arange(n.size), n), t, seed)


@dataclass
class EmpiricalTrajectory:
    """Occupancy fractions ``fractions[i, j] = n_j / L`` at ``times[i]``."""

    times: np.ndarray
    fractions: np.ndarray
    L: int
    seed: Optional[int] = None
    n_events: int = 0
    replicas: int = 1

    @property
    def max_mass(self):
        occupied = np.nonzero(self.fractions.any(axis=0))[0]
        return int(occupied[-1]) if occupied.size else 0


@njit(cache=True)
def _kjk(kind, A, B, M, j, k):
    if kind == 0:
        s = 0.0
        for r in range(A.shape[0]):
            s += A[r, j] * B[r, k]
        return s
    return M[j, k]


@njit(cache=True)
def _run(kind, A, B, M, n, L, state, u, upos, t_grid, snaps, isnap, cap):
    """Advance until the grid is exhausted or more input is needed.

    ``state = [t, jmax, n_events]``.  Returns ``(status, upos, isnap)``.
    """
    t = state[0]
    jmax = int(state[1])
    R = A.shape[0]
    S = np.zeros(R)
    w = np.zeros(jmax + 2 if jmax + 2 > cap + 1 else cap + 1)
    n_grid = t_grid.shape[0]
    while isnap < n_grid:
        if jmax + 1 > cap:
            state[0] = t
            state[1] = jmax
            return _NEED_TABLE, upos, isnap
        if upos + 3 > u.shape[0]:
            state[0] = t
            state[1] = jmax
            return _NEED_UNIFORMS, upos, isnap
        # donor weights
        if kind == 0:
            for r in range(R):
                s = 0.0
                for k in range(jmax + 1):
                    s += B[r, k] * n[k]
                S[r] = s
        total = 0.0
        for j in range(jmax + 1):
            if j == 0 or n[j] == 0:
                w[j] = 0.0
                continue
            if kind == 0:
                row = 0.0
                for r in range(R):
                    row += A[r, j] * S[r]
            else:
                row = 0.0
                for k in range(jmax + 1):
                    row += M[j, k] * n[k]
            v = n[j] * (row - _kjk(kind, A, B, M, j, j))
            if v < 0.0:
                v = 0.0
            w[j] = v
            total += v
        rate = total / L
        if not (rate < 1e300):
            state[0] = t
            state[1] = jmax
            return _OVERFLOW, upos, isnap
        if rate > 0.0:
            t_next = t - math.log(u[upos]) / rate
        else:
            t_next = math.inf
        # record every grid time passed before the next event
        while isnap < n_grid and t_grid[isnap] < t_next:
            for j in range(snaps.shape[1]):
                snaps[isnap, j] = n[j] / L if j < n.shape[0] else 0.0
            isnap += 1
        if isnap >= n_grid:
            break
        t = t_next
        # donor size
        target = u[upos + 1] * total
        acc = 0.0
        jd = jmax
        for j in range(1, jmax + 1):
            acc += w[j]
            if acc > target and w[j] > 0.0:
                jd = j
                break
        while w[jd] == 0.0:
            jd -= 1
        # receiver size given donor
        rtot = 0.0
        for k in range(jmax + 1):
            cnt = n[k] - (1 if k == jd else 0)
            w[k] = _kjk(kind, A, B, M, jd, k) * cnt if cnt > 0 else 0.0
            rtot += w[k]
        target = u[upos + 2] * rtot
        acc = 0.0
        kr = jmax
        for k in range(jmax + 1):
            acc += w[k]
            if acc > target and w[k] > 0.0:
                kr = k
                break
        while w[kr] == 0.0:
            kr -= 1
        upos += 3
        n[jd] -= 1
        n[jd - 1] += 1
        n[kr] -= 1
        n[kr + 1] += 1
        if kr + 1 > jmax:
            jmax = kr + 1
        while jmax > 0 and n[jmax] == 0:
            jmax -= 1
        state[2] += 1
    state[0] = t
    state[1] = jmax
    return _DONE, upos, isnap


def _tables(kernel, cap):
    if kernel.is_separable:
        A, B = kernel.factors(cap)
        return 0, np.ascontiguousarray(A), np.ascontiguousarray(B), np.zeros((0, 0))
    empty = np.zeros((0, cap + 1))
    return 1, empty, empty, np.ascontiguousarray(kernel.matrix(cap))


def _time_grid(t_end, snapshot_every):
    if t_end < 0:
        raise InvalidParameter("t_end must be >= 0")
    if t_end == 0:
        return np.array([0.0])
    if not snapshot_every > 0:
        raise InvalidParameter("snapshot_every must be > 0")
    k = int(math.floor(t_end / snapshot_every + 1e-9))
    grid = np.arange(k + 1) * snapshot_every
    if t_end - grid[-1] > 1e-9 * snapshot_every:
        grid = np.append(grid, t_end)
    else:
        grid[-1] = t_end
    return grid


def simulate_exchange(kernel, masses, t_end, snapshot_every, seed=0, replica=0):
    """Exact-in-law simulation of one replica.

    Parameters
    ----------
    masses : array of int
        Initial site masses; ``L = len(masses) >= 2``.
    seed, replica : int
        The uniform stream is PCG64 seeded with ``seed + replica``.

    Returns
    -------
    EmpiricalTrajectory
        Fractions on the grid ``0, snapshot_every, ..., t_end`` for sizes
        ``0..total mass``.
    """
    masses = np.asarray(masses)
    if masses.ndim != 1 or masses.size < 2:
        raise InvalidParameter("need at least L = 2 sites")
    if np.any(masses < 0) or not np.all(masses == np.floor(masses)):
        raise InvalidParameter("site masses must be nonnegative integers")
    masses = masses.astype(np.int64)
    L = masses.size
    total_mass = int(masses.sum())
    n = np.bincount(masses, minlength=total_mass + 2).astype(np.int64)
    grid = _time_grid(float(t_end), snapshot_every)
    snaps = np.zeros((grid.size, total_mass + 1))
    rng = np.random.Generator(np.random.PCG64(seed + replica))

    jmax = int(masses.max())
    cap = min(max(2 * jmax, 16), total_mass + 1)
    kind, A, B, M = _tables(kernel, cap)
    state = np.array([0.0, float(jmax), 0.0])
    u = 1.0 - rng.random(_BATCH)  # in (0, 1]
    upos = 0
    isnap = 0
    while True:
        status, upos, isnap = _run(kind, A, B, M, n, float(L), state, u, upos, grid, snaps, isnap, cap)
        if status == _DONE:
            break
        if status == _NEED_UNIFORMS:
            u = np.concatenate((u[upos:], 1.0 - rng.random(_BATCH)))
            upos = 0
        elif status == _NEED_TABLE:
            cap = min(2 * cap, total_mass + 1)
            kind, A, B, M = _tables(kernel, cap)
        else:
            raise RateOverflow(f"total event rate overflowed at t = {state[0]:g}")
    return EmpiricalTrajectory(grid, snaps, L, seed + replica, int(state[2]))


def _replica(args):
    return simulate_exchange(*args)


def simulate_ensemble(kernel, masses, t_end, snapshot_every, seed=0, replicas=1, jobs=1):
    """Independent replicas ``seed + r`` for ``r = 0..replicas-1``, in replica order."""
    tasks = [(kernel, masses, t_end, snapshot_every, seed, r) for r in range(replicas)]
    if jobs > 1 and replicas > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_replica, tasks))
    return [_replica(t) for t in tasks]


def ensemble_mean(trajectories):
    """Average fractions over replicas (fixed replica order, widths zero-padded)."""
    if not trajectories:
        raise InvalidParameter("empty ensemble")
    times = trajectories[0].times
    for tr in trajectories[1:]:
        if tr.times.shape != times.shape or np.any(tr.times != times):
            raise GridMismatch("replicas have different snapshot grids")
    width = max(tr.fractions.shape[1] for tr in trajectories)
    acc = np.zeros((times.size, width))
    for tr in trajectories:
        acc[:, : tr.fractions.shape[1]] += tr.fractions
    return EmpiricalTrajectory(times.copy(), acc / len(trajectories), trajectories[0].L,
                               trajectories[0].seed, sum(tr.n_events for tr in trajectories),
                               replicas=len(trajectories))


@dataclass
class MeanFieldDistance:
    times: np.ndarray
    tv: np.ndarray
    sup: np.ndarray


def compare_to_meanfield(mc, ode, rtol=1e-9):
    """Total-variation and sup-norm distance per snapshot.

    ``mc`` is an (ensemble-mean) empirical trajectory, ``ode`` a Trajectory
    on the same time grid with ``N`` at least the largest observed mass.
    """
    t_mc = np.asarray(mc.times, dtype=float)
    t_ode = np.asarray(ode.times, dtype=float)
    if t_mc.shape != t_ode.shape or not np.allclose(t_mc, t_ode, rtol=rtol, atol=rtol):
        raise GridMismatch(f"snapshot grids differ ({t_mc.size} vs {t_ode.size} points)")
    N = ode.snapshots.shape[1] - 1
    if mc.max_mass > N:
        raise GridMismatch(f"observed mass {mc.max_mass} exceeds ODE truncation N = {N}")
    emp = np.zeros_like(ode.snapshots)
    w = min(mc.fractions.shape[1], N + 1)
    emp[:, :w] = mc.fractions[:, :w]
    diff = np.abs(emp - ode.snapshots)
    return MeanFieldDistance(t_mc.copy(), 0.5 * diff.sum(axis=1), diff.max(axis=1))
