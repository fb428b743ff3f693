"""Adaptive Dormand-Prince 5(4) integration of the truncated system.

Positivity is handled by rejection rather than clipping: a step that drives
any component below ``-negativity_floor``, or turns a strictly positive
component negative, is rejected and the step halved.  Components that start
a step at exactly zero and land in ``(-floor, 0)`` are clipped to zero and
the clipped amount is booked in ``Trajectory.clipped_mass``.

Blow-up of the underlying infinite system shows up at finite ``N`` as
explicit-step stiffness: the step size is driven below ``dt_min`` (or the
step budget runs out).  That is reported as ``outcome="step-collapse"``,
not raised.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _numerics as _nx
from .errors import InvalidParameter, NonFiniteRHS
from .rhs import make_rhs
from .state import ClusterState, MomentSeries

__all__ = ["SolverConfig", "Trajectory", "StepResult", "step", "integrate", "Stepper"]

log = logging.getLogger(__name__)

SAFETY = 0.9
GROW_MIN, GROW_MAX = 0.2, 5.0

OUTCOMES = ("completed", "step-collapse", "non-finite", "stopped")


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, step bounds and output cadence.

    Unset step bounds are derived from ``t_end``: ``dt_min = 1e-12 t_end``,
    ``dt_max = t_end``, ``dt_init = min(1e-3 t_end, dt_max)``, and
    ``record_every = t_end / 100``.  ``negativity_floor`` defaults to ``atol``.
    """

    t_end: float = 1.0
    rtol: float = 1e-8
    atol: float = 1e-12
    dt_init: Optional[float] = None
    dt_min: Optional[float] = None
    dt_max: Optional[float] = None
    record_every: Optional[float] = None
    negativity_floor: Optional[float] = None
    max_steps: int = 5_000_000
    method: str = "auto"

    def resolved(self):
        if self.t_end < 0:
            raise InvalidParameter("t_end must be >= 0")
        if not (self.rtol > 0 and self.atol > 0):
            raise InvalidParameter("rtol and atol must be > 0")
        T = self.t_end if self.t_end > 0 else 1.0
        dt_max = T if self.dt_max is None else self.dt_max
        dt_min = 1e-12 * T if self.dt_min is None else self.dt_min
        dt_init = min(1e-3 * T, dt_max) if self.dt_init is None else self.dt_init
        dt_init = max(dt_init, dt_min)
        record = T / 100 if self.record_every is None else self.record_every
        floor = self.atol if self.negativity_floor is None else self.negativity_floor
        if not 0 < dt_min <= dt_init <= dt_max:
            raise InvalidParameter(f"need 0 < dt_min <= dt_init <= dt_max, got {dt_min}, {dt_init}, {dt_max}")
        if not record > 0:
            raise InvalidParameter("record_every must be > 0")
        if self.max_steps < 1:
            raise InvalidParameter("max_steps must be >= 1")
        return dataclasses.replace(self, dt_max=dt_max, dt_min=dt_min, dt_init=dt_init,
                                   record_every=record, negativity_floor=floor)


@dataclass
class Trajectory:
    """Recorded snapshots of one integration.

    ``snapshots[i]`` is the state at ``times[i]``.  Snapshots are taken on
    the ``record_every`` grid; on early termination the last accepted state
    is appended as a final off-grid snapshot.
    """

    times: np.ndarray
    snapshots: np.ndarray
    outcome: str
    moments: MomentSeries
    clipped_mass: float = 0.0
    collapse_time: Optional[float] = None
    n_steps: int = 0
    n_rejected: int = 0
    kernel_name: str = ""
    config: Optional[SolverConfig] = None

    @property
    def N(self):
        return self.snapshots.shape[1] - 1

    def state(self, i):
        return ClusterState(self.snapshots[i], self.times[i])

    @property
    def final(self):
        return self.state(-1)

    @property
    def t_final(self):
        return float(self.times[-1])


class StepResult(NamedTuple):
    state: ClusterState
    error: float
    accepted: bool
    clipped: float = 0.0


class Stepper:
    """One Dormand-Prince step with error and positivity checks.

    Stage evaluations run in compiled code; ``ks`` holds the seven stage
    derivatives and ``ks[6]`` is f at the proposed solution (FSAL).
    """

    def __init__(self, kernel, N, config):
        self.kernel = kernel
        self.N = N
        self.config = config
        self.f = make_rhs(kernel, N, config.method)
        # c_0 is slaved to conservation when K(j, 0) = 0; keep it out of the error norm
        self.ctrl0 = 1 if kernel.zero_column_vanishes(N) else 0
        self.ks = np.zeros((7, N + 1))
        self.y = np.zeros(N + 1)

    def derivative(self, c):
        return self.f(np.ascontiguousarray(c, dtype=float))

    def attempt(self, c, h, k1):
        """Return ``(y_new, err_ratio, negative, k_last)``; ``err_ratio`` is inf on overflow.

        The returned arrays are copies and safe to keep.
        """
        cfg = self.config
        f = self.f
        self.ks[0] = k1
        ratio, status = _nx.dp_attempt(f.kind, f.A, f.B, f.M, c, h, self.ks, self.y, f.D, f.U,
                                       cfg.atol, cfg.rtol, cfg.negativity_floor, self.ctrl0)
        y_new = self.y.copy()
        if status == 2:
            return y_new, math.inf, False, None
        return y_new, ratio, status == 1, self.ks[6].copy()


def step(kernel, state, dt, config=None):
    """Attempt a single step of size ``dt`` from ``state``.

    Returns the new state (or the old one if rejected), the scaled local
    error estimate, the acceptance flag and any clipped mass.
    """
    config = (config or SolverConfig(t_end=max(dt, 1.0))).resolved()
    if dt == 0:
        return StepResult(state, 0.0, True, 0.0)
    if dt < 0:
        raise InvalidParameter("dt must be >= 0")
    stepper = Stepper(kernel, state.N, config)
    c = np.array(state.c)
    k1 = stepper.derivative(c)
    if not np.all(np.isfinite(k1)):
        raise NonFiniteRHS("non-finite derivative at step start")
    y_new, ratio, negative, _ = stepper.attempt(c, dt, k1)
    if ratio > 1.0 or negative:
        return StepResult(state, ratio, False, 0.0)
    y_new, clipped = _clip(y_new)
    return StepResult(ClusterState(y_new, state.t + dt), ratio, True, clipped)


def _clip(y):
    neg = y < 0
    if not neg.any():
        return y, 0.0
    clipped = float(-y[neg].sum())
    y = np.where(neg, 0.0, y)
    return y, clipped


def integrate(kernel, initial, config, moments=(0, 1, 2), monitor=None):
    """Integrate from ``initial`` to ``config.t_end``.

    Parameters
    ----------
    monitor : callable, optional
        ``monitor(t, c) -> bool`` called after every accepted step; returning
        True ends the run with ``outcome="stopped"``.
    """
    cfg = config.resolved()
    N = initial.N
    t0 = initial.t
    c = np.array(initial.c)
    times = [t0]
    snaps = [c.copy()]

    def finish(outcome, collapse_time=None):
        T = np.array(times)
        S = np.array(snaps)
        return Trajectory(T, S, outcome, MomentSeries.from_snapshots(T, S, moments),
                          clipped_mass=clipped_total, collapse_time=collapse_time,
                          n_steps=n_steps, n_rejected=n_rejected,
                          kernel_name=kernel.name, config=cfg)

    clipped_total = 0.0
    n_steps = n_rejected = 0
    if cfg.t_end == 0:
        return finish("completed")

    stepper = Stepper(kernel, N, cfg)
    k1 = stepper.derivative(c)
    if not np.all(np.isfinite(k1)):
        raise NonFiniteRHS("non-finite derivative at t = 0", finish("non-finite"))

    t_end = t0 + cfg.t_end
    n_rec = 1
    t_rec = min(t0 + n_rec * cfg.record_every, t_end)
    t = t0
    h = cfg.dt_init
    hold = False

    while True:
        if n_steps + n_rejected >= cfg.max_steps:
            log.info("step budget %d exhausted at t=%g", cfg.max_steps, t)
            _append_final(times, snaps, t, c)
            return finish("step-collapse", t)
        if h < cfg.dt_min:
            log.info("step size %g below dt_min %g at t=%g", h, cfg.dt_min, t)
            _append_final(times, snaps, t, c)
            return finish("step-collapse", t)

        h_use = min(h, t_rec - t)
        lands = h_use >= t_rec - t or (t_rec - t - h_use) <= 1e-12 * h_use
        if lands:
            h_use = t_rec - t
        y_new, ratio, negative, k_new = stepper.attempt(c, h_use, k1)

        if negative or ratio > 1.0:
            n_rejected += 1
            hold = negative
            if negative or not math.isfinite(ratio):
                h = h_use * 0.5
            else:
                h = h_use * max(GROW_MIN, SAFETY * ratio ** -0.2)
            continue

        y_new, clipped = _clip(y_new)
        if clipped:
            clipped_total += clipped
            k_new = stepper.derivative(y_new)
        n_steps += 1
        t = t_rec if lands else t + h_use
        c = y_new
        k1 = k_new
        if not np.all(np.isfinite(k1)):
            _append_final(times, snaps, t, c)
            raise NonFiniteRHS(f"non-finite derivative at t = {t}", finish("non-finite"))

        factor = GROW_MAX if ratio == 0 else min(GROW_MAX, max(GROW_MIN, SAFETY * ratio ** -0.2))
        if hold:
            # just recovered from a positivity rejection; probe upward slowly
            factor = min(factor, 1.1)
            hold = False
        # don't let a short landing step shrink the next proposal
        h = min(cfg.dt_max, max(h, h_use * factor) if lands else h_use * factor)

        if lands:
            times.append(t)
            snaps.append(c.copy())
            if t >= t_end:
                return finish("completed")
            n_rec += 1
            t_rec = min(t0 + n_rec * cfg.record_every, t_end)
            if t_end - t_rec < 1e-12 * cfg.record_every:
                t_rec = t_end

        if monitor is not None and monitor(t, c):
            _append_final(times, snaps, t, c)
            return finish("stopped")


def _append_final(times, snaps, t, c):
    if t > times[-1]:
        times.append(t)
        snaps.append(c.copy())
