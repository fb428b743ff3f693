"""Post-hoc checks on computed trajectories.

* tail identities: the change of a weighted tail sum equals the time
  integral of its exchange-rate expression (trapezoid rule on snapshots);
* gelation-time estimation from threshold crossings of ``M_2`` across
  truncation orders;
* blow-up probes that look for finite-``N`` signatures of non-existence;
* conservation drift summaries.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientSampling, InvalidParameter, WrongRegime
from .integrator import SolverConfig, integrate
from .kernel import RegimeLabel, classify
from .rhs import Evaluator
from .state import TAIL_WEIGHTS, init_distribution, moment, tail_weights

__all__ = [
    "IdentityResidualReport",
    "GelationEstimate",
    "BlowupReport",
    "ConservationReport",
    "tail_identity_residual",
    "estimate_gelation_time",
    "blowup_probe",
    "conservation_report",
    "VERDICTS",
]

VERDICTS = ("no-finite-time-gelation", "finite-time-gelation-signature", "inconclusive")

# sampling needed for the quadrature: at least this many recorded intervals
MIN_INTERVALS = 100


# -- tail identities ---------------------------------------------------------

@dataclass
class IdentityResidualReport:
    """``residuals[w]`` is ``max_t |LHS(t) - RHS(t)|`` for tail weight ``w``."""

    m: int
    residuals: dict
    series: dict = field(default_factory=dict, repr=False)

    @property
    def max_residual(self):
        return max(self.residuals.values())


def _rate_weights(g):
    """Coefficients turning ``(D, U)`` into ``d/dt sum g_j c_j``."""
    down = np.zeros_like(g)
    up = np.zeros_like(g)
    down[1:] = g[:-1] - g[1:]
    up[:-1] = g[1:] - g[:-1]
    return down, up


def _check_sampling(times):
    if times.size < 2:
        return
    span = times[-1] - times[0]
    if np.max(np.diff(times)) > span / MIN_INTERVALS * (1 + 1e-9):
        raise InsufficientSampling(
            f"quadrature needs record_every <= t_end/{MIN_INTERVALS}; "
            f"largest recorded interval is {np.max(np.diff(times)):g}")


def tail_identity_residual(trajectory, kernel, m, weights=TAIL_WEIGHTS):
    """Residuals of the integrated tail identities at tail index ``m``.

    For each weight ``g`` (zero below ``m``) this compares

        sum_j g_j c_j(t) - sum_j g_j c_j(0)

    with the trapezoid integral of
    ``sum_j (g_{j-1} - g_j) D_j + (g_{j+1} - g_j) U_j``, the same rate written
    in terms of the export and import rates.  The quadrature error is
    ``O(record_every**2)``.
    """
    times = np.asarray(trajectory.times, dtype=float)
    snaps = trajectory.snapshots
    _check_sampling(times)
    N = snaps.shape[1] - 1
    ev = Evaluator(kernel, N)
    rates = [ev.rates(np.ascontiguousarray(row)) for row in snaps]

    residuals = {}
    series = {}
    for w in weights:
        g = tail_weights(N, m, w)
        down, up = _rate_weights(g)
        values = np.array([math.fsum(g * row) for row in snaps])
        rate = np.array([math.fsum(np.concatenate((down * D, up * U))) for D, U in rates])
        integral = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(times) * (rate[1:] + rate[:-1]))))
        resid = np.abs((values - values[0]) - integral)
        residuals[w] = float(resid.max())
        series[w] = resid
    return IdentityResidualReport(m, residuals, series)


# -- gelation time -----------------------------------------------------------

@dataclass
class GelationEstimate:
    """Threshold-crossing times per truncation order.

    ``t_star[i]`` is None when run ``i`` never crossed (``censored[i]``).
    """

    N_list: list
    t_star: list
    censored: list
    outcomes: list
    verdict: str
    T_g: Optional[float] = None
    threshold_ratio: float = 100.0

    def changes(self):
        """Relative change of ``t*`` across each consecutive pair (None if undefined)."""
        out = []
        for a, b in zip(self.t_star[:-1], self.t_star[1:]):
            out.append(None if a is None or b is None else (b - a) / a)
        return out


def _crossing_run(args):
    kernel, spec, N, ratio, config = args
    initial = init_distribution(spec, N)
    w2 = np.arange(N + 1, dtype=float) ** 2
    target = ratio * moment(initial, 2)
    last = [initial.t, float(w2 @ initial.c)]
    hit = []

    def monitor(t, c):
        m2 = float(w2 @ c)
        if m2 >= target:
            t0, m0 = last
            # linear interpolation inside the step that crossed
            hit.append(t0 + (t - t0) * (target - m0) / (m2 - m0) if m2 > m0 else t)
            return True
        last[0], last[1] = t, m2
        return False

    if target == 0:
        return 0.0, "completed"
    traj = integrate(kernel, initial, config, moments=(0, 1, 2), monitor=monitor)
    if hit:
        return hit[0], traj.outcome
    if traj.outcome == "step-collapse":
        return traj.collapse_time, traj.outcome
    return None, traj.outcome


def _aitken(t1, t2, t3):
    d1, d2 = t2 - t1, t3 - t2
    if d1 == 0 or d2 == 0:
        return t3
    r = d2 / d1
    if not 0 < r < 1:
        return None
    # remaining geometric tail d2 (r + r**2 + ...)
    return t3 + d2 * r / (1 - r)


def _verdict(t_star, t_end, grow, flat):
    if all(t is None for t in t_star):
        return "no-finite-time-gelation"
    a, b = t_star[-2], t_star[-1]
    if a is not None and b is None:
        # last run never crossed within the horizon
        return "no-finite-time-gelation" if t_end > (1 + grow) * a else "inconclusive"
    if a is None or b is None:
        return "inconclusive"
    change = (b - a) / a
    if change > grow:
        return "no-finite-time-gelation"
    if abs(change) < flat:
        return "finite-time-gelation-signature"
    return "inconclusive"


def estimate_gelation_time(kernel, spec, N_list, threshold_ratio=100.0, t_end=5.0,
                           config=None, jobs=1, grow=0.20, flat=0.05):
    """Estimate a gelation time from ``M_2`` threshold crossings.

    For each ``N``, ``t*(N)`` is the first time ``M_2 >= threshold_ratio * M_2(0)``,
    or the step-collapse time if that comes first.  The verdict compares the
    last two orders: an increase above ``grow`` per doubling means no
    gelation, a change below ``flat`` is a finite-time signature.  These
    thresholds are heuristics.  ``T_g`` is an Aitken (Richardson with
    estimated order) extrapolation of the last three crossing times.
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 3:
        raise InvalidParameter("N_list needs at least 3 truncation orders")
    if any(b < 2 * a for a, b in zip(N_list[:-1], N_list[1:])):
        raise InvalidParameter("each N in N_list must be at least twice the previous")
    if not threshold_ratio > 1:
        raise InvalidParameter("threshold_ratio must be > 1")
    config = config or SolverConfig(t_end=t_end, record_every=t_end / 20)
    tasks = [(kernel, spec, N, threshold_ratio, config) for N in N_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_crossing_run, tasks))
    else:
        results = [_crossing_run(t) for t in tasks]

    t_star = [r[0] for r in results]
    verdict = _verdict(t_star, config.t_end, grow, flat)
    T_g = None
    if verdict == "finite-time-gelation-signature" and None not in t_star[-3:]:
        T_g = _aitken(*t_star[-3:])
    return GelationEstimate(N_list, t_star, [t is None for t in t_star], [r[1] for r in results],
                            verdict, T_g, threshold_ratio)


# -- blow-up probes ----------------------------------------------------------

@dataclass
class BlowupReport:
    weight: str
    m_list: list
    growth: dict
    outcome: str
    collapse_time: Optional[float]
    t_last: float
    increasing_in_m: bool
    regime: str = ""


def blowup_probe(kernel, spec, m_list, t_end, N, config=None, control=False):
    """Tail growth factors and collapse time for an at-risk kernel.

    The growth factor at ``m`` is the weighted tail sum over ``j >= m`` at
    the last accepted state divided by its initial value.  Biased kernels use
    the linear-excess weight ``j - m``; symmetric ones the quadratic-excess
    weight ``j**2 - m**2``.

    Parameters
    ----------
    control : bool
        Allow a kernel that is not at risk, for control runs.
    config : SolverConfig, optional
        Explicit kernels at large ``N`` are extremely stiff; the default
        uses a tiny ``dt_min`` and a bounded step budget so the run gets far
        enough for the tail to move before it collapses.
    """
    regime = classify(kernel)
    if not (regime.label.at_risk or control):
        raise WrongRegime(f"{kernel.name} is {regime.label.value}, not a non-existence risk")
    weight = "linear-excess" if regime.label is RegimeLabel.NonexistenceRiskBiased else "quadratic-excess"
    config = config or SolverConfig(t_end=t_end, dt_min=1e-30 * t_end, dt_init=1e-12 * t_end,
                                    max_steps=200_000)
    initial = init_distribution(spec, N)
    traj = integrate(kernel, initial, config)
    m_list = sorted(int(m) for m in m_list)
    growth = {}
    for m in m_list:
        w = tail_weights(N, m, weight)
        before = math.fsum(w * initial.c)
        after = math.fsum(w * traj.snapshots[-1])
        growth[m] = after / before if before > 0 else math.inf
    g = [growth[m] for m in m_list]
    increasing = all(b > a for a, b in zip(g[:-1], g[1:]))
    return BlowupReport(weight, m_list, growth, traj.outcome, traj.collapse_time,
                        traj.t_final, increasing, regime.label.value)


# -- conservation ------------------------------------------------------------

@dataclass
class ConservationReport:
    m0_drift: float
    m1_drift: float
    clipped_mass: float


def _relative_drift(values):
    if values.size == 0:
        return 0.0
    ref = abs(values[0])
    dev = float(np.max(np.abs(values - values[0])))
    return float(dev / ref) if ref > 0 else dev


def conservation_report(trajectory):
    """Maximum relative drift of ``M_0`` and ``M_1`` over the recorded snapshots."""
    v = trajectory.moments.values
    return ConservationReport(_relative_drift(v[0]), _relative_drift(v[1]),
                              float(trajectory.clipped_mass))
