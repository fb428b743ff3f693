import math

import numpy as np
import pytest

from edgrowth.diagnostics import (_aitken, _verdict, blowup_probe, conservation_report,
                                  estimate_gelation_time, tail_identity_residual)
from edgrowth.errors import InsufficientSampling, InvalidParameter, WrongRegime
from edgrowth.integrator import SolverConfig, integrate
from edgrowth.kernel import callback_kernel, constant_kernel, power_kernel, product_kernel
from edgrowth.state import ClusterState, InitialSpec, init_distribution

MONO = InitialSpec("monodisperse", rho=1.0)


def zero_dynamics_run(N=12):
    c = np.zeros(N + 1)
    c[0] = 1.0
    k = product_kernel(1.0, classical_mode=True)
    return k, integrate(k, ClusterState(c), SolverConfig(t_end=1.0))


def test_smooth_run_first_identity_at_m1():
    spec = InitialSpec("geometric", kappa=0.3, scale=0.5)
    k = constant_kernel()
    tr = integrate(k, init_distribution(spec, 100), SolverConfig(t_end=1.0))
    rep = tail_identity_residual(tr, k, 1)
    assert rep.residuals["count"] < 1e-6
    assert set(rep.residuals) == {"count", "linear-excess", "quadratic-excess"}
    assert all(r >= 0 for r in rep.residuals.values())


def test_count_identity_at_m1_is_minus_delta_c0():
    # sum_{j>=1} c_j changes by -delta c0
    spec = InitialSpec("geometric", kappa=0.3, scale=0.5)
    k = constant_kernel()
    tr = integrate(k, init_distribution(spec, 60), SolverConfig(t_end=1.0))
    tail = tr.snapshots[:, 1:].sum(axis=1)
    assert np.allclose(tail - tail[0], -(tr.snapshots[:, 0] - tr.snapshots[0, 0]), atol=1e-14)


def test_zero_dynamics_residuals_exactly_zero():
    k, tr = zero_dynamics_run()
    for m in (1, 3, 12):
        assert tail_identity_residual(tr, k, m).max_residual == 0.0
    rep = conservation_report(tr)
    assert rep.m0_drift == 0.0 and rep.m1_drift == 0.0 and rep.clipped_mass == 0.0


def test_sparse_trajectory_rejected():
    k = constant_kernel()
    tr = integrate(k, init_distribution(MONO, 10), SolverConfig(t_end=1.0, record_every=0.1))
    with pytest.raises(InsufficientSampling):
        tail_identity_residual(tr, k, 1)


def test_conservation_report_on_regular_run():
    k = product_kernel(1.0, classical_mode=True)
    tr = integrate(k, init_distribution(MONO, 100), SolverConfig(t_end=2.0))
    rep = conservation_report(tr)
    assert rep.m0_drift < 1e-8 and rep.m1_drift < 1e-8


def test_conservation_report_after_collapse():
    k = power_kernel(2.0, classical_mode=True)
    tr = integrate(k, init_distribution(MONO, 200), SolverConfig(t_end=1.0, max_steps=20_000))
    assert tr.outcome == "step-collapse"
    rep = conservation_report(tr)
    assert math.isfinite(rep.m0_drift) and math.isfinite(rep.m1_drift)


def test_aitken_on_geometric_sequence():
    # t_n = 1 + 2^-n converges to 1
    assert _aitken(1.5, 1.25, 1.125) == pytest.approx(1.0, rel=1e-14)
    assert _aitken(1.0, 2.0, 4.0) is None


@pytest.mark.parametrize("t_star,expected", [
    ([None, None, None], "no-finite-time-gelation"),
    ([1.0, 1.3, 1.7], "no-finite-time-gelation"),
    ([1.2, 1.1, 1.08], "finite-time-gelation-signature"),
    ([1.0, 1.2, 1.1], "inconclusive"),
])
def test_verdict_rules(t_star, expected):
    assert _verdict(t_star, 5.0, 0.2, 0.05) == expected


def test_gelscan_argument_checks():
    k = constant_kernel()
    with pytest.raises(InvalidParameter):
        estimate_gelation_time(k, MONO, [10, 20])
    with pytest.raises(InvalidParameter):
        estimate_gelation_time(k, MONO, [10, 15, 30])
    with pytest.raises(InvalidParameter):
        estimate_gelation_time(k, MONO, [10, 20, 40], threshold_ratio=1.0)


def test_gelscan_zero_kernel_censored():
    est = estimate_gelation_time(callback_kernel(lambda j, k: 0.0), MONO, [10, 20, 40], t_end=1.0)
    assert est.censored == [True, True, True]
    assert est.verdict == "no-finite-time-gelation"
    assert est.T_g is None


@pytest.mark.slow
def test_gelscan_fast_kernel_signature_and_extrapolation():
    est = estimate_gelation_time(product_kernel(1.75), MONO, [200, 400, 800], t_end=5.0)
    assert est.verdict == "finite-time-gelation-signature"
    assert all(t is not None and t > 0 for t in est.t_star)
    assert est.T_g < est.t_star[-1]


@pytest.mark.slow
def test_gelscan_verdict_stable_at_lower_threshold():
    est = estimate_gelation_time(product_kernel(1.75), MONO, [200, 400, 800],
                                 threshold_ratio=50, t_end=5.0)
    assert est.verdict == "finite-time-gelation-signature"


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="M2 <= N * M1 at truncation N, so a ratio of 200 "
                   "cannot be reached at N = 200 and that order is censored")
def test_gelscan_verdict_stable_at_upper_threshold():
    est = estimate_gelation_time(product_kernel(1.75), MONO, [200, 400, 800],
                                 threshold_ratio=200, t_end=5.0)
    assert est.verdict == "finite-time-gelation-signature"


def test_blowup_rejects_regular_kernel():
    with pytest.raises(WrongRegime):
        blowup_probe(product_kernel(1.0), InitialSpec("algebraic", q=3, rho=0.5), [5, 10], 1.0, 50)


def test_blowup_control_run_completes():
    spec = InitialSpec("algebraic", q=4, rho=0.5)
    rep = blowup_probe(product_kernel(1.0), spec, [5, 10, 20], 2.0, 100, control=True)
    assert rep.outcome == "completed"
    assert rep.collapse_time is None
    assert rep.weight == "quadratic-excess"
    assert all(math.isfinite(g) for g in rep.growth.values())


def test_blowup_symmetric_fast_kernel_collapses():
    spec = InitialSpec("algebraic", q=4, rho=0.5)
    rep = blowup_probe(power_kernel(2.5), spec, [5, 10, 20], 5.0, 200)
    assert rep.outcome == "step-collapse"
    assert rep.collapse_time < 5.0
    assert rep.increasing_in_m
