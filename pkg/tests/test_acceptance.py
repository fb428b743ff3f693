"""Acceptance criteria.  Each test prints one ``[PASS]``/``[FAIL]`` line.

Runtimes are measured after a warm-up call, so the one-off compile time
of the numba kernels is not counted.
"""
import math
import time

import numpy as np
import pytest

from edgrowth.cli import run_scenario
from edgrowth.config import parse_config, validate
from edgrowth.diagnostics import (blowup_probe, conservation_report, estimate_gelation_time,
                                  tail_identity_residual)
from edgrowth.integrator import SolverConfig, integrate
from edgrowth.kernel import constant_kernel, make_biased, power_kernel, product_kernel, sum_kernel
from edgrowth.rhs import moment_rate, rhs, rhs_direct, rhs_separable
from edgrowth.state import ClusterState, InitialSpec, init_distribution
from edgrowth.stochastic import compare_to_meanfield, ensemble_mean, simulate_ensemble

MONO = InitialSpec("monodisperse", rho=1.0)
JK = product_kernel(1.0, classical_mode=True)

FAMILIES = [
    constant_kernel(),
    product_kernel(1.0),
    sum_kernel(0.5, 1.5),
    power_kernel(1.5),
    make_biased(1.5, 0.1),
]


@pytest.fixture(scope="module", autouse=True)
def warm_up():
    integrate(JK, init_distribution(MONO, 8), SolverConfig(t_end=0.1))
    simulate_ensemble(constant_kernel(), np.ones(8, dtype=int), 0.1, 0.1)


def random_states(rng, N, count):
    for _ in range(count):
        c = rng.random(N + 1)
        yield ClusterState(c / c.sum())


def test_criterion_01_conservation(verdict):
    t0 = time.perf_counter()
    tr = integrate(JK, init_distribution(MONO, 200), SolverConfig(t_end=5.0))
    wall = time.perf_counter() - t0
    rep = conservation_report(tr)
    ok = tr.outcome == "completed" and rep.m0_drift < 1e-8 and rep.m1_drift < 1e-8 and wall < 5
    verdict(1, ok, f"M0 drift {rep.m0_drift:.1e}, M1 drift {rep.m1_drift:.1e}, {wall:.2f} s")


def test_criterion_02_positivity(verdict):
    pos = integrate(JK, init_distribution(InitialSpec("geometric", kappa=0.5, scale=0.5), 200),
                    SolverConfig(t_end=5.0))
    nonneg = integrate(JK, init_distribution(MONO, 200), SolverConfig(t_end=5.0))
    lo_pos = float(pos.snapshots.min())
    lo_nonneg = float(nonneg.snapshots.min())
    ok = (pos.outcome == nonneg.outcome == "completed" and lo_pos > 0 and lo_nonneg >= 0)
    verdict(2, ok, f"min c (positive IC) {lo_pos:.2e}, min c (nonnegative IC) {lo_nonneg:.2e}")


def test_criterion_03_separable_equals_direct(verdict):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for N in (16, 128, 512):
        for k in FAMILIES:
            for c in random_states(rng, N, 100):
                a = rhs_direct(k, c).d
                b = rhs_separable(k, c).d
                worst = max(worst, float(np.max(np.abs(a - b)) / np.max(np.abs(a))))
    wall = time.perf_counter() - t0
    verdict(3, worst < 1e-12 and wall < 10, f"max relative discrepancy {worst:.1e}, {wall:.2f} s")


def test_criterion_04_moment_identity(verdict):
    rng = np.random.default_rng(4)
    N = 100
    j = np.arange(N + 1, dtype=float)
    weights = {"1": np.ones(N + 1), "j": j, "j^2": j ** 2, "j^2.5": j ** 2.5}
    worst_rel = 0.0
    worst_conserved = 0.0
    for k in FAMILIES:
        for c in random_states(rng, N, 10):
            d = rhs(k, c).d
            for name, g in weights.items():
                value = moment_rate(k, c, g)
                direct = math.fsum(g * d)
                scale = math.fsum(np.abs(g * d))
                if name in ("1", "j"):
                    worst_conserved = max(worst_conserved, abs(value) / scale)
                else:
                    worst_rel = max(worst_rel, abs(value - direct) / abs(direct))
    ok = worst_rel < 1e-12 and worst_conserved < 1e-14
    verdict(4, ok, f"max relative error {worst_rel:.1e}; conserved weights {worst_conserved:.1e} of scale")


def _max_ratio(tr, bound):
    t = tr.times
    return float(np.max(tr.moments.values[2] / bound(t)))


def test_criterion_05_moment_envelopes(verdict):
    ratios = {}
    for N in (100, 400):
        c0 = init_distribution(MONO, N)
        m1, m2 = 1.0, 1.0
        a = integrate(JK, c0, SolverConfig(t_end=5.0))
        ratios[("a", N)] = (a.outcome, _max_ratio(a, lambda t: m2 + 2 * m1 ** 2 * t))
        b = integrate(power_kernel(1.5, classical_mode=True), c0, SolverConfig(t_end=5.0))
        ratios[("b", N)] = (b.outcome, _max_ratio(b, lambda t: m2 * np.exp(2 * m1 * t)))
        c = integrate(power_kernel(2.0, classical_mode=True), c0, SolverConfig(t_end=0.45 / m2))
        ratios[("c", N)] = (c.outcome, _max_ratio(c, lambda t: m2 / (1 - 2 * m2 * t)))
    ok = all(out == "completed" and r <= 1 + 1e-6 for out, r in ratios.values())
    detail = ", ".join(f"({p}) N={N}: {r - 1:+.1e}" for (p, N), (_, r) in sorted(ratios.items()))
    verdict(5, ok, f"max M2/envelope - 1 {detail}")


def test_criterion_06_tail_identities(verdict):
    t_end = 2.0
    res = {}
    for every in (t_end / 200, t_end / 400):
        tr = integrate(JK, init_distribution(MONO, 200), SolverConfig(t_end=t_end, record_every=every))
        res[every] = {m: tail_identity_residual(tr, JK, m).max_residual for m in (1, 5, 10)}
    coarse, fine = res[t_end / 200], res[t_end / 400]
    worst = max(coarse.values())
    reduction = min(coarse[m] / fine[m] for m in coarse)
    ok = worst < 1e-5 and reduction >= 3
    per_m = ", ".join(f"m={m}: {v:.2e}" for m, v in coarse.items())
    verdict(6, ok, f"residuals {per_m}; halving cadence reduces by {reduction:.2f}x")


def test_criterion_07_regime_behavior(verdict):
    t0 = time.perf_counter()
    slow = estimate_gelation_time(product_kernel(1.0), MONO, [100, 200, 400], t_end=80.0)
    fast = estimate_gelation_time(product_kernel(1.75), MONO, [200, 400, 800], t_end=5.0)
    wall = time.perf_counter() - t0
    ch_slow = slow.changes()
    ch_fast = fast.changes()
    ok_i = (slow.verdict == "no-finite-time-gelation"
            and all(ch is not None and ch > 0.20 for ch in ch_slow))
    ok_ii = (fast.verdict == "finite-time-gelation-signature"
             and ch_fast[-1] is not None and abs(ch_fast[-1]) < 0.05)

    def fmt(ts):
        return "[" + ", ".join("censored" if t is None else f"{t:.3f}" for t in ts) + "]"

    verdict(7, ok_i and ok_ii and wall < 300,
            f"(i) mu=1 t*={fmt(slow.t_star)} {slow.verdict}; "
            f"(ii) mu=1.75 t*={fmt(fast.t_star)} {fast.verdict}, T_g={fast.T_g}; {wall:.0f} s")


def test_criterion_08_nonexistence_signatures(verdict):
    q3 = InitialSpec("algebraic", q=3, rho=0.5)
    q4 = InitialSpec("algebraic", q=4, rho=0.5)
    m_list = [5, 10, 20, 40]
    biased = blowup_probe(make_biased(1.5, 0.1), q3, m_list, 5.0, 400)
    sym = blowup_probe(power_kernel(2.5), q4, m_list, 5.0, 400)
    controls = [blowup_probe(product_kernel(1.0), spec, m_list, 5.0, 400, control=True)
                for spec in (q3, q4)]
    ok = (biased.outcome == sym.outcome == "step-collapse"
          and biased.increasing_in_m and sym.increasing_in_m
          and all(c.outcome == "completed" for c in controls))
    verdict(8, ok, f"biased collapse t={biased.collapse_time:.2e} growth increasing={biased.increasing_in_m}; "
                   f"(jk)^2.5 collapse t={sym.collapse_time:.3f} increasing={sym.increasing_in_m}; "
                   f"controls {[c.outcome for c in controls]}")


def test_criterion_09_meanfield_oracle(verdict):
    k = constant_kernel()
    ode = integrate(k, init_distribution(MONO, 100), SolverConfig(t_end=1.0, record_every=1.0))
    t0 = time.perf_counter()
    tv = {}
    for L in (1000, 10_000):
        runs = simulate_ensemble(k, np.ones(L, dtype=int), 1.0, 1.0, seed=7, replicas=8)
        tv[L] = float(compare_to_meanfield(ensemble_mean(runs), ode).tv[-1])
    wall = time.perf_counter() - t0
    ratio = tv[1000] / tv[10_000]
    ok = tv[10_000] <= 0.05 and math.sqrt(10) / 2 <= ratio <= 2 * math.sqrt(10) and wall < 120
    verdict(9, ok, f"TV(1e4)={tv[10_000]:.4f}, TV(1e3)/TV(1e4)={ratio:.2f}, {wall:.1f} s")


def test_criterion_10_classical_reduction(verdict):
    values = [0.3, 0.2, 0.1, 0.05]
    runs = []
    for c0 in (0.35, 4.0):
        spec = InitialSpec("explicit", values=values, c0=c0)
        runs.append(integrate(JK, init_distribution(spec, 100), SolverConfig(t_end=3.0)))
    a, b = runs
    mono = all(np.all(np.diff(r.snapshots[:, 0]) >= 0) for r in runs)
    same_grid = np.array_equal(a.times, b.times)
    scale = np.max(np.abs(a.snapshots[:, 1:]))
    dev = float(np.max(np.abs(a.snapshots[:, 1:] - b.snapshots[:, 1:])) / scale) if same_grid else math.inf
    verdict(10, mono and dev <= 1e-12, f"c0 non-decreasing={mono}, max relative c_j deviation {dev:.1e}")


def test_criterion_11_reproducibility(verdict, tmp_path):
    text = "\n".join([
        "mode = mc-compare", "seed = 17", "kernel.type = product", "kernel.mu = 1",
        "ic.type = monodisperse", "ic.rho = 1", "truncation.N = 80", "solver.t_end = 0.5",
        "mc.sites = 2000", "mc.replicas = 2", "mc.snapshot_every = 0.25",
    ])
    cfg = validate(parse_config(text))
    a = run_scenario(cfg, tmp_path / "a")
    b = run_scenario(cfg, tmp_path / "b")
    same = a.manifest == b.manifest and all(
        (tmp_path / "a" / m["file"]).read_bytes() == (tmp_path / "b" / m["file"]).read_bytes()
        for m in a.manifest)
    verdict(11, same, f"{len(a.manifest)} hashed artifacts identical={same}")
