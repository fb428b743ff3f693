"""Command-line driver: scenario configs in, CSV/JSON artifacts out.

Exit codes: 0 success, 2 configuration error, 3 non-finite right-hand
side, 4 step-collapse in a mode that does not expect it.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import MODES, load_config
from .diagnostics import (blowup_probe, conservation_report, estimate_gelation_time,
                          tail_identity_residual)
from .errors import (ConfigError, InsufficientSampling, InvalidKernel, InvalidParameter,
                     NonFiniteRHS, NormalizationExceeded, WrongRegime)
from .integrator import SolverConfig, integrate
from .kernel import (BUILTIN_CALLBACKS, callback_kernel, classify, constant_kernel, make_biased,
                     power_kernel, product_kernel, sum_kernel)
from .state import InitialSpec, init_distribution
from .stochastic import compare_to_meanfield, ensemble_mean, simulate_ensemble

__all__ = ["RunReport", "run_scenario", "build_kernel", "build_initial", "main"]

log = logging.getLogger("edgrowth")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_COLLAPSE = 0, 2, 3, 4


@dataclass
class RunReport:
    mode: str
    outcome: str
    config: dict
    wall_clock_s: float
    manifest: list = field(default_factory=list)
    conservation: dict = None
    version: str = __version__
    exit_code: int = EXIT_OK

    def to_json(self):
        return {
            "mode": self.mode,
            "outcome": self.outcome,
            "config": self.config,
            "wall_clock_s": self.wall_clock_s,
            "manifest": self.manifest,
            "conservation": self.conservation,
            "version": self.version,
            "exit_code": self.exit_code,
        }


# -- builders ----------------------------------------------------------------

def build_kernel(cfg, mu=None, nu=None):
    """Kernel from ``kernel.*`` keys; ``mu``/``nu`` override for sweeps."""
    ktype = cfg["kernel.type"] or "product"
    classical = cfg["kernel.classical_mode"]
    if mu is not None:
        return product_kernel(mu, mu if nu is None else nu, classical_mode=classical)
    if ktype == "constant":
        return constant_kernel(classical)
    if ktype == "product":
        return product_kernel(cfg["kernel.mu"], cfg["kernel.nu"], classical_mode=classical)
    if ktype == "sum":
        return sum_kernel(cfg["kernel.mu"], cfg["kernel.nu"], classical_mode=classical)
    if ktype == "power":
        return power_kernel(cfg["kernel.beta"], classical_mode=classical)
    if ktype == "biased":
        return make_biased(cfg["kernel.beta"], cfg["kernel.epsilon"])
    return callback_kernel(BUILTIN_CALLBACKS[ktype], symmetric=True, name=ktype)


def build_initial(cfg):
    return InitialSpec(cfg["ic.type"], rho=cfg["ic.rho"], kappa=cfg["ic.kappa"],
                       q=cfg["ic.q"], scale=cfg["ic.scale"], values=cfg["ic.values"],
                       m0=cfg["ic.m0"], c0=cfg["ic.c0"])


def build_solver(cfg, record_every=None):
    return SolverConfig(t_end=cfg["solver.t_end"], rtol=cfg["solver.rtol"], atol=cfg["solver.atol"],
                        dt_init=cfg["solver.dt_init"], dt_min=cfg["solver.dt_min"],
                        dt_max=cfg["solver.dt_max"],
                        record_every=record_every or cfg["solver.record_every"],
                        max_steps=cfg["solver.max_steps"], method=cfg["solver.method"])


def _site_masses(cfg, spec, L):
    """Round initial fractions to site counts; size 0 takes the remainder."""
    N = cfg["truncation.N"]
    if N is None:
        if spec.type == "monodisperse":
            N = 1
        elif spec.type == "explicit":
            N = max(len(spec.values or ()), 1)
        else:
            raise ConfigError("truncation.N", f"needed to discretize a {spec.type} initial condition")
    c = init_distribution(spec, N).c
    counts = np.rint(c[1:] * L).astype(np.int64)
    if counts.sum() > L:
        raise ConfigError("mc.sites", "too few sites for the initial fractions")
    counts = np.concatenate(([L - counts.sum()], counts))
    return np.repeat(np.arange(N + 1), counts)


# -- output helpers ----------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Writer:
    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def csv(self, name, header, rows):
        path = self.out / name
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(v if isinstance(v, str) else _fmt(v) if isinstance(v, float)
                                  else str(v) for v in row) + "\n")
        self.files.append(name)

    def json(self, name, obj):
        path = self.out / name
        path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
        self.files.append(name)

    def manifest(self):
        out = []
        for name in self.files:
            data = (self.out / name).read_bytes()
            out.append({"file": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        return out


def _trajectory_rows(traj):
    for t, row in zip(traj.times, traj.snapshots):
        for j, c in enumerate(row):
            yield (float(t), j, float(c))


def _write_trajectory(w, traj, prefix=""):
    w.csv(f"{prefix}trajectory.csv", ["t", "j", "c"], _trajectory_rows(traj))
    exps = sorted(traj.moments.values)
    w.csv(f"{prefix}moments.csv", ["t"] + [f"M{p}" for p in exps],
          ([float(t)] + [float(traj.moments.values[p][i]) for p in exps]
           for i, t in enumerate(traj.times)))
    w.csv(f"{prefix}final_state.csv", ["j", "c"],
          ((j, float(c)) for j, c in enumerate(traj.snapshots[-1])))


def _conservation_dict(traj):
    r = conservation_report(traj)
    return {"m0_drift": r.m0_drift, "m1_drift": r.m1_drift, "clipped_mass": r.clipped_mass}


# -- modes -------------------------------------------------------------------

def _mode_run(cfg, w, jobs):
    kernel = build_kernel(cfg)
    traj = integrate(kernel, init_distribution(build_initial(cfg), cfg["truncation.N"]),
                     build_solver(cfg), moments=cfg["diagnostics.moments"])
    _write_trajectory(w, traj)
    cons = _conservation_dict(traj)
    diag = {"outcome": traj.outcome, "collapse_time": traj.collapse_time, "conservation": cons,
            "regime": classify(kernel).label.value, "n_steps": traj.n_steps,
            "n_rejected": traj.n_rejected}
    if cfg["diagnostics.identities"] and cfg["diagnostics.tail_m"] and traj.outcome != "completed":
        # the last snapshot of an interrupted run is off the recording grid
        diag["residuals"] = None
    elif cfg["diagnostics.identities"] and cfg["diagnostics.tail_m"]:
        try:
            reports = [tail_identity_residual(traj, kernel, m) for m in cfg["diagnostics.tail_m"]]
        except InsufficientSampling as exc:
            raise ConfigError("solver.record_every", str(exc)) from None
        diag["residuals"] = [{"m": r.m, **r.residuals} for r in reports]
    w.json("diagnostics.json", diag)
    return traj.outcome, cons, traj.outcome == "step-collapse"


def _mode_convergence(cfg, w, jobs):
    kernel = build_kernel(cfg)
    spec = build_initial(cfg)
    rows = []
    collapsed = False
    for N in cfg["convergence.N_list"]:
        traj = integrate(kernel, init_distribution(spec, N), build_solver(cfg))
        c = traj.snapshots[-1]
        j = np.arange(N + 1)
        tail = math.fsum(j[j > N // 2] * c[j > N // 2])
        rows.append({"N": N, "t": traj.t_final, "tail_mass_above_half": tail,
                     "m1_drift": conservation_report(traj).m1_drift, "outcome": traj.outcome})
        collapsed |= traj.outcome == "step-collapse"
    w.csv("convergence.csv", ["N", "t", "tail_mass_above_half", "m1_drift", "outcome"],
          ((r["N"], r["t"], r["tail_mass_above_half"], r["m1_drift"], r["outcome"]) for r in rows))
    w.json("convergence.json", {"rows": rows})
    return ("step-collapse" if collapsed else "completed"), None, collapsed


def _mode_gelscan(cfg, w, jobs):
    spec = build_initial(cfg)
    nus = cfg["gelscan.nu_list"]
    entries = []
    for mu in cfg["gelscan.mu_list"]:
        for nu in (nus or (mu,)):
            kernel = build_kernel(cfg, mu, nu)
            est = estimate_gelation_time(kernel, spec, cfg["gelscan.N_list"],
                                         cfg["gelscan.threshold_ratio"], t_end=cfg["solver.t_end"],
                                         config=build_solver(cfg, cfg["solver.t_end"] / 20),
                                         jobs=jobs, grow=cfg["gelscan.grow"], flat=cfg["gelscan.flat"])
            entries.append({"mu": mu, "nu": nu, "N_list": est.N_list, "t_star": est.t_star,
                            "censored": est.censored, "outcomes": est.outcomes,
                            "verdict": est.verdict, "T_g": est.T_g,
                            "threshold_ratio": est.threshold_ratio})
    w.csv("gelscan.csv", ["mu", "nu", "N", "t_star", "censored"],
          ((e["mu"], e["nu"], N, "" if t is None else float(t), str(cen).lower())
           for e in entries for N, t, cen in zip(e["N_list"], e["t_star"], e["censored"])))
    w.json("gelscan.json", {"scans": entries})
    return "completed", None, False


def _mode_blowup(cfg, w, jobs):
    kernel = build_kernel(cfg)
    solver_keys = [k for k in cfg.source if k.startswith("solver.") and k != "solver.t_end"]
    rep = blowup_probe(kernel, build_initial(cfg), cfg["blowup.m_list"], cfg["solver.t_end"],
                       cfg["truncation.N"], config=build_solver(cfg) if solver_keys else None,
                       control=cfg["blowup.control"])
    w.csv("blowup.csv", ["m", "growth_factor"], ((m, float(rep.growth[m])) for m in rep.m_list))
    w.json("blowup.json", {"weight": rep.weight, "m_list": rep.m_list,
                           "growth": {str(m): rep.growth[m] for m in rep.m_list},
                           "outcome": rep.outcome, "collapse_time": rep.collapse_time,
                           "t_last": rep.t_last, "increasing_in_m": rep.increasing_in_m,
                           "regime": rep.regime})
    # collapse is the finding here, not a failure
    return rep.outcome, None, False


def _mc_ensemble(cfg, jobs):
    kernel = build_kernel(cfg)
    masses = _site_masses(cfg, build_initial(cfg), cfg["mc.sites"])
    reps = simulate_ensemble(kernel, masses, cfg["solver.t_end"], cfg["mc.snapshot_every"],
                             seed=cfg["seed"], replicas=cfg["mc.replicas"], jobs=jobs)
    return kernel, reps


def _write_mc(w, reps):
    def rows():
        for r, tr in enumerate(reps):
            width = tr.max_mass + 1
            for t, row in zip(tr.times, tr.fractions):
                for j in range(width):
                    yield (float(t), j, float(row[j]), r)
    w.csv("mc.csv", ["t", "j", "c", "replica"], rows())


def _mode_mc(cfg, w, jobs):
    _, reps = _mc_ensemble(cfg, jobs)
    _write_mc(w, reps)
    w.json("mc.json", {"sites": reps[0].L, "replicas": len(reps),
                       "n_events": [tr.n_events for tr in reps],
                       "seeds": [tr.seed for tr in reps]})
    return "completed", None, False


def _mode_mc_compare(cfg, w, jobs):
    kernel, reps = _mc_ensemble(cfg, jobs)
    _write_mc(w, reps)
    mean = ensemble_mean(reps)
    traj = integrate(kernel, init_distribution(build_initial(cfg), cfg["truncation.N"]),
                     build_solver(cfg, cfg["mc.snapshot_every"]))
    if traj.outcome != "completed":
        return traj.outcome, _conservation_dict(traj), True
    d = compare_to_meanfield(mean, traj)
    w.csv("compare.csv", ["t", "tv", "sup"],
          ((float(t), float(a), float(b)) for t, a, b in zip(d.times, d.tv, d.sup)))
    w.json("compare.json", {"times": d.times, "tv": d.tv, "sup": d.sup,
                            "sites": mean.L, "replicas": mean.replicas})
    return "completed", _conservation_dict(traj), False


_MODES = {
    "run": _mode_run,
    "convergence": _mode_convergence,
    "gelscan": _mode_gelscan,
    "blowup": _mode_blowup,
    "mc": _mode_mc,
    "mc-compare": _mode_mc_compare,
}


def _resolve_out(cfg, out_dir):
    out = out_dir or cfg["output.dir"] or os.environ.get("EDG_OUT_DIR")
    if not out:
        raise ConfigError("output.dir", "no output directory (use --out, output.dir or EDG_OUT_DIR)")
    return out


def run_scenario(cfg, out_dir=None, jobs=None):
    """Execute one scenario and write its artifacts plus ``report.json``.

    Every artifact except ``report.json`` is a pure function of the config
    and seed; the report lists their SHA-256 hashes.
    """
    start = time.perf_counter()
    jobs = jobs or cfg["jobs"]
    w = _Writer(_resolve_out(cfg, out_dir))
    w.json("config.json", cfg.echo())
    try:
        outcome, cons, unexpected_collapse = _MODES[cfg.mode](cfg, w, jobs)
    except (InvalidParameter, InvalidKernel, NormalizationExceeded, WrongRegime) as exc:
        raise ConfigError(cfg.mode, str(exc)) from exc
    report = RunReport(cfg.mode, outcome, cfg.echo(), time.perf_counter() - start,
                       manifest=w.manifest(), conservation=cons,
                       exit_code=EXIT_COLLAPSE if unexpected_collapse else EXIT_OK)
    (w.out / "report.json").write_text(json.dumps(_clean(report.to_json()), indent=2, sort_keys=True) + "\n")
    return report


# -- entry point -------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="edg", description="Exchange-driven growth scenarios")
    sub = p.add_subparsers(dest="command", required=True)
    for name in MODES + ("validate-config",):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, metavar="PATH")
        s.add_argument("--out", metavar="DIR")
        s.add_argument("--jobs", type=int, metavar="N")
        s.add_argument("--seed", type=int, metavar="S")
        s.add_argument("--sites", type=int)
        s.add_argument("--replicas", type=int)
        s.add_argument("--t-end", type=float)
        s.add_argument("--snapshot-every", type=float)
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args):
    out = {}
    if args.command != "validate-config":
        out["mode"] = args.command
    flags = {"seed": args.seed, "mc.sites": args.sites, "mc.replicas": args.replicas,
             "solver.t_end": args.t_end, "mc.snapshot_every": args.snapshot_every}
    out.update({k: v for k, v in flags.items() if v is not None})
    for item in args.set:
        if "=" not in item:
            raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "validate-config":
            print(f"{args.config}: ok (mode={cfg.mode})")
            return EXIT_OK
        report = run_scenario(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteRHS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    print(f"{report.mode}: {report.outcome} ({len(report.manifest)} files)")
    if report.exit_code == EXIT_COLLAPSE:
        print("step-collapse before t_end", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
