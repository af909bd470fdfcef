"""Command line runner.

::

    hilbert-diffuse <command> --scenario <path> --out <dir> [--seed U64] [--jobs N]

Every command writes ``report.json`` (pretty-printed, sorted keys) plus CSV
artifacts into ``--out``.  Exit status: 0 when every asserted property holds,
2 when a probe is inconclusive (zero hits), 1 on failure or error.
The seed is taken from ``--seed``, then the scenario's ``seed`` key, then the
``HD_SEED`` environment variable, then 0.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import traceback
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import HilbertDiffuseError
from .kolmogorov_oracle import (
    bump,
    box_half_width,
    compare_mc_fp,
    evolve_fp,
    fp_drift,
    gaussian_density,
    weak_identity_residual,
)
from .positivity_lab import (
    INCONCLUSIVE,
    chain_experiment,
    hit_probability,
    lemma_stay_check,
    tau_of_r,
)
from .proof_observables import diagnostics, novikov_demo
from .q_wiener import empirical_covariance
from .sde_engine import in_chunks, integrate_bounded, integrate_mild
from .spectral_space import contains, Ellipsoid

log = logging.getLogger("hilbert_diffuse")

COMMANDS = ("simulate", "wiener-check", "positivity", "lemma-tau", "chain", "observables",
            "novikov", "oracle-compare", "weak-identity")

OK, FAIL, INCONCLUSIVE_STATUS = 0, 1, 2

# catalog of test functions used by weak-identity, on the first two coordinates
WEAK_CATALOG = {
    "bump_x1": bump(0, 0.0, 1.0),
    "bump_x1x2": bump((0, 1), (0.2, 0.0), (1.0, 0.5)),
    "bump_x2": bump(1, 0.0, 0.5),
}


@dataclass
class ExperimentConfig:
    command: str
    scenario: Path
    out: Path
    seed: int | None = None
    jobs: int = 1


def _resolve_seed(cli_seed, raw) -> int:
    if cli_seed is not None:
        return int(cli_seed)
    if raw.get("seed") is not None:
        return int(raw["seed"])
    env = os.environ.get("HD_SEED")
    return int(env) if env else 0


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _full_integrator(sc):
    if sc.operator is None:
        return integrate_bounded, (sc.initial, sc.drift)
    return integrate_mild, (sc.initial, sc.operator, sc.drift)


def _chunk_size(sc):
    steps = max(1, round(sc.T / sc.h)) + 1
    return max(1, (1 << 21) // (steps * sc.spectrum.dim))


# ---------------------------------------------------------------------------
# commands: each returns (status, result dict) and may write CSV files into out


def cmd_simulate(sc, raw, out):
    batch = sc.integrate(record_times=sc.probes)
    batch.export_csv(out / "trajectories.csv")
    batch.export_json(out / "summary.json")
    return OK, {"summary": batch.summary()}


def cmd_wiener_check(sc, raw, out):
    from .q_wiener import sample_paths

    paths = sample_paths(sc.spectrum, sc.T, sc.h, sc.N, sc.seed, record_times=sc.probes)
    d = sc.spectrum.dim
    eye = np.eye(d)
    rows, worst = [], 0.0
    for t in sc.probes:
        for s in sc.probes:
            for i in range(d):
                for j in range(d):
                    est = empirical_covariance(paths, t, s, eye[i], eye[j])
                    z = abs(est.value - est.expected) / est.stderr if est.stderr > 0 else 0.0
                    worst = max(worst, z)
                    rows.append([repr(float(t)), repr(float(s)), i + 1, j + 1, repr(est.value),
                                 repr(est.stderr), repr(est.expected)])
    _write_csv(out / "covariance.csv", ["t", "s", "i", "j", "estimate", "stderr", "expected"], rows)
    return (OK if worst <= 4 else FAIL), {"max_z": worst, "n_checks": len(rows), "z_limit": 4}


def cmd_positivity(sc, raw, out):
    rep = hit_probability(sc)
    rep.export(out / "positivity.json", out / "positivity.csv")
    status = INCONCLUSIVE_STATUS if rep.inconclusive else OK
    return status, {"positivity": rep.to_dict(), "inconclusive_probes": rep.inconclusive}


def cmd_lemma_tau(sc, raw, out):
    R = sc.target.radius
    result = {"R": R, "tau_q": tau_of_r(R, sc.drift, "q_norm"), "tau_h": tau_of_r(R, sc.drift, "h_norm")}
    half = Ellipsoid(sc.target.center, R / 2, sc.spectrum)
    law = sc.initial
    if law.kind == "dirac" and contains(half, law.point):
        kwargs = {"probes": sc.probes} if "probes" in raw else {}
        rep = lemma_stay_check(sc, **kwargs)
        result["lemma"] = rep.to_dict()
        _write_csv(out / "lemma.csv", ["t", "drift_qnorm_max", "escape_ci_high", "hit_ci_low"],
                   [[repr(float(t)), repr(float(m)), repr(e.ci[1]), repr(hh.ci[0])]
                    for t, m, e, hh in zip(rep.probes, rep.drift_qnorm_max, rep.escape, rep.hits)])
        return (OK if rep.ok else FAIL), result
    result["lemma"] = "skipped: initial law is not a point inside K_{R/2}(a)"
    return OK, result


def cmd_chain(sc, raw, out):
    M = float(raw["M"]) if raw.get("M") is not None else sc.T
    rep = chain_experiment(sc, M)
    rep.report.export(out / "chain.json", out / "chain.csv")
    if not rep.markov_consistent:
        status = FAIL
    elif INCONCLUSIVE in rep.interval_verdicts:
        status = INCONCLUSIVE_STATUS
    else:
        status = OK
    return status, {"chain": rep.to_dict()}


def cmd_observables(sc, raw, out):
    integ, lead = _full_integrator(sc)
    N = sc.initial.N if sc.initial.kind == "shell" else None
    qv, mins, degenerate, first = [], [], 0, None
    for b in in_chunks(integ, sc.N, _chunk_size(sc), *lead, sc.spectrum, sc.T, sc.h, seed=sc.seed, jobs=sc.jobs):
        diag = diagnostics(b, N)
        if first is None:
            first = diag
            diag.export(out / "diagnostics_first_chunk.json", out / "series.csv")
        qv.append(diag.qv)
        mins.append(diag.min_statistic)
        degenerate += diag.degenerate_steps
    qv, mins = np.concatenate(qv), np.concatenate(mins)
    se = float(qv.std(ddof=1) / np.sqrt(qv.size)) if qv.size > 1 else 0.0
    result = {
        "lambda": first.lam, "C": first.C, "N": first.N,
        "qv_mean": float(qv.mean()), "qv_stderr": se, "T": sc.T,
        "min_statistic": float(mins.min()), "degenerate_steps": degenerate,
    }
    checks = {
        "no_degenerate_steps": degenerate == 0,
        "qv_matches_T": abs(result["qv_mean"] - sc.T) <= max(3 * se, 0.05 * sc.T),
        "lower_bound_holds": result["min_statistic"] >= -first.C - 0.1,
    }
    result["checks"] = checks
    return (OK if all(checks.values()) else FAIL), result


def cmd_novikov(sc, raw, out):
    h = sc.h if "h" in raw else 1e-4
    rep = novikov_demo(sc.T, sc.N, sc.seed, h)
    _write_csv(out / "novikov.csv", ["quantity", "value"],
               [[k, repr(v)] for k, v in sorted(rep.to_dict().items())])
    checks = {"residual_milstein": rep.residual_milstein <= 1e-2,
              "integral_above_minus_one": rep.min_integral >= -1 - 1e-2}
    return (OK if all(checks.values()) else FAIL), {"novikov": rep.to_dict(), "checks": checks}


def cmd_oracle_compare(sc, raw, out):
    d = sc.spectrum.dim
    if d > 2:
        raise HilbertDiffuseError("oracle-compare needs spectrum.dim of 1 or 2")
    cells = int(float(raw.get("oracle.cells", 200)))
    integ, lead = _full_integrator(sc)
    batch = integ(*lead, sc.spectrum, sc.T, sc.h, sc.N, sc.seed, record_times=[sc.T], jobs=sc.jobs)
    law = sc.initial
    if law.kind == "dirac":
        mean, std0 = law.point, None
    elif law.kind == "gaussian":
        mean, std0 = law.mean, np.sqrt(law.variances)
    else:
        raise HilbertDiffuseError("oracle-compare supports dirac and gaussian initial laws")
    sup_b = sc.drift.sup_h
    L = box_half_width(sc.spectrum.q, sc.T, float(np.linalg.norm(mean)), sup_b)
    cell = 2 * L / cells
    rho0 = gaussian_density(L, cells, mean, 2 * cell if std0 is None else std0)
    rho0.meta["drift"] = sc.drift.name
    dt = float(raw["oracle.dt"]) if raw.get("oracle.dt") is not None else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rho = evolve_fp(rho0, fp_drift(sc.drift, sc.operator), sc.spectrum.q, sc.T, dt)
    tv = compare_mc_fp(batch, rho, sc.T)
    rho.export(out / "density.csv", out / "density.json")
    result = {"tv": tv, "mass_drift": rho.meta["mass_drift"], "min_value": rho.meta["min_value"],
              "boundary_mass": rho.meta["boundary_mass"], "L": L, "cells": cells,
              "warnings": [str(w.message) for w in caught]}
    ok = tv <= 0.05 and rho.meta["mass_drift"] <= 1e-6
    return (OK if ok else FAIL), result


def cmd_weak_identity(sc, raw, out):
    if sc.spectrum.dim < 2:
        catalog = {k: v for k, v in WEAK_CATALOG.items() if max(v.coords) == 0}
    else:
        catalog = WEAK_CATALOG
    integ, lead = _full_integrator(sc)
    result, ok, rows = {}, True, []
    for name, phi in catalog.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = weak_identity_residual(
                in_chunks(integ, sc.N, _chunk_size(sc), *lead, sc.spectrum, sc.T, sc.h, seed=sc.seed),
                phi, sc.T)
        bound = 3 * res.stderr + 10 * sc.h
        result[name] = {"residual": res.residual, "stderr": res.stderr, "bound": bound,
                        "support_warning": res.support_warning}
        rows.append([name, repr(res.residual), repr(res.stderr), repr(bound)])
        ok &= res.residual <= bound
    _write_csv(out / "weak_identity.csv", ["phi", "residual", "stderr", "bound"], rows)
    return (OK if ok else FAIL), result


HANDLERS = {
    "simulate": cmd_simulate,
    "wiener-check": cmd_wiener_check,
    "positivity": cmd_positivity,
    "lemma-tau": cmd_lemma_tau,
    "chain": cmd_chain,
    "observables": cmd_observables,
    "novikov": cmd_novikov,
    "oracle-compare": cmd_oracle_compare,
    "weak-identity": cmd_weak_identity,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def run(config: ExperimentConfig) -> int:
    """Execute one command and write its report; returns the exit status."""
    start = time.perf_counter()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"command": config.command, "scenario_file": str(config.scenario)}
    status = FAIL
    try:
        if config.command not in HANDLERS:
            raise HilbertDiffuseError(f"unknown command {config.command!r}")
        raw = cfgmod.load_scenario(config.scenario)
        problems = cfgmod.validate(raw, config.command)
        if problems:
            report["diagnostics"] = problems
            raise HilbertDiffuseError("invalid scenario: " + "; ".join(problems))
        seed = _resolve_seed(config.seed, raw)
        sc = cfgmod.build_scenario(raw, seed, config.jobs)
        report.update({"seed": seed, "config": {"raw": raw, "scenario": sc.describe()}})
        status, result = HANDLERS[config.command](sc, raw, out)
        report["summary"] = result
    except HilbertDiffuseError as exc:
        report["error"] = f"{type(exc).__name__} in {_origin(exc)}: {exc}"
        status = FAIL
    except Exception as exc:  # numerical aborts and bugs still produce a report
        report["error"] = f"{type(exc).__name__} in {_origin(exc)}: {exc}"
        report["traceback"] = traceback.format_exc()
        status = FAIL
    report["status"] = status
    report["wall_time"] = time.perf_counter() - start
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if "error" in report:
        log.error(report["error"])
    return status


def _origin(exc) -> str:
    tb = exc.__traceback__
    module = "hilbert_diffuse"
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("hilbert_diffuse"):
            module = name
        tb = tb.tb_next
    return module


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hilbert-diffuse", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", required=True, type=Path)
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    return run(ExperimentConfig(args.command, args.scenario, args.out, args.seed, args.jobs))


if __name__ == "__main__":
    sys.exit(main())
