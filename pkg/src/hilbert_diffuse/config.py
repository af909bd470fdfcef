"""Flat ``key = value`` scenario files.

Lines are ``key = value``; blank lines and lines starting with ``#`` are
ignored.  Vectors are comma-separated numbers, zero-padded to the spectrum
dimension (``target.center = 3`` means ``3 e_1``).  Unknown keys are errors.

Keys
----
model            bounded | linear                      (default bounded)
drift            zero | constant | tanh | nonlipschitz (default zero)
drift.c          constant drift magnitude along e_1    (default 1)
spectrum         poly2 | geom2 | custom                (default poly2)
spectrum.dim     truncation level d                    (default 16)
spectrum.q       eigenvalues, required for custom
operator         heat | shifted                        (linear model, default heat)
operator.eps     spectral gap of the shifted preset    (default 1)
initial          dirac | gaussian | shell              (default dirac)
initial.point    dirac location                        (default 0)
initial.mean     gaussian mean                         (default 0)
initial.var      gaussian variances                    (default 1)
initial.N        shell outer radius
initial.delta    shell inner radius
target.center    ellipsoid center                      (default 0)
target.radius    ellipsoid radius                      (default 1)
T                horizon                               (default 1)
h                time step                             (default 1e-3)
N                number of paths                       (default 10000)
seed             unsigned 64-bit seed
probes           list of times, or ``geometric:n``     (default geometric:6)
M                chain horizon                         (default T)
oracle.cells     cells per axis of the Kolmogorov grid (default 200)
oracle.dt        Kolmogorov time step                  (default 0.9 of the stability limit)
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .kolmogorov_oracle import GridDensity, box_half_width, stable_dt
from .positivity_lab import Scenario, geometric_probes, tau_of_r
from .sde_engine import DRIFT_PRESETS, DriftModel, InitialLaw, LinearOperator
from .spectral_space import SPECTRUM_PRESETS, CovarianceSpectrum, Ellipsoid, validate_spectrum

__all__ = ["KEYS", "parse_scenario", "load_scenario", "build_scenario", "validate"]

KEYS = {
    "model": "bounded",
    "drift": "zero",
    "drift.c": "1",
    "spectrum": "poly2",
    "spectrum.dim": "16",
    "spectrum.q": None,
    "operator": "heat",
    "operator.eps": "1",
    "initial": "dirac",
    "initial.point": "0",
    "initial.mean": "0",
    "initial.var": "1",
    "initial.N": None,
    "initial.delta": None,
    "target.center": "0",
    "target.radius": "1",
    "T": "1",
    "h": "1e-3",
    "N": "10000",
    "seed": None,
    "probes": "geometric:6",
    "M": None,
    "oracle.cells": "200",
    "oracle.dt": None,
}

ORACLE_COMMANDS = ("oracle-compare",)


def parse_scenario(text: str) -> dict:
    """Parse scenario text into a raw ``{key: value}`` dict, rejecting unknown or repeated keys."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_scenario(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _get(raw, key):
    return raw.get(key, KEYS[key])


def _float(raw, key) -> float:
    v = _get(raw, key)
    if v is None:
        raise ConfigurationError(f"key {key!r} is required")
    try:
        return float(v)
    except ValueError:
        raise ConfigurationError(f"key {key!r}: {v!r} is not a number") from None


def _int(raw, key) -> int:
    v = _float(raw, key)
    if v != int(v):
        raise ConfigurationError(f"key {key!r}: {v} is not an integer")
    return int(v)


def _list(raw, key) -> np.ndarray:
    v = _get(raw, key)
    if v is None:
        raise ConfigurationError(f"key {key!r} is required")
    try:
        return np.array([float(s) for s in v.replace(";", ",").split(",") if s.strip()])
    except ValueError:
        raise ConfigurationError(f"key {key!r}: {v!r} is not a list of numbers") from None


def _vector(raw, key, dim) -> np.ndarray:
    v = _list(raw, key)
    if v.size > dim:
        raise ConfigurationError(f"key {key!r} has {v.size} entries but dimension is {dim}")
    return np.concatenate([v, np.zeros(dim - v.size)])


def _spectrum(raw) -> CovarianceSpectrum:
    name = _get(raw, "spectrum")
    if name == "custom":
        return CovarianceSpectrum.preset("custom", 0, _list(raw, "spectrum.q"))
    return CovarianceSpectrum.preset(name, _int(raw, "spectrum.dim"))


def _probes(raw, T, h) -> np.ndarray:
    v = _get(raw, "probes")
    if v.startswith("geometric:"):
        return geometric_probes(T, int(v.split(":", 1)[1]), h)
    return _list(raw, "probes")


def build_scenario(raw: dict, seed: int = 0, jobs: int = 1) -> Scenario:
    """Turn a parsed scenario into a :class:`Scenario`."""
    sp = _spectrum(raw)
    d = sp.dim
    drift_name = _get(raw, "drift")
    params = {"c": _float(raw, "drift.c")} if drift_name == "constant" else {}
    F = DriftModel.preset(drift_name, sp, **params)
    kind = _get(raw, "initial")
    if kind == "dirac":
        law = InitialLaw.dirac(_vector(raw, "initial.point", d))
    elif kind == "gaussian":
        var = _list(raw, "initial.var")
        var = np.full(d, var[0]) if var.size == 1 else _vector(raw, "initial.var", d)
        law = InitialLaw.gaussian(_vector(raw, "initial.mean", d), var)
    elif kind == "shell":
        law = InitialLaw.shell(_float(raw, "initial.N"), _float(raw, "initial.delta"))
    else:
        raise ConfigurationError(f"key 'initial': unknown law {kind!r}")
    model = _get(raw, "model")
    if model == "bounded":
        op = None
    elif model == "linear":
        op = LinearOperator.preset(_get(raw, "operator"), d, _float(raw, "operator.eps"))
    else:
        raise ConfigurationError(f"key 'model': expected 'bounded' or 'linear', got {model!r}")
    target = Ellipsoid(_vector(raw, "target.center", d), _float(raw, "target.radius"), sp)
    T, h = _float(raw, "T"), _float(raw, "h")
    return Scenario(sp, F, law, target, T, _probes(raw, T, h), _int(raw, "N"), seed, h, op, jobs)


def validate(raw_or_path, command: str | None = None) -> list[str]:
    """Diagnostics for a scenario; an empty list means it is runnable."""
    try:
        raw = load_scenario(raw_or_path) if not isinstance(raw_or_path, dict) else raw_or_path
    except (OSError, ConfigurationError) as exc:
        return [str(exc)]
    problems = []
    name = _get(raw, "spectrum")
    try:
        if name == "custom":
            problems += validate_spectrum(_list(raw, "spectrum.q"))
        elif name not in SPECTRUM_PRESETS:
            problems.append(f"unknown spectrum preset {name!r}")
    except ConfigurationError as exc:
        problems.append(str(exc))
    if _get(raw, "drift") not in DRIFT_PRESETS:
        problems.append(f"unknown drift preset {_get(raw, 'drift')!r}")
    if _get(raw, "initial") == "shell":
        try:
            N, delta = _float(raw, "initial.N"), _float(raw, "initial.delta")
            if not N > delta > 0:
                problems.append(f"shell law requires N > delta > 0, got N={N}, delta={delta}")
        except ConfigurationError as exc:
            problems.append(str(exc))
    if problems:
        return problems
    try:
        sc = build_scenario(raw)
    except ConfigurationError as exc:
        return [str(exc)]
    n = sc.T / sc.h
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        problems.append(f"T={sc.T} is not a multiple of h={sc.h}")
    off = [t for t in sc.probes if abs(t / sc.h - round(t / sc.h)) > 1e-9 * max(1.0, t / sc.h)]
    if off:
        problems.append(f"probe times {off} are not on the grid of step {sc.h}")
    if command == "lemma-tau":
        tau = tau_of_r(sc.target.radius, sc.drift)
        explicit = "probes" in raw
        if explicit and np.any(sc.probes > tau * (1 + 1e-9)):
            problems.append(f"lemma probes must not exceed tau(R)={tau}")
    if command == "chain" and "M" in raw:
        tau = tau_of_r(sc.target.radius, sc.drift)
        if not _float(raw, "M") > tau:
            problems.append(f"chain horizon M must exceed tau(R)={tau}")
    if command in ORACLE_COMMANDS:
        if sc.spectrum.dim > 2:
            problems.append("oracle commands need spectrum.dim of 1 or 2")
        elif raw.get("oracle.dt") is not None:
            cells = _int(raw, "oracle.cells")
            L = box_half_width(sc.spectrum.q, sc.T, 0.0, sc.drift.sup_h)
            g = GridDensity(L, np.zeros((cells,) * sc.spectrum.dim))
            bound = sc.drift.sup_h + (0 if sc.operator is None else float(sc.operator.a.max()) * L)
            lim = stable_dt(g, sc.spectrum.q, bound * sc.spectrum.dim)
            if _float(raw, "oracle.dt") > lim:
                problems.append(f"oracle.dt exceeds the stability limit; use dt <= {lim:.6g}")
    return problems
