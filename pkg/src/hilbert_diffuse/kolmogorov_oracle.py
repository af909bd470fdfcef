"""Finite-volume solver for the Kolmogorov equation in one or two coordinates.

Solves ``d_t rho = sum_i (q_i / 2) d_ii rho - d_i (b_i rho)`` on the box
``[-L, L]^dim`` with zero flux through the boundary.  Fluxes are computed at cell
faces (central for diffusion, upwind for advection), so total mass changes only
by rounding.  The solver is an independent check on Monte Carlo marginals and,
through :func:`weak_identity_residual`, on the simulated generator.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigurationError, PreconditionError, StabilityError
from .sde_engine import DriftModel, LinearOperator, TrajectoryBatch

__all__ = [
    "GridDensity",
    "box_half_width",
    "gaussian_density",
    "fp_drift",
    "stable_dt",
    "evolve_fp",
    "compare_mc_fp",
    "CylindricalTestFunction",
    "bump",
    "weak_identity_residual",
    "WeakIdentityResult",
]

NEGATIVE_TOL = 1e-12
BOUNDARY_TOL = 1e-8


@dataclass
class GridDensity:
    """Cell-averaged density on a uniform grid over ``[-L, L]^dim``.

    ``values`` has shape ``(cells,) * dim``; cell mass is ``value * cell**dim``.
    """

    L: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.dim not in (1, 2):
            raise ConfigurationError("grid densities are limited to one or two dimensions")
        if len(set(self.values.shape)) != 1:
            raise ConfigurationError("grid must have the same cell count on every axis")

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def cells(self) -> int:
        return self.values.shape[0]

    @property
    def cell(self) -> float:
        return 2 * self.L / self.cells

    @property
    def centers(self) -> np.ndarray:
        return -self.L + self.cell * (np.arange(self.cells) + 0.5)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.cells + 1)

    def points(self) -> np.ndarray:
        """Cell centers as an array of shape ``(cells, ..., dim)``."""
        axes = np.meshgrid(*([self.centers] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    def masses(self) -> np.ndarray:
        return self.values * self.cell**self.dim

    @property
    def mass(self) -> float:
        return float(self.masses().sum())

    def boundary_mass(self) -> float:
        m = self.masses()
        inner = m[(slice(1, -1),) * self.dim]
        return float(m.sum() - inner.sum())

    def mean(self) -> np.ndarray:
        m = self.masses()
        pts = self.points()
        return np.tensordot(m, pts, axes=self.dim) / m.sum()

    def copy(self) -> "GridDensity":
        return GridDensity(self.L, self.values.copy(), dict(self.meta))

    def export(self, csv_path, json_path) -> None:
        """CSV of cell centers and values, plus a JSON sidecar with the box."""
        pts = self.points().reshape(-1, self.dim)
        vals = self.values.reshape(-1)
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.dim)] + ["density"])
            for p, v in zip(pts, vals):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump({"dim": self.dim, "L": self.L, "cells": self.cells, "meta": self.meta},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, csv_path, json_path) -> "GridDensity":
        with open(json_path, encoding="utf-8") as fh:
            side = json.load(fh)
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        shape = (side["cells"],) * side["dim"]
        return cls(side["L"], data[:, -1].reshape(shape), side.get("meta", {}))


def box_half_width(q, T: float, mean_norm: float = 0.0, sup_b: float = 0.0) -> float:
    """``max(6 sqrt(max q * T) + |mean| + sup|b| T, 8)``."""
    return max(6 * np.sqrt(np.max(q) * T) + mean_norm + sup_b * T, 8.0)


def gaussian_density(L: float, cells: int, mean, std) -> GridDensity:
    """Product Gaussian sampled at cell centers and renormalized to unit mass."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    std = np.broadcast_to(np.asarray(std, dtype=float), mean.shape)
    g = GridDensity(L, np.zeros((cells,) * mean.size))
    pts = g.points()
    vals = np.exp(-0.5 * np.sum(((pts - mean) / std) ** 2, axis=-1))
    g.values = vals / (vals.sum() * g.cell**mean.size)
    return g


def fp_drift(F: DriftModel, operator: LinearOperator | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Coordinates ``b = A x + F(x)`` of the full drift as a callable on points."""
    if operator is None:
        return F.evaluate
    return lambda x: operator.apply(x) + F.evaluate(x)


def _face_drift(b: Callable, g: GridDensity) -> list[np.ndarray]:
    """Drift component ``i`` evaluated at the interior faces normal to axis ``i``."""
    out = []
    c, e = g.centers, g.edges[1:-1]
    for i in range(g.dim):
        axes = [c] * g.dim
        axes[i] = e
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        out.append(b(pts)[..., i])
    return out


def stable_dt(g: GridDensity, q, max_b: float) -> float:
    """Largest step allowed by ``dt <= cell^2 / (2 sum q)`` and ``dt max|b| / cell <= 1/2``."""
    lim = g.cell**2 / (2 * float(np.sum(q)))
    if max_b > 0:
        lim = min(lim, 0.5 * g.cell / max_b)
    return lim


def evolve_fp(rho0: GridDensity, drift: Callable[[np.ndarray], np.ndarray], q, T: float,
              dt: float | None = None, record=None) -> GridDensity:
    """Explicit finite-volume evolution of ``rho0`` to time ``T``.

    Parameters
    ----------
    drift : callable
        Maps points of shape ``(..., dim)`` to drift vectors of the same shape.
    q : array_like
        Diffusion coefficients per axis.
    dt : float, optional
        Time step; defaults to 0.9 of the stability limit.  A step above the
        limit raises :class:`StabilityError` carrying the suggested value.
    record : list, optional
        If given, ``(t, mass, min_value)`` is appended after every step.

    Returns
    -------
    GridDensity
        Density at ``T``; ``meta`` holds ``mass_drift``, ``min_value``,
        ``clamped`` and ``boundary_mass``.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if q.size != rho0.dim:
        raise ConfigurationError("need one diffusion coefficient per grid axis")
    rho = rho0.copy()
    if T == 0:
        return rho
    if T < 0:
        raise PreconditionError("T must be nonnegative")
    faces = _face_drift(drift, rho)
    # the sum over axes keeps the explicit update monotone in two dimensions
    max_b = float(sum(np.abs(f).max() for f in faces))
    limit = stable_dt(rho, q, max_b)
    if dt is None:
        dt = 0.9 * limit
    if dt > limit * (1 + 1e-12):
        raise StabilityError(f"dt={dt} exceeds the stability limit {limit}", suggested_dt=limit)
    n = int(np.ceil(T / dt - 1e-12))
    dt = T / n

    h = rho.cell
    m0 = rho.mass
    min_value = float(rho.values.min())
    clamped = 0.0
    pos = [np.maximum(f, 0.0) for f in faces]
    neg = [np.minimum(f, 0.0) for f in faces]
    v = rho.values
    for step in range(n):
        div = np.zeros_like(v)
        for i in range(rho.dim):
            lo = [slice(None)] * rho.dim
            hi = [slice(None)] * rho.dim
            lo[i], hi[i] = slice(None, -1), slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            flux = pos[i] * v[lo] + neg[i] * v[hi] - 0.5 * q[i] * (v[hi] - v[lo]) / h
            div[lo] += flux
            div[hi] -= flux
        v = v - (dt / h) * div
        vmin = float(v.min())
        min_value = min(min_value, vmin)
        if vmin < 0:
            clamped += float(-v[v < 0].sum())
            v = np.maximum(v, 0.0)
        if record is not None:
            record.append(((step + 1) * dt, float(v.sum() * h**rho.dim), vmin))
    rho.values = v
    rho.meta.update({
        "T": T, "dt": dt, "steps": n, "mass_drift": abs(rho.mass - m0), "min_value": min_value,
        "clamped": clamped, "boundary_mass": rho.boundary_mass(),
    })
    if min_value < -NEGATIVE_TOL:
        warnings.warn(f"density undershoot {min_value:.3e} below tolerance", RuntimeWarning, stacklevel=2)
    if rho.meta["boundary_mass"] > BOUNDARY_TOL:
        rho.meta["boundary_warning"] = True
        warnings.warn(f"boundary mass {rho.meta['boundary_mass']:.3e} exceeds {BOUNDARY_TOL}; enlarge L",
                      RuntimeWarning, stacklevel=2)
    return rho


def compare_mc_fp(batch: TrajectoryBatch, rho: GridDensity, t: float, coords=None) -> float:
    """Total-variation distance between the histogram of ``X_t`` and ``rho``.

    Samples outside the box count as mismatched mass.  ``rho.meta['drift']``,
    when present, must name the batch's drift preset.
    """
    coords = tuple(range(rho.dim)) if coords is None else tuple(coords)
    if len(coords) != rho.dim:
        raise ConfigurationError("need one projection axis per grid dimension")
    name = rho.meta.get("drift")
    if name is not None and name != batch.drift.name:
        raise ConfigurationError(f"batch drift {batch.drift.name!r} does not match oracle drift {name!r}")
    x = batch.state_at(t)[:, coords]
    hist, _ = np.histogramdd(x, bins=[rho.edges] * rho.dim)
    p = hist / x.shape[0]
    outside = 1.0 - p.sum()
    return float(0.5 * (np.abs(p - rho.masses()).sum() + outside))


# ---------------------------------------------------------------------------
# weak identity


def _bump(u):
    """Standard bump ``exp(1 - 1/(1 - u^2))`` and its first two derivatives."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1
    s = np.where(inside, 1 - u**2, 1.0)
    g = 1 - 1 / s
    b = np.where(inside, np.exp(g), 0.0)
    g1 = -2 * u / s**2
    g2 = -2 / s**2 - 8 * u**2 / s**3
    return b, b * g1, b * (g1**2 + g2)


@dataclass(frozen=True)
class CylindricalTestFunction:
    """``phi(x) = prod_k bump((x_{c_k} - m_k) / w_k)``, depending on coordinates ``coords``.

    ``profile="zero"`` gives the zero function with the same support box.
    """

    coords: tuple
    center: tuple
    width: tuple
    profile: str = "bump"

    def __post_init__(self):
        if not (len(self.coords) == len(self.center) == len(self.width)):
            raise ConfigurationError("coords, center and width must have equal length")
        if self.profile not in ("bump", "zero"):
            raise ConfigurationError(f"unknown profile {self.profile!r}")
        if any(w <= 0 for w in self.width):
            raise ConfigurationError("widths must be positive")

    @property
    def m(self) -> int:
        return len(self.coords)

    def support_box(self) -> np.ndarray:
        c, w = np.asarray(self.center), np.asarray(self.width)
        return np.stack([c - w, c + w], axis=-1)

    def _factors(self, x):
        x = np.asarray(x, dtype=float)
        u = (x[..., list(self.coords)] - np.asarray(self.center)) / np.asarray(self.width)
        b, b1, b2 = _bump(u)
        w = np.asarray(self.width)
        return b, b1 / w, b2 / w**2

    def __call__(self, x) -> np.ndarray:
        b, _, _ = self._factors(x)
        out = np.prod(b, axis=-1)
        return np.zeros_like(out) if self.profile == "zero" else out

    def gradient(self, x) -> np.ndarray:
        """Partial derivatives along the active coordinates, shape ``(..., m)``."""
        b, b1, _ = self._factors(x)
        out = np.empty(b.shape)
        for k in range(self.m):
            out[..., k] = b1[..., k] * np.prod(np.delete(b, k, axis=-1), axis=-1)
        return np.zeros_like(out) if self.profile == "zero" else out

    def hessian_diag(self, x) -> np.ndarray:
        b, _, b2 = self._factors(x)
        out = np.empty(b.shape)
        for k in range(self.m):
            out[..., k] = b2[..., k] * np.prod(np.delete(b, k, axis=-1), axis=-1)
        return np.zeros_like(out) if self.profile == "zero" else out

    def generator(self, x, drift_values, q) -> np.ndarray:
        """``L phi = sum_i (q_i/2) d_ii phi + sum_i b_i d_i phi`` over active coordinates."""
        idx = list(self.coords)
        q = np.asarray(q, dtype=float)[idx]
        b = np.asarray(drift_values)[..., idx]
        return 0.5 * self.hessian_diag(x) @ q + np.sum(b * self.gradient(x), axis=-1)


def bump(coords, center, width) -> CylindricalTestFunction:
    """Catalog constructor for a product bump."""
    coords = tuple(int(c) for c in np.atleast_1d(coords))
    center = tuple(float(c) for c in np.broadcast_to(center, (len(coords),)))
    width = tuple(float(w) for w in np.broadcast_to(width, (len(coords),)))
    return CylindricalTestFunction(coords, center, width)


class WeakIdentityResult(NamedTuple):
    residual: float
    stderr: float
    n_paths: int
    support_warning: bool


def weak_identity_terms(batch: TrajectoryBatch, phi: CylindricalTestFunction, t: float) -> np.ndarray:
    """Per-path ``phi(X_t) - phi(X_0) - int_0^t L phi(X_s) ds`` (trapezoid in time)."""
    if not batch.is_full:
        raise PreconditionError("weak identity needs every grid point recorded")
    if max(phi.coords) >= batch.spectrum.dim:
        raise ConfigurationError("test function uses coordinates beyond the simulated dimension")
    k = batch.index_of(t)
    X = batch.states[:, : k + 1]
    b = fp_drift(batch.drift, batch.operator)(X)
    gen = phi.generator(X, b, batch.spectrum.q)
    integral = batch.h * (gen[:, 1:-1].sum(axis=1) + 0.5 * (gen[:, 0] + gen[:, -1]))
    return phi(X[:, -1]) - phi(X[:, 0]) - integral


def weak_identity_residual(batches, phi: CylindricalTestFunction, t: float) -> WeakIdentityResult:
    """``|E phi(X_t) - E phi(X_0) - int_0^t E L phi(X_s) ds|`` with its Monte Carlo standard error.

    ``batches`` is a batch or an iterable of batches (chunks of one run).  The
    drift ``b = A x + F(x)`` and the diffusion ``q`` are taken from the batch.
    """
    if isinstance(batches, TrajectoryBatch):
        batches = [batches]
    terms, warn = [], False
    box = phi.support_box()
    for b in batches:
        terms.append(weak_identity_terms(b, phi, t))
        x = b.states[..., list(phi.coords)]
        warn |= bool(np.any(x.min(axis=(0, 1)) > box[:, 0]) or np.any(x.max(axis=(0, 1)) < box[:, 1]))
    r = np.concatenate(terms)
    if warn:
        warnings.warn("test function support exceeds the sampled range", RuntimeWarning, stacklevel=2)
    se = float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else 0.0
    return WeakIdentityResult(float(abs(r.mean())), se, int(r.size), warn)
