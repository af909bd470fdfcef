"""Stochastic functionals of simulated paths that drive the positivity argument.

All stochastic integrals are left-point (Ito) sums on the integrator's own grid,
driven by the integrator's own Wiener increments, which are regenerated from the
batch's random streams.  Functions taking a ``batch`` need every grid point to
be recorded.

Notation: ``zeta_t = ||X_t||^2``, ``v_t = 2 ||X_t||_Q`` and the projected
martingale ``dw = <X, dW> / ||X||_Q``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import PreconditionError
from .q_wiener import standard_normals
from .sde_engine import DriftModel, TrajectoryBatch
from .spectral_space import CovarianceSpectrum

__all__ = [
    "zeta_path",
    "phi_identity",
    "projected_martingale",
    "quadratic_variation",
    "c_constant",
    "lower_bound_statistic",
    "gronwall_excess",
    "time_change",
    "NOT_REACHED",
    "novikov_demo",
    "reflected_surrogate",
    "diagnostics",
    "DiagnosticsReport",
]

NOT_REACHED = -1


def _require_full(batch: TrajectoryBatch):
    if not batch.is_full:
        raise PreconditionError("observables need every grid point recorded (record_times=None)")


def zeta_path(batch: TrajectoryBatch) -> np.ndarray:
    """Squared H-norm of every recorded state, shape ``(N, K)``."""
    return np.einsum("nkj,nkj->nk", batch.states, batch.states)


def phi_identity(x, spectrum: CovarianceSpectrum) -> np.ndarray:
    """``||Q^{1/2} x / ||x||_Q||^2`` for nonzero ``x``; identically one."""
    x = np.asarray(x, dtype=float)
    y = x * np.sqrt(spectrum.q)
    qn2 = np.einsum("...j,j,...j->...", x, spectrum.q, x)
    return np.einsum("...j,...j->...", y, y) / qn2


class ProjectedMartingale(NamedTuple):
    dw: np.ndarray          # (N, n_steps) increments, zero on degenerate steps
    degenerate: np.ndarray  # (N, n_steps) True where ||X||_Q == 0
    v: np.ndarray           # (N, n_steps + 1) values of 2 ||X||_Q


def projected_martingale(batch: TrajectoryBatch, increments=None) -> ProjectedMartingale:
    """Increments ``<X_k, dW_k> / ||X_k||_Q`` with left-point evaluation.

    Steps where ``||X_k||_Q = 0`` are flagged and contribute zero.
    """
    _require_full(batch)
    dW = batch.wiener_increments() if increments is None else np.asarray(increments)
    X = batch.states
    qn = np.sqrt(np.einsum("nkj,j,nkj->nk", X, batch.spectrum.q, X))
    left = qn[:, :-1]
    degenerate = left == 0
    proj = np.einsum("nkj,nkj->nk", X[:, :-1], dW)
    with np.errstate(divide="ignore", invalid="ignore"):
        dw = np.where(degenerate, 0.0, proj / np.where(degenerate, 1.0, left))
    return ProjectedMartingale(dw, degenerate, 2.0 * qn)


def quadratic_variation(dw) -> np.ndarray | float:
    """Realized quadratic variation ``sum (dw)^2`` along the last axis."""
    out = np.sum(np.square(dw), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def c_constant(N: float, T: float, spectrum: CovarianceSpectrum, F: DriftModel) -> tuple[float, float]:
    """``lambda = tr Q + sup||F||^2`` and ``C = (N^2 + T lambda)(1 + T e^T)``.

    ``tr Q`` is the trace of the truncated spectrum.
    """
    if not (N > 0 and T > 0):
        raise PreconditionError("N and T must be positive")
    lam = spectrum.trace + F.sup_h**2
    return lam, (N**2 + T * lam) * (1 + T * np.exp(T))


def _weighted_integral(v, dw, h, discount: bool = True):
    """Running left-point sums ``sum_{i<k} e^{-t_i} v_i dw_i`` including ``k = 0``."""
    n = dw.shape[-1]
    w = np.exp(-h * np.arange(n)) if discount else 1.0
    inc = w * v[..., :n] * dw
    out = np.zeros(dw.shape[:-1] + (n + 1,))
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    return out


class LowerBoundStatistic(NamedTuple):
    statistic: np.ndarray  # per-path min over the grid of the discounted integral
    degenerate_steps: int


def lower_bound_statistic(batch: TrajectoryBatch, increments=None) -> LowerBoundStatistic:
    """Per-path ``min_t int_0^t e^{-s} v_s dw_s`` with ``v = 2 ||X||_Q``.

    The value at ``t = 0`` (zero) takes part in the minimum.
    """
    pm = projected_martingale(batch, increments)
    integral = _weighted_integral(pm.v, pm.dw, batch.h)
    return LowerBoundStatistic(integral.min(axis=-1), int(pm.degenerate.sum()))


def gronwall_excess(batch: TrajectoryBatch, N: float, increments=None) -> np.ndarray:
    """Per-path ``max_t (zeta_t - Psi_t - int_0^t zeta_s ds)``.

    ``Psi_t = N^2 + T lambda + int_0^t v dw`` with ``T`` the batch horizon.  A
    nonpositive value means the discrete Gronwall chain holds on that path.
    """
    pm = projected_martingale(batch, increments)
    lam, _ = c_constant(N, batch.T, batch.spectrum, batch.drift)
    zeta = zeta_path(batch)
    mart = _weighted_integral(pm.v, pm.dw, batch.h, discount=False)
    psi = N**2 + batch.T * lam + mart
    int_zeta = np.zeros_like(zeta)
    np.cumsum(zeta[:, :-1] * batch.h, axis=1, out=int_zeta[:, 1:])
    return np.max(zeta - psi - int_zeta, axis=1)


def time_change(v, h: float, gammas=()) -> tuple[np.ndarray, np.ndarray]:
    """Clock ``z_k = sum_{i<k} e^{-2 t_i} v_i^2 h`` and its first-passage indices.

    Parameters
    ----------
    v : array_like, shape (..., n + 1)
        Nonnegative values on the grid ``t_i = i h``.
    gammas : sequence of float
        Levels whose first passage ``min{k : z_k >= gamma}`` is wanted.

    Returns
    -------
    z : ndarray, shape (..., n + 1)
    tau : ndarray of int, shape (..., len(gammas))
        Grid indices, :data:`NOT_REACHED` where ``gamma > z_T``.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise PreconditionError("v must be nonnegative")
    n = v.shape[-1] - 1
    inc = np.exp(-2 * h * np.arange(n)) * v[..., :n] ** 2 * h
    z = np.zeros(v.shape)
    np.cumsum(inc, axis=-1, out=z[..., 1:])
    gammas = np.asarray(gammas, dtype=float)
    reached = z[..., None, :] >= gammas[:, None]
    first = np.argmax(reached, axis=-1)
    tau = np.where(reached.any(axis=-1), first, NOT_REACHED)
    return z, tau


@dataclass
class NovikovReport:
    T: float
    h: float
    n_paths: int
    min_integral: float          # min over paths and grid of the Euler sum of u dw
    residual_euler: float        # max |Euler sum - (u_t - 1)|
    residual_milstein: float     # same with the Milstein correction
    min_u: float                 # empirical min of u over paths and grid
    identity_at_zero: float      # |integral at t=0 - (u_0 - 1)|

    def to_dict(self) -> dict:
        return {k: float(v) if isinstance(v, (float, np.floating)) else v for k, v in self.__dict__.items()}


def novikov_demo(T: float, N: int, seed: int = 0, h: float = 1e-4, stream_offset: int = 0) -> NovikovReport:
    """Simulate ``u_t = exp(w_t - t/2)`` and check ``int_0^t u dw = u_t - 1`` pathwise.

    ``u`` is positive but has no positive lower bound; the stochastic integral
    stays above ``-1``.
    """
    from .sde_engine import grid_steps

    n_steps = grid_steps(T, h)
    ids = stream_offset + np.arange(N, dtype=np.uint64)
    dw = standard_normals(seed, ids, n_steps, 1)[..., 0] * np.sqrt(h)
    t = h * np.arange(n_steps + 1)
    w = np.zeros((N, n_steps + 1))
    np.cumsum(dw, axis=1, out=w[:, 1:])
    u = np.exp(w - t / 2)
    euler = np.zeros_like(w)
    np.cumsum(u[:, :-1] * dw, axis=1, out=euler[:, 1:])
    mil = np.zeros_like(w)
    np.cumsum(u[:, :-1] * (dw + 0.5 * (dw**2 - h)), axis=1, out=mil[:, 1:])
    return NovikovReport(
        T=T, h=h, n_paths=N,
        min_integral=float(euler.min()),
        residual_euler=float(np.abs(euler - (u - 1)).max()),
        residual_milstein=float(np.abs(mil - (u - 1)).max()),
        min_u=float(u.min()),
        identity_at_zero=float(abs(euler[:, 0] - (u[:, 0] - 1)).max()),
    )


class SurrogateResult(NamedTuple):
    statistic: np.ndarray   # per-path min of the discounted integral
    z_T: np.ndarray         # per-path clock at the horizon
    clock_floor: float      # deterministic lower bound T (2R)^2 e^{-2T}
    y: np.ndarray           # (N, len(gammas)) time-changed integral at tau_gamma
    gammas: np.ndarray


def reflected_surrogate(R: float, T: float, h: float, n_paths: int, seed: int = 0,
                        x0: float | None = None, gammas=()) -> SurrogateResult:
    """One-dimensional walk reflected at ``R`` so that ``v = 2|X| >= 2R`` throughout.

    This is the regime the contradiction argument rules out for the real
    process: the clock ``z`` grows at least linearly, and the time-changed
    integral ``y_gamma`` behaves as a Brownian motion, so the discounted integral
    has no deterministic lower bound.
    """
    from .sde_engine import grid_steps

    n_steps = grid_steps(T, h)
    x = np.full(n_paths, 2.0 * R if x0 is None else float(x0))
    if np.any(x < R):
        raise PreconditionError("surrogate must start at or above R")
    dW = standard_normals(seed, np.arange(n_paths, dtype=np.uint64), n_steps, 1)[..., 0] * np.sqrt(h)
    X = np.empty((n_paths, n_steps + 1))
    X[:, 0] = x
    for k in range(n_steps):
        x = R + np.abs(x + dW[:, k] - R)
        X[:, k + 1] = x
    v = 2.0 * X
    dw = np.sign(X[:, :-1]) * dW
    integral = _weighted_integral(v, dw, h)
    z, tau = time_change(v, h, gammas)
    gammas = np.asarray(gammas, dtype=float)
    y = np.where(tau >= 0, np.take_along_axis(integral, np.maximum(tau, 0), axis=1), np.nan)
    return SurrogateResult(integral.min(axis=1), z[:, -1], T * (2 * R) ** 2 * np.exp(-2 * T), y, gammas)


@dataclass
class DiagnosticsReport:
    """Per-path series and scalars computed from one batch."""

    times: np.ndarray
    zeta: np.ndarray
    dw: np.ndarray
    z: np.ndarray
    lam: float
    C: float
    N: float
    qv: np.ndarray
    min_statistic: np.ndarray
    degenerate_steps: int
    scalars: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.degenerate_steps == 0

    def summary(self) -> dict:
        return {
            "lambda": float(self.lam),
            "C": float(self.C),
            "N": float(self.N),
            "qv_mean": float(self.qv.mean()),
            "qv_stderr": float(self.qv.std(ddof=1) / np.sqrt(self.qv.size)) if self.qv.size > 1 else 0.0,
            "min_statistic": float(self.min_statistic.min()),
            "degenerate_steps": int(self.degenerate_steps),
            "zeta_nonnegative": bool(np.all(self.zeta >= 0)),
            "z_nondecreasing": bool(np.all(np.diff(self.z, axis=1) >= 0)),
            **self.scalars,
        }

    def export(self, json_path, csv_path, max_paths: int = 10) -> None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["path", "t", "zeta", "dw", "z"])
            for i in range(min(max_paths, self.zeta.shape[0])):
                for k, t in enumerate(self.times):
                    dw = self.dw[i, k] if k < self.dw.shape[1] else float("nan")
                    wr.writerow([i, repr(float(t)), repr(float(self.zeta[i, k])), repr(float(dw)),
                                 repr(float(self.z[i, k]))])


def diagnostics(batch: TrajectoryBatch, N: float | None = None) -> DiagnosticsReport:
    """All observables of one batch.

    ``N`` bounds the initial H-norm; by default it is the largest observed
    ``||X_0||`` (the shell radius for shell laws).
    """
    _require_full(batch)
    zeta = zeta_path(batch)
    if N is None:
        N = batch.law.N if batch.law.kind == "shell" else float(np.sqrt(zeta[:, 0].max()))
        N = max(N, 1e-12)
    dW = batch.wiener_increments()
    pm = projected_martingale(batch, dW)
    z, _ = time_change(pm.v, batch.h)
    lam, C = c_constant(N, batch.T, batch.spectrum, batch.drift)
    integral = _weighted_integral(pm.v, pm.dw, batch.h)
    return DiagnosticsReport(
        times=batch.times, zeta=zeta, dw=pm.dw, z=z, lam=lam, C=C, N=N,
        qv=quadratic_variation(pm.dw), min_statistic=integral.min(axis=-1),
        degenerate_steps=int(pm.degenerate.sum()),
    )
