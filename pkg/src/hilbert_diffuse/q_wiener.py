"""Q-Wiener process sampling through its eigen-expansion.

Random streams
--------------
Every trajectory owns a counter-based Philox stream keyed by
``(seed, stream_id)``: the 128-bit key is ``seed | stream_id << 64``.  Two
substreams are carved out of the counter space, selected by the top counter word:

* substream 0 feeds the Wiener increments.  Draws are standard normals taken in
  row-major ``(step, coordinate)`` order, so step ``k`` coordinate ``j`` is draw
  number ``k * dim + j``.
* substream 1 feeds the initial law (shell rejection sampling, Gaussian or
  empirical resampling).

Because the noise of a path depends only on ``(seed, stream_id)``, results do not
depend on how paths are split into chunks or distributed over workers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, stats

from .errors import GridError, PreconditionError
from .spectral_space import CovarianceSpectrum

__all__ = [
    "WienerConfig",
    "stream_generator",
    "standard_normals",
    "sample_increment",
    "sample_paths",
    "empirical_covariance",
    "wilson_interval",
    "HitEstimate",
    "gaussian_ball_hit",
    "gaussian_quadratic_cdf",
    "gaussian_box_log_lower_bound",
]

NOISE_SUBSTREAM = 0
INITIAL_SUBSTREAM = 1
_U64 = (1 << 64) - 1


def stream_generator(seed: int, stream_id: int, substream: int = NOISE_SUBSTREAM) -> np.random.Generator:
    """Generator for one trajectory's substream."""
    seed, stream_id = int(seed), int(stream_id)
    if not (0 <= seed <= _U64 and 0 <= stream_id <= _U64):
        raise ValueError("seed and stream_id must be unsigned 64-bit integers")
    key = seed | (stream_id << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, substream]))


def standard_normals(seed: int, stream_ids, n_steps: int, dim: int) -> np.ndarray:
    """Standard normal noise of shape ``(len(stream_ids), n_steps, dim)``."""
    stream_ids = np.asarray(stream_ids, dtype=np.uint64).ravel()
    out = np.empty((stream_ids.size, n_steps, dim))
    for i, sid in enumerate(stream_ids):
        stream_generator(seed, int(sid)).standard_normal((n_steps, dim), out=out[i])
    return out


@dataclass(frozen=True)
class WienerConfig:
    spectrum: CovarianceSpectrum
    seed: int = 0
    stream_id: int = 0


def sample_increment(cfg: WienerConfig, dt: float, n: int = 1, step: int = 0) -> np.ndarray:
    """Increments ``W_{t+dt} - W_t`` for ``n`` consecutive streams.

    Row ``i`` uses stream ``cfg.stream_id + i``; ``step`` selects which increment
    of the stream is returned, so disjoint steps give independent increments.
    """
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    ids = cfg.stream_id + np.arange(n, dtype=np.uint64)
    z = standard_normals(cfg.seed, ids, step + 1, cfg.spectrum.dim)[:, step, :]
    return z * np.sqrt(cfg.spectrum.q * dt)


def sample_paths(spectrum: CovarianceSpectrum, T: float, h: float, n_paths: int,
                 seed: int = 0, record_times=None, stream_offset: int = 0):
    """Pure Wiener paths started at the origin, as a trajectory batch."""
    from .sde_engine import DriftModel, InitialLaw, integrate_bounded

    return integrate_bounded(
        InitialLaw.dirac(np.zeros(spectrum.dim)), DriftModel.zero(spectrum), spectrum,
        T, h, n_paths, seed, record_times=record_times, stream_offset=stream_offset,
    )


def _time_index(batch, t: float) -> int:
    idx = np.flatnonzero(np.isclose(batch.times, t, rtol=0, atol=1e-9 * max(1.0, abs(t))))
    if idx.size == 0:
        raise GridError(f"time {t} is not a recorded grid time; interpolation is refused")
    return int(idx[0])


class CovarianceEstimate(NamedTuple):
    value: float
    stderr: float
    expected: float


def empirical_covariance(paths, t: float, s: float, u, v) -> CovarianceEstimate:
    """Monte Carlo estimate of ``E <W_t, u> <W_s, v>``.

    Returns the estimate, its standard error and the exact value
    ``min(t, s) * sum_j q_j u_j v_j`` for comparison.
    """
    it, js = _time_index(paths, t), _time_index(paths, s)
    a = paths.states[:, it, :] @ np.asarray(u, dtype=float)
    b = paths.states[:, js, :] @ np.asarray(v, dtype=float)
    prod = a * b
    n = prod.size
    expected = min(t, s) * float(np.sum(paths.spectrum.q * np.asarray(u) * np.asarray(v)))
    return CovarianceEstimate(float(prod.mean()), float(prod.std(ddof=1) / np.sqrt(n)), expected)


def wilson_interval(hits: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    ci = stats.binomtest(int(hits), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


class HitEstimate(NamedTuple):
    estimate: float
    ci: tuple[float, float]
    hits: int
    n: int


def gaussian_ball_hit(cfg: WienerConfig, t: float, R: float, n_samples: int) -> HitEstimate:
    """Estimate ``P(||W_t|| <= R)`` from ``n_samples`` independent draws of ``W_t``."""
    if n_samples < 1000:
        raise PreconditionError("n_samples must be at least 1000")
    w = sample_increment(cfg, t, n_samples)
    hits = int(np.count_nonzero(np.einsum("ij,ij->i", w, w) <= R * R))
    return HitEstimate(hits / n_samples, wilson_interval(hits, n_samples), hits, n_samples)


def gaussian_quadratic_cdf(x: float, weights, shifts) -> float:
    r"""``P(sum_j weights_j (Z_j + shifts_j)^2 <= x)`` for independent standard normals.

    Imhof's inversion of the characteristic function of a weighted sum of
    noncentral chi-squares.  Accurate to roughly 1e-9 absolute; for tiny
    probabilities use :func:`gaussian_box_log_lower_bound` instead.
    """
    lam = np.asarray(weights, dtype=float)
    delta = np.asarray(shifts, dtype=float) ** 2
    keep = lam > 0
    lam, delta = lam[keep], delta[keep]
    if x <= 0:
        return 0.0

    def parts(u):
        lu = lam * u
        # theta(u) = g(u) - omega u with g bounded, which lets the tail use Fourier quadrature
        g = 0.5 * np.sum(np.arctan(lu) + delta * lu / (1 + lu**2))
        log_rho = 0.25 * np.sum(np.log1p(lu**2)) + 0.5 * np.sum(delta * lu**2 / (1 + lu**2))
        return g, np.exp(-log_rho) / u

    omega = 0.5 * x

    def integrand(u):
        g, env = parts(u)
        return np.sin(g - omega * u) * env

    split = 8 * np.pi / omega
    head, _ = integrate.quad(integrand, 0, split, limit=500, epsabs=1e-12)

    def sin_part(u):
        g, env = parts(u)
        return np.sin(g) * env

    def cos_part(u):
        g, env = parts(u)
        return np.cos(g) * env

    # sin(g - omega u) = sin(g) cos(omega u) - cos(g) sin(omega u)
    tail_c, _ = integrate.quad(sin_part, split, np.inf, weight="cos", wvar=omega, limlst=200)
    tail_s, _ = integrate.quad(cos_part, split, np.inf, weight="sin", wvar=omega, limlst=200)
    val = head + tail_c - tail_s
    return float(np.clip(0.5 - val / np.pi, 0.0, 1.0))


def gaussian_box_log_lower_bound(center, std, q, R: float) -> float:
    """Log of a positive lower bound on ``P(||Y||_Q <= R)`` for ``Y ~ N(center, diag(std^2))``.

    The box ``|y_j| <= R / sqrt(d q_j)`` is inscribed in the ellipsoid and its
    probability factorizes over independent coordinates, so the bound stays
    representable for probabilities far below Monte Carlo resolution.
    """
    center, std, q = (np.asarray(a, dtype=float) for a in (center, std, q))
    half = R / np.sqrt(center.size * q)
    hi = (half - center) / std
    lo = (-half - center) / std
    # log(Phi(hi) - Phi(lo)) computed on whichever tail keeps precision
    flip = lo > 0
    hi, lo = np.where(flip, -lo, hi), np.where(flip, -hi, lo)
    log_hi = stats.norm.logcdf(hi)
    log_lo = stats.norm.logcdf(lo)
    terms = log_hi + np.log1p(-np.exp(np.minimum(log_lo - log_hi, 0.0)))
    return float(np.sum(terms))
