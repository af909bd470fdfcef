"""Geometry of the truncated Hilbert space.

Coordinates are taken in the eigenbasis of the covariance operator ``Q``, so a
vector is just its array of coefficients ``x_j = <x, e_j>`` and ``Q`` acts
diagonally through its eigenvalues ``q_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, PreconditionError

__all__ = [
    "CovarianceSpectrum",
    "Ellipsoid",
    "Ball",
    "as_vector",
    "q_norm",
    "h_norm",
    "contains",
    "inner_shifted",
    "sample_uniform_ellipsoid",
    "sample_uniform_ball",
    "SPECTRUM_PRESETS",
]


@dataclass(frozen=True)
class CovarianceSpectrum:
    """Eigenvalues of a trace-class covariance operator, truncated to ``dim`` modes.

    Parameters
    ----------
    q : array_like
        Eigenvalues in nonincreasing order with ``q[0] == 1``.
    trace_full : float, optional
        Trace of the untruncated operator when the preset has a closed form.
    name : str
        Preset name, echoed in reports.
    """

    q: np.ndarray
    trace_full: float | None = None
    name: str = "custom"

    def __post_init__(self):
        q = np.array(self.q, dtype=float).ravel()
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        problems = validate_spectrum(q)
        if problems:
            raise ConfigurationError("; ".join(problems))
        if self.trace_full is not None and q.sum() > self.trace_full * (1 + 1e-12):
            raise ConfigurationError(
                f"truncated trace {q.sum()} exceeds full trace {self.trace_full}"
            )

    @property
    def dim(self) -> int:
        return self.q.size

    @property
    def trace(self) -> float:
        """Trace of the truncated operator."""
        return float(self.q.sum())

    @property
    def tail(self) -> float | None:
        """Trace mass discarded by the truncation, if the full trace is known."""
        if self.trace_full is None:
            return None
        return self.trace_full - self.trace

    @classmethod
    def preset(cls, name: str, dim: int, q=None) -> "CovarianceSpectrum":
        """Build a named spectrum.

        ``"poly2"`` gives ``q_j = j**-2``, ``"geom2"`` gives ``q_j = 2**(1-j)`` and
        ``"custom"`` takes the explicit list ``q``.
        """
        if name == "custom":
            if q is None:
                raise ConfigurationError("custom spectrum needs an explicit q list")
            return cls(np.asarray(q, dtype=float), None, "custom")
        if name not in SPECTRUM_PRESETS:
            raise ConfigurationError(
                f"unknown spectrum preset {name!r}; expected one of "
                f"{sorted(SPECTRUM_PRESETS) + ['custom']}"
            )
        if dim < 1:
            raise ConfigurationError("spectrum dimension must be positive")
        q_fn, trace = SPECTRUM_PRESETS[name]
        j = np.arange(1, dim + 1, dtype=float)
        return cls(q_fn(j), trace, name)


SPECTRUM_PRESETS = {
    "poly2": (lambda j: j**-2.0, np.pi**2 / 6),
    "geom2": (lambda j: 2.0 ** (1.0 - j), 2.0),
}


def validate_spectrum(q) -> list[str]:
    """Return the list of reasons ``q`` is not an admissible spectrum (empty if fine)."""
    q = np.asarray(q, dtype=float).ravel()
    problems = []
    if q.size == 0:
        return ["spectrum must have at least one eigenvalue"]
    if not np.all(np.isfinite(q)):
        problems.append("eigenvalues must be finite")
    if q[0] != 1.0:
        problems.append("q_1 must equal 1")
    if np.any(q <= 0):
        problems.append("eigenvalues must be strictly positive")
    if np.any(np.diff(q) > 0):
        problems.append("eigenvalues must be nonincreasing")
    return problems


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a float coordinate array, checking the trailing dimension."""
    x = np.asarray(x, dtype=float)
    if dim is not None and x.shape[-1:] != (dim,):
        raise ConfigurationError(
            f"vector has trailing dimension {x.shape[-1:]} but spectrum has dim {dim}"
        )
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("vector has non-finite entries")
    return x


def q_norm(x, spectrum: CovarianceSpectrum) -> np.ndarray | float:
    """Weighted norm ``(sum_j q_j x_j^2)^(1/2)``, vectorized over leading axes."""
    x = as_vector(x, spectrum.dim)
    out = np.sqrt(np.einsum("...j,j,...j->...", x, spectrum.q, x))
    return float(out) if out.ndim == 0 else out


def h_norm(x) -> np.ndarray | float:
    """Euclidean norm of the coordinates."""
    out = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Ellipsoid:
    """Closed ``Q``-norm ball ``{x : ||x - center||_Q <= radius}``."""

    center: np.ndarray
    radius: float
    spectrum: CovarianceSpectrum = field(repr=False)

    def __post_init__(self):
        c = as_vector(self.center, self.spectrum.dim).copy()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ConfigurationError("ellipsoid radius must be positive")

    def contains(self, x) -> np.ndarray | bool:
        return contains(self, x)


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball ``{x : ||x - center|| <= radius}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = as_vector(self.center).copy()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ConfigurationError("ball radius must be positive")

    def contains(self, x) -> np.ndarray | bool:
        x = as_vector(x, self.center.size)
        out = h_norm(x - self.center) <= self.radius
        return bool(out) if np.ndim(out) == 0 else out


def contains(K: Ellipsoid, x) -> np.ndarray | bool:
    """Membership in the closed ellipsoid; no tolerance is applied."""
    x = as_vector(x, K.spectrum.dim)
    # squared comparison avoids a sqrt rounding flip exactly at the boundary
    d = x - K.center
    out = np.einsum("...j,j,...j->...", d, K.spectrum.q, d) <= K.radius**2
    return bool(out) if np.ndim(out) == 0 else out


def inner_shifted(K: Ellipsoid, eps: float) -> Ellipsoid:
    """Half-radius ellipsoid with center moved by ``eps`` along the first axis.

    Requires ``0 <= eps <= R/2``; under that condition the result lies inside
    ``K``.
    """
    if eps < 0 or eps > K.radius / 2:
        raise PreconditionError(
            f"eps={eps} outside [0, R/2] = [0, {K.radius / 2}]; containment not guaranteed"
        )
    center = K.center.copy()
    center[0] += eps
    return Ellipsoid(center, K.radius / 2, K.spectrum)


def _uniform_unit_ball(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / dim)
    return g * r[:, None]


def sample_uniform_ball(B: Ball, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points uniformly from a Euclidean ball."""
    return B.center + B.radius * _uniform_unit_ball(rng, n, B.center.size)


def sample_uniform_ellipsoid(K: Ellipsoid, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points uniformly from ``K`` in the rescaled coordinates ``sqrt(q_j) x_j``."""
    y = K.radius * _uniform_unit_ball(rng, n, K.spectrum.dim)
    return K.center + y / np.sqrt(K.spectrum.q)
