"""Monte Carlo evidence for positivity of transition probabilities on ellipsoids.

A hit estimate is called *positive* when the lower end of its 95% Wilson
interval is above zero and *inconclusive* otherwise.  There is no negative
verdict: zero hits only mean the probability is below Monte Carlo resolution.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import ConfigurationError, PreconditionError
from .q_wiener import gaussian_box_log_lower_bound, gaussian_quadratic_cdf, wilson_interval
from .sde_engine import (
    DriftModel,
    InitialLaw,
    LinearOperator,
    TrajectoryBatch,
    _CHUNK_BUDGET,
    convolution_variance,
    grid_steps,
    in_chunks,
    integrate_bounded,
    integrate_mild,
    restart_from,
)
from .spectral_space import CovarianceSpectrum, Ellipsoid, contains, q_norm

__all__ = [
    "Scenario",
    "ProbeResult",
    "PositivityReport",
    "tau_of_r",
    "geometric_probes",
    "partition",
    "hit_counts",
    "hit_probability",
    "lemma_stay_check",
    "chain_experiment",
    "shift_experiment",
    "zero_drift_oracle",
]

POSITIVE = "positive"
INCONCLUSIVE = "inconclusive"


@dataclass
class Scenario:
    """Everything needed to run one positivity experiment."""

    spectrum: CovarianceSpectrum
    drift: DriftModel
    initial: InitialLaw
    target: Ellipsoid
    T: float
    probes: np.ndarray
    N: int = 10_000
    seed: int = 0
    h: float = 1e-3
    operator: LinearOperator | None = None
    jobs: int = 1

    def __post_init__(self):
        self.probes = np.atleast_1d(np.asarray(self.probes, dtype=float))
        if np.any(self.probes <= 0) or np.any(self.probes > self.T * (1 + 1e-12)):
            raise ConfigurationError("probe times must lie in (0, T]")
        if self.target.spectrum.dim != self.spectrum.dim:
            raise ConfigurationError("target and spectrum dimensions differ")

    @property
    def model(self) -> str:
        return "bounded" if self.operator is None else "linear"

    def integrate(self, T=None, n_paths=None, initial=None, record_times=None, stream_offset=0,
                  drift=None, track_drift=False, chunk_size=None) -> TrajectoryBatch:
        T = self.T if T is None else T
        args = dict(record_times=record_times, stream_offset=stream_offset, jobs=self.jobs,
                    track_drift=track_drift, chunk_size=chunk_size)
        law = self.initial if initial is None else initial
        F = self.drift if drift is None else drift
        n = self.N if n_paths is None else n_paths
        if self.operator is None:
            return integrate_bounded(law, F, self.spectrum, T, self.h, n, self.seed, **args)
        return integrate_mild(law, self.operator, F, self.spectrum, T, self.h, n, self.seed, **args)

    def describe(self) -> dict:
        out = {
            "model": self.model,
            "spectrum": {"name": self.spectrum.name, "q": self.spectrum.q.tolist()},
            "drift": self.drift.name,
            "initial": self.initial.describe(),
            "target": {"center": self.target.center.tolist(), "radius": float(self.target.radius)},
            "T": float(self.T),
            "h": float(self.h),
            "N": int(self.N),
            "seed": int(self.seed),
            "probes": [float(p) for p in self.probes],
        }
        if self.operator is not None:
            out["operator"] = {"name": self.operator.name, "a": self.operator.a.tolist()}
        return out


def tau_of_r(R: float, F: DriftModel, variant: str = "h_norm") -> float:
    """Staying time ``R / (6 (1 + sup ||F||))`` with the sup taken in the chosen norm."""
    if not R > 0:
        raise PreconditionError("R must be positive")
    if variant == "q_norm":
        return R / (6.0 * (1.0 + F.sup_q))
    if variant == "h_norm":
        return R / (6.0 * (1.0 + F.sup_h))
    raise ConfigurationError(f"unknown tau variant {variant!r}")


def geometric_probes(T: float, n: int, h: float | None = None, ratio: float = 2.0) -> np.ndarray:
    """``n`` geometrically spaced times ending at ``T``, snapped to the grid of step ``h``."""
    t = T * ratio ** (np.arange(n) - (n - 1.0))
    if h is not None:
        t = np.maximum(np.rint(t / h), 1) * h
    return np.unique(t)


def partition(M: float, tau: float) -> np.ndarray:
    """Points ``0, tau, ..., (n-1) tau, M`` with ``n = floor(M / tau)``."""
    if not M > tau:
        raise PreconditionError("M must exceed tau")
    n = int(math.floor(M / tau + 1e-9))
    return np.append(tau * np.arange(n), M)


@dataclass
class ProbeResult:
    t: float
    hits: int
    n: int
    estimate: float
    ci: tuple[float, float]

    @property
    def verdict(self) -> str:
        return POSITIVE if self.ci[0] > 0 else INCONCLUSIVE

    def to_dict(self) -> dict:
        return {"t": float(self.t), "hits": int(self.hits), "n": int(self.n),
                "estimate": float(self.estimate), "ci_low": float(self.ci[0]),
                "ci_high": float(self.ci[1]), "verdict": self.verdict}


def _probe(t, hits, n) -> ProbeResult:
    return ProbeResult(float(t), int(hits), int(n), hits / n, wilson_interval(hits, n))


@dataclass
class PositivityReport:
    probes: list[ProbeResult]
    tau_q: float
    tau_h: float
    meta: dict = field(default_factory=dict)

    @property
    def all_positive(self) -> bool:
        return all(p.verdict == POSITIVE for p in self.probes)

    @property
    def inconclusive(self) -> list[float]:
        return [p.t for p in self.probes if p.verdict == INCONCLUSIVE]

    def to_dict(self) -> dict:
        return {"probes": [p.to_dict() for p in self.probes], "tau_q": float(self.tau_q),
                "tau_h": float(self.tau_h), "meta": self.meta}

    def export(self, json_path, csv_path) -> None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "hits", "n", "estimate", "ci_low", "ci_high", "verdict"])
            for p in self.probes:
                d = p.to_dict()
                w.writerow([repr(d["t"]), d["hits"], d["n"], repr(d["estimate"]),
                            repr(d["ci_low"]), repr(d["ci_high"]), d["verdict"]])


def hit_counts(batch: TrajectoryBatch, target: Ellipsoid, times=None) -> np.ndarray:
    """Number of paths inside ``target`` at each recorded (or requested) time."""
    times = batch.times if times is None else times
    return np.array([np.count_nonzero(contains(target, batch.state_at(t))) for t in times])


def hit_probability(scenario: Scenario, batch: TrajectoryBatch | None = None) -> PositivityReport:
    """Fraction of paths in the target ellipsoid at every probe time, with Wilson intervals."""
    if batch is None:
        batch = scenario.integrate(record_times=scenario.probes)
    counts = hit_counts(batch, scenario.target, scenario.probes)
    R = scenario.target.radius
    return PositivityReport(
        [_probe(t, c, batch.n_paths) for t, c in zip(scenario.probes, counts)],
        tau_of_r(R, scenario.drift, "q_norm"), tau_of_r(R, scenario.drift, "h_norm"),
        {"scenario": scenario.describe()},
    )


@dataclass
class LemmaReport:
    R: float
    tau: float
    h: float
    variant: str
    probes: np.ndarray
    drift_qnorm_max: np.ndarray   # pathwise max of the drift-integral Q-norm up to each probe
    escape: list[ProbeResult]     # paths with ||X_t - X_0||_Q > R/2
    hits: list[ProbeResult]       # paths in K_R(a)

    @property
    def drift_bound(self) -> float:
        return self.R / 6 + 10 * self.h

    @property
    def checks(self) -> dict:
        return {
            "drift_integral_bounded": bool(np.all(self.drift_qnorm_max <= self.drift_bound)),
            "escape_upper_below_one": all(p.ci[1] < 1 for p in self.escape),
            "hit_lower_above_zero": all(p.ci[0] > 0 for p in self.hits),
        }

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "R": self.R, "tau": self.tau, "h": self.h, "variant": self.variant,
            "probes": [float(t) for t in self.probes],
            "drift_qnorm_max": [float(v) for v in self.drift_qnorm_max],
            "drift_bound": self.drift_bound,
            "escape": [p.to_dict() for p in self.escape],
            "hits": [p.to_dict() for p in self.hits],
            "checks": self.checks,
        }


def lemma_grid_step(tau: float, h_max: float, parts: int = 4) -> float:
    """Largest step not above ``h_max`` that puts ``tau / parts`` on the grid."""
    return tau / (parts * math.ceil(tau / (parts * h_max) - 1e-12))


def lemma_stay_check(scenario: Scenario, variant: str = "h_norm", probes=None) -> LemmaReport:
    """Check the staying estimate on ``(0, tau(R)]`` for an initial law inside ``K_{R/2}(a)``.

    The grid step is reduced from ``scenario.h`` when needed so that the default
    probes ``tau/4, tau/2, tau`` are grid points.
    """
    K = scenario.target
    R, a = K.radius, K.center
    tau = tau_of_r(R, scenario.drift, variant)
    h = lemma_grid_step(tau, scenario.h)
    if probes is None:
        probes = np.array([tau / 4, tau / 2, tau])
    probes = np.asarray(probes, dtype=float)
    if np.any(probes <= 0) or np.any(probes > tau * (1 + 1e-9)):
        raise PreconditionError("lemma probes must lie in (0, tau(R)]")
    sc = Scenario(scenario.spectrum, scenario.drift, scenario.initial, K, tau, probes,
                  scenario.N, scenario.seed, h, scenario.operator, scenario.jobs)
    n_steps = grid_steps(tau, h)
    slots = np.rint(probes / h).astype(int)
    chunk = max(1, _CHUNK_BUDGET // (2 * (n_steps + 1) * scenario.spectrum.dim))

    half = Ellipsoid(a, R / 2, scenario.spectrum)
    dmax = np.zeros(probes.size)
    escapes = np.zeros(probes.size, dtype=int)
    hits = np.zeros(probes.size, dtype=int)
    integrate = integrate_bounded if sc.operator is None else integrate_mild
    lead = (sc.initial, sc.drift) if sc.operator is None else (sc.initial, sc.operator, sc.drift)
    for b in in_chunks(integrate, sc.N, chunk, *lead, sc.spectrum, tau, h,
                       seed=sc.seed, track_drift=True, jobs=sc.jobs):
        x0 = b.states[:, 0]
        if not np.all(contains(half, x0)):
            raise PreconditionError("initial law is not supported in K_{R/2}(a)")
        qn = q_norm(b.drift_integral, sc.spectrum)  # (n, steps+1)
        running = np.maximum.accumulate(qn, axis=1)
        for k, s in enumerate(slots):
            dmax[k] = max(dmax[k], running[:, s].max())
            xt = b.states[:, s]
            escapes[k] += np.count_nonzero(q_norm(xt - x0, sc.spectrum) > R / 2)
            hits[k] += np.count_nonzero(contains(K, xt))
    return LemmaReport(
        R=R, tau=tau, h=h, variant=variant, probes=probes, drift_qnorm_max=dmax,
        escape=[_probe(t, c, sc.N) for t, c in zip(probes, escapes)],
        hits=[_probe(t, c, sc.N) for t, c in zip(probes, hits)],
    )


@dataclass
class ChainReport:
    tau: float
    partition: np.ndarray
    report: PositivityReport
    interval_verdicts: list[str]
    ks_statistic: float
    ks_pvalue: float

    @property
    def markov_consistent(self) -> bool:
        return self.ks_pvalue >= 0.01

    def to_dict(self) -> dict:
        return {"tau": self.tau, "partition": [float(s) for s in self.partition],
                "n": int(self.partition.size - 1), "positivity": self.report.to_dict(),
                "interval_verdicts": self.interval_verdicts,
                "ks_statistic": self.ks_statistic, "ks_pvalue": self.ks_pvalue,
                "markov_consistent": self.markov_consistent}


def chain_experiment(scenario: Scenario, M: float, variant: str = "h_norm") -> ChainReport:
    """Probe ``(0, M]`` on a refinement of the ``tau(R)`` partition and compare with a restarted run.

    Direct run: streams ``[0, N)``.  Chained run: ``[N, 2N)`` up to the first
    partition point, then restart from its empirical law on ``[2N, 3N)``.
    """
    R = scenario.target.radius
    tau = tau_of_r(R, scenario.drift, variant)
    parts = partition(M, tau)
    h = scenario.h
    snap = lambda t: max(1, round(t / h)) * h  # noqa: E731
    probes = np.unique([snap(s) for lo, hi in zip(parts[:-1], parts[1:]) for s in (0.5 * (lo + hi), hi)])
    M_grid = snap(M)
    sc = Scenario(scenario.spectrum, scenario.drift, scenario.initial, scenario.target, M_grid,
                  probes, scenario.N, scenario.seed, h, scenario.operator, scenario.jobs)
    direct = sc.integrate(record_times=probes)
    report = hit_probability(sc, direct)
    verdicts = []
    for lo, hi in zip(parts[:-1], parts[1:]):
        inside = [p for p in report.probes if snap(lo) < p.t <= snap(hi) + 1e-12]
        verdicts.append(POSITIVE if inside and all(p.verdict == POSITIVE for p in inside) else INCONCLUSIVE)

    s1 = snap(parts[1])
    first = sc.integrate(T=s1, record_times=[s1], stream_offset=sc.N)
    second = sc.integrate(T=M_grid - s1, initial=restart_from(first, s1), record_times=[M_grid - s1],
                          stream_offset=2 * sc.N) if M_grid > s1 else first
    a = q_norm(direct.state_at(M_grid), sc.spectrum)
    b = q_norm(second.states[:, -1], sc.spectrum)
    ks = stats.ks_2samp(a, b)
    return ChainReport(tau, parts, report, verdicts, float(ks.statistic), float(ks.pvalue))


@dataclass
class ShiftReport:
    max_deviation: float
    counts_original: np.ndarray
    counts_shifted: np.ndarray

    @property
    def counts_equal(self) -> bool:
        return bool(np.array_equal(self.counts_original, self.counts_shifted))

    def to_dict(self) -> dict:
        return {"max_deviation": self.max_deviation, "counts_original": self.counts_original.tolist(),
                "counts_shifted": self.counts_shifted.tolist(), "counts_equal": self.counts_equal}


def shift_experiment(scenario: Scenario, a) -> ShiftReport:
    """Run ``(F, eta)`` and ``(F(. - a), eta + a)`` on shared noise and compare pathwise."""
    if scenario.operator is not None:
        raise ConfigurationError("the shift experiment is only defined for the bounded model")
    a = np.asarray(a, dtype=float)
    ids = np.arange(scenario.N, dtype=np.uint64)
    x0 = scenario.initial.sample(scenario.spectrum, scenario.seed, ids,
                                 local_index=np.arange(scenario.N), n_total=scenario.N)
    base = scenario.integrate(initial=InitialLaw.empirical(x0))
    moved = scenario.integrate(initial=InitialLaw.empirical(x0 + a), drift=scenario.drift.shifted(a))
    dev = float(np.max(np.abs(moved.states - (base.states + a))))
    K = scenario.target
    K_moved = Ellipsoid(K.center + a, K.radius, K.spectrum)
    return ShiftReport(dev, hit_counts(base, K, scenario.probes), hit_counts(moved, K_moved, scenario.probes))


@dataclass
class OracleValue:
    probability: float     # Imhof value, averaged over initial draws
    log_lower_bound: float  # log of a rigorous positive lower bound


def zero_drift_oracle(scenario: Scenario, t: float, n_init: int = 64, rng_seed: int = 12345) -> OracleValue:
    """Exact Gaussian value of ``P(X_t in target)`` when ``F = 0``.

    Given the initial point, ``X_t`` is Gaussian with independent coordinates
    (``eta + W_t`` or ``S_t eta + W_A(t)``).  Random initial laws are averaged
    over ``n_init`` draws.
    """
    sp, K = scenario.spectrum, scenario.target
    law = scenario.initial
    if law.kind == "dirac":
        etas = law.point[None, :]
    else:
        etas = law.sample(sp, rng_seed, np.arange(n_init, dtype=np.uint64))
    if scenario.operator is None:
        decay, var = np.ones(sp.dim), sp.q * t
    else:
        decay = scenario.operator.semigroup(t)
        var = convolution_variance(scenario.operator, sp, t)
    std = np.sqrt(var)
    probs, logs = [], []
    for eta in etas:
        offset = decay * eta - K.center
        probs.append(gaussian_quadratic_cdf(K.radius**2, sp.q * var, offset / std))
        logs.append(gaussian_box_log_lower_bound(offset, std, sp.q, K.radius))
    return OracleValue(float(np.mean(probs)), float(logsumexp(logs) - np.log(len(logs))))
