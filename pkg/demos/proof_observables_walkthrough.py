"""
The stochastic objects behind the positivity argument
=====================================================

The squared norm of a path splits into a drift part and a martingale part whose
quadratic variation runs at unit speed.  This script measures that martingale,
the exponentially discounted integral that must stay above -C(N, T), and what
goes wrong for a walk that is forced to stay away from the target.
"""
import numpy as np

from hilbert_diffuse import CovarianceSpectrum, DriftModel, InitialLaw, integrate_bounded
from hilbert_diffuse.proof_observables import (
    c_constant,
    diagnostics,
    gronwall_excess,
    novikov_demo,
    reflected_surrogate,
)

sp = CovarianceSpectrum.preset("poly2", 8)
F = DriftModel.tanh(sp)
batch = integrate_bounded(InitialLaw.shell(1.0, 0.25), F, sp, 1.0, 1e-3, 2000, seed=5)

# %%
# Quadratic variation of the normalized projection, and the lower-bound statistic.
rep = diagnostics(batch, N=1.0)
print({k: round(v, 4) if isinstance(v, float) else v for k, v in rep.summary().items()})
lam, C = c_constant(1.0, 1.0, sp, F)
print(f"lambda = {lam:.4f}, C(1, 1) = {C:.3f}; worst path reaches {rep.min_statistic.min():.3f}")

# %%
# The discrete Gronwall chain zeta_t <= Psi_t + int zeta holds path by path.
print(f"largest excess over the chain: {gronwall_excess(batch, 1.0).max():.3f} (nonpositive means it holds)")

# %%
# A walk reflected at R never enters the target, its clock grows linearly and the
# discounted integral keeps sinking as the horizon grows.
for T in (1.0, 4.0, 16.0):
    s = reflected_surrogate(0.5, T, 0.01, 2000, seed=6)
    print(f"T = {T:4.1f}: 1% quantile of the statistic {np.quantile(s.statistic, 0.01):7.3f}, "
          f"clock floor {s.clock_floor:.3f}")

# %%
# u = exp(w - t/2) solves u = 1 + int u dw, is positive, and has no positive floor.
# At a fixed step the discretized identity degrades on long horizons.
for T in (1.0, 16.0):
    nov = novikov_demo(T, 500, seed=7, h=1e-3)
    print(f"T = {T:4.1f}: min u = {nov.min_u:.2e}, min int u dw = {nov.min_integral:.4f}, "
          f"identity residual (Milstein) {nov.residual_milstein:.1e}")
