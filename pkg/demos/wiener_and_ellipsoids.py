"""
Q-Wiener paths and weighted ellipsoids
======================================

A truncated Q-Wiener process lives in the eigenbasis of its covariance, so a
path is just a matrix of independent scaled Brownian coordinates.  This script
samples one, checks its covariance, and shows how thin the Q-ellipsoids get in
the high modes.
"""
import numpy as np

from hilbert_diffuse import CovarianceSpectrum, Ellipsoid, contains, h_norm, q_norm
from hilbert_diffuse.q_wiener import empirical_covariance, sample_paths

# %%
# Two preset spectra.  Both start at q_1 = 1 and have a closed-form full trace,
# so the truncation error is known.
for name in ("poly2", "geom2"):
    sp = CovarianceSpectrum.preset(name, 8)
    print(f"{name}: q = {np.round(sp.q, 4)}, truncated trace {sp.trace:.4f}, tail {sp.tail:.2e}")

# %%
# Sample 20 000 paths on [0, 2] and compare E<W_t, e_i><W_s, e_i> with min(t, s) q_i.
sp = CovarianceSpectrum.preset("geom2", 8)
paths = sample_paths(sp, 2.0, 0.01, 20_000, seed=1, record_times=[0.5, 1.0, 2.0])
e = np.eye(8)
for i in (0, 3):
    est = empirical_covariance(paths, 2.0, 1.0, e[i], e[i])
    print(f"mode {i + 1}: estimate {est.value:.4f} +- {est.stderr:.4f}, exact {est.expected:.4f}")

# %%
# The Q-norm never exceeds the H-norm, so an ellipsoid contains the ball of the
# same radius.  Along e_8 it stretches to 1/sqrt(q_8) times the radius.
K = Ellipsoid(np.zeros(8), 1.0, sp)
x = np.zeros(8)
x[7] = 0.99 / np.sqrt(sp.q[7])
print(f"||x|| = {h_norm(x):.2f}, ||x||_Q = {q_norm(x, sp):.2f}, inside K_1(0): {contains(K, x)}")

# %%
# At t = 1 most paths are far from the origin in H but still land inside K_1(0).
W1 = paths.state_at(1.0)
print(f"fraction in K_1(0): {np.mean(contains(K, W1)):.3f}, "
      f"fraction in the unit ball: {np.mean(h_norm(W1) <= 1):.3f}")
