"""Spectrally truncated simulation of Hilbert-space diffusions with constant diffusion.

The package simulates ``dX = dW + (A X + F(X)) dt`` in the eigenbasis of the
covariance ``Q`` of the Wiener process, and measures the stochastic objects that
control positivity of the transition probabilities on ``Q``-ellipsoids.
"""
from .errors import (
    ConfigurationError,
    GridError,
    HilbertDiffuseError,
    IntegrationError,
    PreconditionError,
    StabilityError,
)
from .spectral_space import (
    Ball,
    CovarianceSpectrum,
    Ellipsoid,
    contains,
    h_norm,
    inner_shifted,
    q_norm,
)
from .q_wiener import WienerConfig, empirical_covariance, gaussian_ball_hit, sample_increment, wilson_interval
from .sde_engine import (
    DriftModel,
    InitialLaw,
    LinearOperator,
    TrajectoryBatch,
    integrate_bounded,
    integrate_mild,
    restart_from,
    stochastic_convolution_increment,
)

__version__ = "0.1.0"
