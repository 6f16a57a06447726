"""Kernel-based Koopman operator estimation with exact variance formulas.

Subpackages:
  quadrature   Hermite polynomials and Gauss-Hermite rules
  ou           analytic Ornstein-Uhlenbeck machinery and samplers
  rkhs         Gaussian RBF kernel and its Mercer decomposition
  covariance   analytic/empirical cross-covariance quantities
  bounds       probabilistic and spectral error bounds
  predictor    empirical Koopman prediction operator
  experiments  sweeps, validation suite, CSV/SVG artifacts
"""
from . import bounds, covariance, experiments, ou, predictor, quadrature, rkhs

__all__ = [
    "bounds",
    "covariance",
    "experiments",
    "ou",
    "predictor",
    "quadrature",
    "rkhs",
]

__version__ = "0.1.0"
