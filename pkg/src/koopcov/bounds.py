"""Closed-form probabilistic and deterministic error bounds.

Chebyshev/Hoeffding confidence radii for the HS estimation error, coarse
upper bounds on the sliding-window variance, the minimal sample size, the
spectral-projection prediction bound, and the full bound including the
Mercer tail term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .covariance import f_m

__all__ = [
    "ConfidenceQuery",
    "PredictionBoundInputs",
    "chebyshev_radius",
    "hoeffding_radius",
    "hoeffding_chebyshev_crossover",
    "coarse_sigma_bounds",
    "min_samples",
    "prediction_bound",
    "full_bound",
    "spectral_gap",
]


@dataclass(frozen=True)
class ConfidenceQuery:
    """Sample size, failure probability, and variance source for a radius."""

    m: int
    delta: float
    variance_source: str = "exact_sigma_m"  # exact_sigma_m | iid_e0 | hoeffding

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class PredictionBoundInputs:
    """Everything the spectral prediction bound needs.

    delta_n is half the minimal gap among the top N+1 Mercer eigenvalues;
    the theorem hypothesis requires epsilon < delta_n.  phi_l1_norm is 1
    for the RBF kernel (unit diagonal); koopman_rkhs_norm defaults to the
    analytic bound e^{alpha t / 2} for the RKHS operator norm.
    """

    N: int
    lambda_n: float
    lambda_n1: float
    delta_n: float
    epsilon: float
    phi_l1_norm: float = 1.0
    koopman_rkhs_norm: float = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.lambda_n <= 0 or self.lambda_n1 <= 0:
            raise ValueError("eigenvalues must be positive")
        if self.lambda_n1 >= self.lambda_n:
            raise ValueError("lambda_{N+1} must be below lambda_N")
        if self.delta_n <= 0:
            raise ValueError("delta_n must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def chebyshev_radius(sigma_sq: float, q: ConfidenceQuery) -> float:
    """Smallest radius with Chebyshev failure mass <= delta: sqrt(var/(m delta))."""
    if sigma_sq < 0:
        raise ValueError("variance must be nonnegative")
    return math.sqrt(sigma_sq / (q.m * q.delta))


def hoeffding_radius(kernel_sup: float, q: ConfidenceQuery) -> float:
    """Radius from the bounded-differences tail 2 exp(-m eps^2 / (8 ||k||_inf^2))."""
    if kernel_sup <= 0:
        raise ValueError("kernel_sup must be positive")
    return math.sqrt(8.0 * kernel_sup**2 * math.log(2.0 / q.delta) / q.m)


def hoeffding_chebyshev_crossover(sigma_sq: float, kernel_sup: float, m: int) -> float:
    """The delta at which the two radii coincide (Hoeffding wins below it).

    Solves sigma_sq/delta = 8 k^2 ln(2/delta) by bisection on (0, 1).
    """
    def gap(delta):
        return sigma_sq / delta - 8.0 * kernel_sup**2 * math.log(2.0 / delta)

    lo, hi = 1e-300, 1.0 - 1e-12
    if gap(hi) >= 0:
        raise ValueError("Hoeffding radius never exceeds Chebyshev on (0,1)")
    for _ in range(200):
        mid = math.sqrt(lo * hi)  # geometric bisection: delta spans decades
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def coarse_sigma_bounds(e0: float, q1: float, m: int):
    """The coarse variance chain for a self-adjoint Koopman operator.

    Returns (simple, squared, remark):
      simple  = e0 (1 + F_m(q1))       -- exact-operator-norm version
      squared = 8 e0 / (1 - q1)^2      -- resolvent-squared version
      remark  = e0 (3 - q1) / (1 - q1) -- the m-uniform simple limit
    """
    if not 0.0 <= q1 < 1.0:
        raise ValueError("q1 must lie in [0, 1)")
    simple = e0 * (1.0 + f_m(q1, m))
    squared = 8.0 * e0 / (1.0 - q1) ** 2
    remark = e0 * (3.0 - q1) / (1.0 - q1)
    return simple, squared, remark


def min_samples(
    sigma_sq: Union[float, Callable[[int], float]],
    epsilon: float,
    delta: float,
    N: int,
) -> int:
    """Minimal m >= max(N, 2 sigma_m^2/(eps^2 delta)).

    ``sigma_sq`` may be a constant or a function of m (the exact
    sliding-window variance); in the latter case the requirement is solved
    by fixed-point iteration, at most 100 rounds.
    """
    if epsilon <= 0 or delta <= 0:
        raise ValueError("epsilon and delta must be positive")
    if N < 1:
        raise ValueError("N must be positive")

    def required(var: float) -> int:
        return max(N, math.ceil(2.0 * var / (epsilon**2 * delta)))

    if not callable(sigma_sq):
        return required(float(sigma_sq))
    m = max(N, 2)
    for _ in range(100):
        m_next = required(sigma_sq(m))
        if m_next == m:
            return m
        m = m_next
    raise RuntimeError(
        f"sample-size fixed point did not converge; last iterates near {m} and {m_next}"
    )


def prediction_bound(inputs: PredictionBoundInputs, enforce_hypothesis: bool = True) -> float:
    """Spectral prediction bound [1/sqrt(lambda_N) + (N+1)(1+p)sqrt(p)/(delta_N lambda_N)] eps
    with p = phi_l1_norm (= 1 for RBF, giving the constant 2(N+1)/(delta_N lambda_N)).

    The underlying perturbation argument assumes epsilon < delta_N; with
    ``enforce_hypothesis`` the violation raises.  Passing False evaluates the
    expression anyway (used to tabulate the bound in regimes where the
    hypothesis fails — the value is then only indicative).
    """
    if enforce_hypothesis and inputs.epsilon >= inputs.delta_n:
        raise ValueError(
            f"epsilon {inputs.epsilon:.3e} >= spectral half-gap {inputs.delta_n:.3e}: "
            "bound hypothesis violated"
        )
    p = inputs.phi_l1_norm
    constant = 1.0 / math.sqrt(inputs.lambda_n) + (
        (inputs.N + 1) * (1.0 + p) * math.sqrt(p) / (inputs.delta_n * inputs.lambda_n)
    )
    return constant * inputs.epsilon


def full_bound(inputs: PredictionBoundInputs, enforce_hypothesis: bool = True) -> float:
    """Prediction bound plus the Mercer projection tail sqrt(lambda_{N+1}) ||K^t||_H."""
    tail = math.sqrt(inputs.lambda_n1) * inputs.koopman_rkhs_norm
    return tail + prediction_bound(inputs, enforce_hypothesis=enforce_hypothesis)


def spectral_gap(eigenvalues, N: int) -> float:
    """delta_N = min over j <= N of (lambda_j - lambda_{j+1})/2.

    Indices are 1-based over a descending sequence; ties (relative gap below
    1e-14) violate the simplicity hypothesis and raise.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if N < 1:
        raise ValueError("N must be positive")
    if lam.size < N + 1:
        raise ValueError("need at least N+1 eigenvalues")
    gaps = lam[:N] - lam[1 : N + 1]
    rel = gaps / np.maximum(np.abs(lam[:N]), 1e-300)
    if np.any(rel <= 1e-14):
        j = int(np.argmax(rel <= 1e-14))
        raise ValueError(f"tied eigenvalues at position {j + 1}: simplicity violated")
    return float(gaps.min() / 2.0)
