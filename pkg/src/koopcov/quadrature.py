"""Hermite polynomials and Gauss-Hermite quadrature.

Every analytic integral in the library (Gaussian measures, weighted-Hermite
basis functions, pair-measure overlaps) reduces to quadrature against the
weight e^{-x^2}.  This module provides the physicist's Hermite polynomials,
an overflow-safe damped evaluation scheme, and Golub-Welsch quadrature rules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "DEGREE_CAP",
    "QuadratureRule",
    "hermite_eval",
    "hermite_weighted_eval",
    "gauss_hermite",
    "gauss_hermite_log_weights",
    "integrate_gaussian",
]

#: Highest Hermite degree supported; beyond this the double-precision
#: three-term recurrence loses accuracy.
DEGREE_CAP = 512

# Rescaling constants for the carried recurrence: rescale whenever the
# running value exceeds _RESCALE_AT so products with 2x never overflow.
_RESCALE_AT = 1e150
_RESCALE_BY = 1e-150
_LOG_RESCALE = math.log(1e150)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for the weight function e^{-x^2}.

    Nodes are strictly increasing and symmetric about the origin; the
    weights sum to sqrt(pi).
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))


def _check_degree(degree: int) -> None:
    if degree < 0:
        raise ValueError(f"degree must be nonnegative, got {degree}")
    if degree > DEGREE_CAP:
        raise ValueError(
            f"Hermite degree {degree} exceeds cap {DEGREE_CAP}; "
            "the recurrence would overflow/degrade in double precision"
        )


def hermite_eval(degree: int, x):
    """Physicist's Hermite polynomial H_degree(x).

    Uses the three-term recurrence H_{n+1} = 2x H_n - 2n H_{n-1}.
    Accepts scalars or arrays.
    """
    _check_degree(degree)
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if degree == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h_cur = 2.0 * x
    for n in range(1, degree):
        h_prev, h_cur = h_cur, 2.0 * x * h_cur - 2.0 * n * h_prev
    return h_cur if h_cur.ndim else float(h_cur)


def hermite_sign_logmag(degree: int, t):
    """Sign and log-magnitude of H_degree(t), overflow-safe.

    Carries the recurrence with elementwise rescaling, tracking the
    accumulated log scale.  Returns (sign, logmag) arrays such that
    H_degree(t) = sign * exp(logmag).
    """
    _check_degree(degree)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    logscale = np.zeros_like(t)
    h_prev = np.ones_like(t)
    h_cur = 2.0 * t
    if degree == 0:
        h_cur = h_prev
    else:
        for n in range(1, degree):
            h_prev, h_cur = h_cur, 2.0 * t * h_cur - 2.0 * n * h_prev
            big = np.abs(h_cur) > _RESCALE_AT
            if big.any():
                h_prev[big] *= _RESCALE_BY
                h_cur[big] *= _RESCALE_BY
                logscale[big] += _LOG_RESCALE
    sign = np.sign(h_cur)
    with np.errstate(divide="ignore"):
        logmag = np.where(h_cur != 0.0, np.log(np.abs(np.where(h_cur != 0.0, h_cur, 1.0))) + logscale, -np.inf)
    return sign, logmag


def hermite_all_sign_logmag(degree: int, t):
    """Signs and log-magnitudes of H_0(t) .. H_degree(t), overflow-safe.

    Returns arrays of shape (degree+1, len(t)).  Same rescaling scheme as
    :func:`hermite_sign_logmag`, but all intermediate degrees are recorded.
    """
    _check_degree(degree)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    signs = np.empty((degree + 1, t.size))
    logmags = np.empty((degree + 1, t.size))

    def record(row, h, logscale):
        signs[row] = np.sign(h)
        with np.errstate(divide="ignore"):
            logmags[row] = np.where(
                h != 0.0, np.log(np.abs(np.where(h != 0.0, h, 1.0))) + logscale, -np.inf
            )

    logscale = np.zeros_like(t)
    h_prev = np.ones_like(t)
    record(0, h_prev, logscale)
    if degree == 0:
        return signs, logmags
    h_cur = 2.0 * t
    record(1, h_cur, logscale)
    for n in range(1, degree):
        h_prev, h_cur = h_cur, 2.0 * t * h_cur - 2.0 * n * h_prev
        big = np.abs(h_cur) > _RESCALE_AT
        if big.any():
            h_prev[big] *= _RESCALE_BY
            h_cur[big] *= _RESCALE_BY
            logscale[big] += _LOG_RESCALE
        record(n + 1, h_cur, logscale)
    return signs, logmags


def hermite_weighted_eval(degree: int, scale: float, damping: float, x):
    """Damped Hermite evaluation e^{-damping*x^2} * H_degree(scale*x).

    The recurrence is carried on the rescaled sequence with sign/log-magnitude
    tracking, so no intermediate quantity overflows even for degree up to the
    cap and |x| up to ~50; the damping is applied in the exponent.
    """
    _check_degree(degree)
    if scale <= 0:
        raise ValueError("scale must be positive")
    if damping < 0:
        raise ValueError("damping must be nonnegative")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    sign, logmag = hermite_sign_logmag(degree, scale * x_arr)
    with np.errstate(over="ignore"):
        out = sign * np.exp(logmag - damping * x_arr**2)
    if np.ndim(x) == 0:
        return float(out[0])
    return out


def gauss_hermite(order: int) -> QuadratureRule:
    """Gauss-Hermite rule for the weight e^{-x^2} via Golub-Welsch.

    The nodes are the eigenvalues of the symmetric tridiagonal Jacobi
    matrix with off-diagonal sqrt(i/2).  Weights use the closed form
    w_i = 2^{n-1} n! sqrt(pi) / (n H_{n-1}(x_i))^2 evaluated in log space:
    the usual eigenvector-based weights underflow to exactly 0 at the
    outermost nodes (already ~1e-95 at order 128), which silently corrupts
    integrals of high-degree polynomials whose mass sits there.
    """
    if order < 1 or order > DEGREE_CAP:
        raise ValueError(f"order must be in [1, {DEGREE_CAP}], got {order}")
    if order == 1:
        return QuadratureRule(np.array([0.0]), np.array([math.sqrt(math.pi)]), 1)
    diag = np.zeros(order)
    off = np.sqrt(np.arange(1, order) / 2.0)
    try:
        nodes = eigh_tridiagonal(diag, off, eigvals_only=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"Golub-Welsch eigenproblem failed at order {order}: {exc}")
    # Enforce exact symmetry of the rule about the origin.
    nodes = (nodes - nodes[::-1]) / 2.0
    log_weights = gauss_hermite_log_weights(order, nodes)
    weights = np.exp(log_weights)
    weights = (weights + weights[::-1]) / 2.0
    return QuadratureRule(nodes, weights, order)


def gauss_hermite_log_weights(order: int, nodes) -> np.ndarray:
    """log of the Gauss-Hermite weights at the given nodes.

    Downstream log-sum-exp integrators use these directly when the linear
    weights underflow double precision (far nodes at high order).
    """
    from scipy.special import gammaln

    nodes = np.asarray(nodes, dtype=float)
    _, logmag = hermite_sign_logmag(order - 1, nodes)
    return (
        (order - 1) * math.log(2.0)
        + gammaln(order + 1)
        + 0.5 * math.log(math.pi)
        - 2.0 * math.log(order)
        - 2.0 * logmag
    )


def integrate_gaussian(f: Callable, mean: float, variance: float, rule: QuadratureRule) -> float:
    """Integrate f against the normal law N(mean, variance).

    Affine substitution x = mean + sqrt(2*variance)*node maps the rule's
    weight e^{-u^2} onto the Gaussian density; weights are normalized by
    1/sqrt(pi).
    """
    if variance <= 0:
        raise ValueError("variance must be positive")
    x = mean + math.sqrt(2.0 * variance) * rule.nodes
    vals = np.asarray(f(x), dtype=float)
    return float(rule.weights @ vals) / math.sqrt(math.pi)
