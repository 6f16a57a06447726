"""Empirical Koopman prediction operator via whitened Gramian features.

From m snapshot pairs, the spectral decomposition (1/m) K_X = V Lambda V^T of
the kernel Gramian yields empirical features

    ehat_j = (1/(sqrt(m) lambdahat_j)) sum_l V_{lj} Phi(x_l),

whitened so their empirical second moment is 1.  The rank-N prediction
operator applied to an observable phi is

    Khat_N phi(x) = (1/m) phi(Y)^T V_N Lambda_N^{-1} V_N^T K_{X,x},

equivalently the pseudo-inverse of the empirical covariance composed with the
empirical cross-covariance.  The analytic counterpart truncates the exact
Koopman image of phi onto the first N Mercer features.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .covariance import PairedDataset
from .ou import GaussianObservable, OuSystem, propagate_gaussian
from .quadrature import QuadratureRule
from .rkhs import MercerBasis, RbfKernel, feature_matrix, gram_matrix

__all__ = [
    "EigenSystem",
    "EmpiricalFeatures",
    "sym_eig",
    "empirical_features",
    "predict",
    "analytic_truncated_prediction",
    "l2mu_error",
    "GRAMIAN_CAP",
]

#: Largest Gramian decomposed densely; datasets beyond this use features
#: built from the first GRAMIAN_CAP points (prediction still sums over all m).
GRAMIAN_CAP = 10_000


@dataclass(frozen=True)
class EigenSystem:
    """Symmetric eigendecomposition, eigenvalues descending."""

    values: np.ndarray
    vectors: np.ndarray
    source_dim: int


@dataclass(frozen=True)
class EmpiricalFeatures:
    """Top-N whitened empirical Mercer features of one dataset.

    ``feature_xs`` are the points whose Gramian was decomposed (the first
    min(m, GRAMIAN_CAP) data sites); ``coefficients`` holds the expansion
    ehat_j = sum_l coefficients[l, j] Phi(feature_xs[l]).
    """

    feature_xs: np.ndarray
    eigensystem: EigenSystem
    N: int
    coefficients: np.ndarray
    boundary_tie: bool = False


def sym_eig(S: np.ndarray) -> EigenSystem:
    """Full spectral decomposition of a symmetric matrix, descending order."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("matrix must be square")
    if S.shape[0] > GRAMIAN_CAP:
        raise ValueError(f"dense decomposition capped at dimension {GRAMIAN_CAP}")
    asym = np.max(np.abs(S - S.T)) if S.size else 0.0
    if asym > 1e-12 * max(1.0, np.max(np.abs(S))):
        raise ValueError(f"matrix not symmetric (max asymmetry {asym:.3e})")
    try:
        values, vectors = np.linalg.eigh((S + S.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"symmetric eigensolver failed: {exc}")
    order = np.argsort(values)[::-1]
    return EigenSystem(values=values[order], vectors=vectors[:, order], source_dim=S.shape[0])


def empirical_features(
    data: PairedDataset, k: RbfKernel, N: int, lambda_floor: float = 1e-12
) -> EmpiricalFeatures:
    """Whitened top-N features from the dataset's kernel Gramian.

    Decomposes (1/m) Gram(xs, xs) (subsampled to the first GRAMIAN_CAP points
    for very large m) and keeps the leading N eigenpairs.  Whitening divides
    by lambdahat_j, so eigenvalues below ``lambda_floor`` raise rather than
    being regularized away.
    """
    xs = data.xs[: min(data.m, GRAMIAN_CAP)]
    ms = xs.size
    if N > ms:
        raise ValueError(f"N = {N} exceeds the number of feature points {ms}")
    if N < 1:
        raise ValueError("N must be positive")
    if ms > 2000:
        # only the top N pairs are needed; the subset solver skips the
        # full back-transformation
        gram = gram_matrix(k, xs, xs) / ms
        vals, vecs = scipy.linalg.eigh(gram, subset_by_index=[ms - N, ms - 1])
        order = np.argsort(vals)[::-1]
        eig = EigenSystem(values=vals[order], vectors=vecs[:, order], source_dim=ms)
    else:
        eig = sym_eig(gram_matrix(k, xs, xs) / ms)
    top_vals = eig.values[:N]
    if np.any(top_vals < -1e-10):
        raise ValueError(f"Gramian eigenvalue {top_vals.min():.3e} below PSD tolerance")
    if top_vals[-1] < lambda_floor:
        raise ValueError(
            f"lambdahat_N = {top_vals[-1]:.3e} below floor {lambda_floor:.1e}: "
            "whitening would be ill-conditioned"
        )
    boundary_tie = False
    if eig.values.size > N:
        rel_gap = (top_vals[-1] - eig.values[N]) / max(top_vals[-1], 1e-300)
        if rel_gap < 1e-8:
            boundary_tie = True
            warnings.warn(
                f"near-tied eigenvalues at the N = {N} boundary (relative gap {rel_gap:.1e})"
            )
    coeffs = eig.vectors[:, :N] / (math.sqrt(ms) * top_vals[None, :])
    return EmpiricalFeatures(
        feature_xs=xs,
        eigensystem=eig,
        N=N,
        coefficients=coeffs,
        boundary_tie=boundary_tie,
    )


def predict(
    features: EmpiricalFeatures,
    data: PairedDataset,
    k: RbfKernel,
    obs: Callable,
    x_eval,
) -> np.ndarray:
    """Evaluate Khat_N phi at the given points.

    Khat_N phi = sum_j beta_j ehat_j with beta_j = (1/m) sum_k ehat_j(x_k) phi(y_k);
    when the features come from the full dataset this reduces to the matrix
    formula (1/m) phi(Y)^T V_N Lambda_N^{-1} V_N^T K_{X,x}.
    """
    x_eval = np.atleast_1d(np.asarray(x_eval, dtype=float))
    phi_y = np.asarray(obs(data.ys), dtype=float)
    m = data.m
    # beta_j = (1/m) sum_k ehat_j(x_k) phi(y_k), with ehat_j evaluated through
    # its kernel expansion over the feature points (blocked over the data).
    beta = np.zeros(features.N)
    block = max(1, int(2e7 / max(features.feature_xs.size, 1)))
    for start in range(0, m, block):
        stop = min(start + block, m)
        cross = gram_matrix(k, data.xs[start:stop], features.feature_xs)
        beta += phi_y[start:stop] @ (cross @ features.coefficients)
    beta /= m
    e_at_eval = gram_matrix(k, x_eval, features.feature_xs) @ features.coefficients
    return e_at_eval @ beta


def analytic_truncated_prediction(
    basis: MercerBasis,
    sys: OuSystem,
    obs: GaussianObservable,
    N: int,
    rule: QuadratureRule,
) -> Callable:
    """The rank-N analytic prediction K_N^t phi = sum_{j<N} <K^t phi, e_j>_mu e_j.

    The coefficients integrate the closed-form Koopman image of the Gaussian
    observable against the Mercer features by quadrature.
    """
    if N < 1 or N > basis.truncation:
        raise ValueError("N must be within the basis truncation")
    k_phi = propagate_gaussian(sys, obs)
    from .rkhs import l2mu_coeffs

    coeffs = l2mu_coeffs(basis, k_phi, rule)[:N]

    def k_n_phi(x):
        scalar = np.ndim(x) == 0
        vals = coeffs @ feature_matrix(basis, x)[:N]
        return float(vals[0]) if scalar else vals

    return k_n_phi


def l2mu_error(f: Callable, g: Callable, sys: OuSystem, rule: QuadratureRule) -> float:
    """L2 error ||f - g|| under the invariant law, by Gaussian quadrature."""
    x = rule.nodes / math.sqrt(sys.alpha)
    diff = np.asarray(f(x), dtype=float) - np.asarray(g(x), dtype=float)
    val = float(rule.weights @ diff**2) / math.sqrt(math.pi)
    return math.sqrt(max(val, 0.0))
