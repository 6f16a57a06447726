"""Analytic and empirical cross-covariance quantities.

Analytic side: the lag-t cross-covariance operator of the OU process in the
Mercer coordinate system — overlap matrix A (features against Koopman
eigenfunctions), pair-integral matrix M = A diag(q) A^T, Hilbert-Schmidt
norm, the i.i.d. variance constant E_0(t), and the correlation coefficients
d_{l,t} entering the exact sliding-window variance

    sigma_m^2 = E_0(t) + sum_{l>=1} d_{l,t} F_m(q_l),

so that the expected squared HS estimation error over m snapshot pairs is
sigma_m^2 / m.

Empirical side: Gram-based estimators of the HS norm of the empirical
operator, its inner product with the analytic operator, and the exact
squared estimation error assembled from the three terms.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ou import OuSystem, koopman_eigenfunction_matrix, koopman_eigenvalue, simulate_trajectory
from .quadrature import QuadratureRule
from .rkhs import MercerBasis, RbfKernel, feature_matrix, feature_polypart_matrix, gram_matrix

__all__ = [
    "AnalyticCovariance",
    "PairedDataset",
    "VarianceBreakdown",
    "overlap_matrix",
    "pair_integral_matrix",
    "hs_norm_sq_analytic",
    "e0",
    "d_coefficients",
    "f_m",
    "sigma_m_sq",
    "analytic_covariance",
    "sliding_window_dataset",
    "iid_dataset",
    "empirical_hs_norm_sq",
    "empirical_cross_inner",
    "estimation_error_sq",
]

#: Negative squared errors larger than this are treated as bugs, smaller
#: ones as round-off from mixing exact Gram arithmetic with truncated series.
NEGATIVE_CLAMP = 1e-10


@dataclass(frozen=True)
class PairedDataset:
    """Snapshot pairs (x_k, y_k), either i.i.d. or from a sliding window."""

    xs: np.ndarray
    ys: np.ndarray
    mode: str  # "iid" | "sliding_window"
    seed: int
    lag: float

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.size != ys.size or xs.size < 1:
            raise ValueError("xs and ys must be non-empty and of equal length")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def m(self) -> int:
        return self.xs.size


@dataclass(frozen=True)
class VarianceBreakdown:
    """sigma_m^2 split into its i.i.d. part and the correlation correction."""

    e0: float
    correction: float
    sigma_m_sq: float
    sigma_inf_sq: float
    iid_variance: float
    m: int


@dataclass(frozen=True)
class AnalyticCovariance:
    """Cached analytic coefficient data for one (basis, system) pair."""

    A: np.ndarray
    M: np.ndarray
    hs_norm_sq: float
    e0: float
    d: np.ndarray  # d_{l,t} for l = 1 .. N_koopman-1
    n_mercer: int
    n_koopman: int


def sliding_window_dataset(sys: OuSystem, m: int, rng_seed) -> PairedDataset:
    """m consecutive snapshot pairs from one stationary trajectory."""
    traj = simulate_trajectory(sys, m + 1, rng_seed)
    xs, ys = traj.pairs()
    seed_repr = rng_seed if isinstance(rng_seed, int) else -1
    return PairedDataset(xs, ys, mode="sliding_window", seed=seed_repr, lag=sys.lag)


def iid_dataset(sys: OuSystem, m: int, rng_seed) -> PairedDataset:
    """m independent pairs: x ~ invariant law, y ~ lag-t transition from x."""
    rng = np.random.default_rng(rng_seed)
    xs = rng.normal(0.0, math.sqrt(sys.invariant_variance), size=m)
    ys = sys.decay * xs + rng.normal(0.0, math.sqrt(sys.transition_variance), size=m)
    seed_repr = rng_seed if isinstance(rng_seed, int) else -1
    return PairedDataset(xs, ys, mode="iid", seed=seed_repr, lag=sys.lag)


def _adapted_nodes(basis: MercerBasis, rule: QuadratureRule):
    """Nodes/prefactor for single-feature mu-integrals.

    One feature contributes e^{-zeta^2 x^2}; together with the invariant
    density the total Gaussian weight is e^{-(alpha+zeta^2) x^2}, so under
    u = sqrt(alpha+zeta^2) x the remaining integrand is polynomial whenever
    the other factors are.
    """
    s2 = basis.alpha + basis.zeta_sq
    x = rule.nodes / math.sqrt(s2)
    pref = math.sqrt(basis.alpha / s2) / math.sqrt(math.pi)
    return x, pref


def overlap_matrix(basis: MercerBasis, sys: OuSystem, N_koopman: int, rule: QuadratureRule) -> np.ndarray:
    """A_{ij} = <phi_i, psi_j>_mu by (exact) adapted quadrature."""
    x, pref = _adapted_nodes(basis, rule)
    poly = feature_polypart_matrix(basis, x)
    psi = koopman_eigenfunction_matrix(sys, N_koopman, x)
    return pref * np.einsum("iq,jq,q->ij", poly, psi, rule.weights)


def pair_integral_matrix(A: np.ndarray, q) -> np.ndarray:
    """M_{kl} = sum_j q_j A_{kj} A_{lj}, the mu_{0,t} pair integrals.

    Identity: int phi_k(x) phi_l(y) dmu_{0,t} = <phi_k, K^t phi_l>_mu,
    expanded in the Koopman eigenbasis and truncated at N_koopman.
    """
    q = np.asarray(q, dtype=float)
    if A.shape[1] != q.size:
        raise ValueError("eigenvalue count must match the overlap columns")
    M = (A * q[None, :]) @ A.T
    return (M + M.T) / 2.0  # symmetric by construction; enforce exactly


def hs_norm_sq_analytic(basis: MercerBasis, M: np.ndarray) -> float:
    """Squared HS norm sum_{k,l} lambda_k lambda_l M_{kl}^2."""
    lam = basis.eigenvalues[: M.shape[0]]
    return float(np.einsum("k,l,kl->", lam, lam, M**2))


def e0(hs_norm_sq: float) -> float:
    """I.i.d. variance constant E_0(t) = 1 - ||C^t||_HS^2 (RBF diagonal is 1)."""
    if not 0.0 <= hs_norm_sq <= 1.0:
        raise ValueError(
            f"hs_norm_sq = {hs_norm_sq} outside [0,1]; upstream truncation failed"
        )
    return 1.0 - hs_norm_sq


def d_coefficients(basis: MercerBasis, sys: OuSystem, A: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Correlation coefficients d_{l,t}, l = 1 .. N_koopman - 1.

    d_{j,t} = sum_{k,l} lambda_k lambda_l B^{(j)}_{kl} B^{(j)}_{lk} with
    B^{(j)}_{kl} = int phi_k(x) psi_j(x) (K^t phi_l)(x) dmu(x) and
    K^t phi_l = sum_r q_r A_{lr} psi_r.  The j = 0 term is excluded (the
    projection removes the constant eigenfunction).
    """
    n_koopman = A.shape[1]
    x, pref = _adapted_nodes(basis, rule)
    poly = feature_polypart_matrix(basis, x)
    psi = koopman_eigenfunction_matrix(sys, n_koopman, x)
    qs = np.array([koopman_eigenvalue(sys, j) for j in range(n_koopman)])
    # T_{kjr} = int phi_k psi_j psi_r dmu (polynomial integrand, exact)
    T = pref * np.einsum("kq,jq,rq,q->kjr", poly, psi, psi, rule.weights)
    B = np.einsum("r,lr,kjr->jkl", qs, A, T)
    lam = basis.eigenvalues[: A.shape[0]]
    d = np.einsum("k,l,jkl,jlk->j", lam, lam, B, B)
    return d[1:]


def f_m(z: float, m: int) -> float:
    """The lag-correlation weight F_m(z) = 2 sum_{k=1}^{m-1} ((m-k)/m) z^{k-1}.

    Closed form (2/(1-z)) (1 - (1-z^m)/(m(1-z))) evaluated through
    expm1/log1p; near z = 1 (where the closed form cancels) a first-order
    expansion around F_m(1) = m - 1 takes over.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if not -1.0 <= z < 1.0 + 1e-12:
        raise ValueError("z must lie in [-1, 1)")
    if m == 1:
        return 0.0
    u = 1.0 - z
    if m * abs(u) < 1e-4:
        # F_m(z) = (m-1) [1 + (z-1)(m-2)/3 + O((m(1-z))^2 / m)]
        return (m - 1.0) * (1.0 - u * (m - 2.0) / 3.0)
    if z > 0.5:
        one_minus_zm = -math.expm1(m * math.log1p(-u))
    else:
        one_minus_zm = 1.0 - z**m
    return (2.0 / u) * (1.0 - one_minus_zm / (m * u))


def sigma_m_sq(e0_value: float, d, q, m: int) -> VarianceBreakdown:
    """Exact sliding-window variance sigma_m^2 and its m -> infinity limit.

    ``d`` and ``q`` are aligned sequences over l = 1 .. N_koopman - 1.
    The i.i.d. reference variance E_0(t)/m is reported alongside.
    """
    d = np.asarray(d, dtype=float)
    q = np.asarray(q, dtype=float)
    if d.size != q.size:
        raise ValueError("d and q must have matching lengths")
    if m < 1:
        raise ValueError("m must be positive")
    correction = float(sum(dj * f_m(qj, m) for dj, qj in zip(d, q)))
    value = e0_value + correction
    inf_value = e0_value + float(np.sum(2.0 * d / (1.0 - q))) if d.size else e0_value
    return VarianceBreakdown(
        e0=e0_value,
        correction=correction,
        sigma_m_sq=value,
        sigma_inf_sq=inf_value,
        iid_variance=e0_value / m,
        m=m,
    )


def analytic_covariance(
    basis: MercerBasis, sys: OuSystem, N_koopman: int, rule: QuadratureRule
) -> AnalyticCovariance:
    """Assemble all analytic coefficient data for one (basis, system) pair."""
    A = overlap_matrix(basis, sys, N_koopman, rule)
    qs = np.array([koopman_eigenvalue(sys, j) for j in range(N_koopman)])
    M = pair_integral_matrix(A, qs)
    hs = hs_norm_sq_analytic(basis, M)
    d = d_coefficients(basis, sys, A, rule)
    return AnalyticCovariance(
        A=A,
        M=M,
        hs_norm_sq=hs,
        e0=e0(hs),
        d=d,
        n_mercer=basis.truncation,
        n_koopman=N_koopman,
    )


def empirical_hs_norm_sq(data: PairedDataset, k: RbfKernel) -> float:
    """||Chat^{m,t}||_HS^2 = (1/m^2) sum_{k,l} k(x_k,x_l) k(y_k,y_l).

    Exact (no Mercer truncation); row-blocked so the two Gramians are never
    materialized in full for large m.
    """
    m = data.m
    block = max(1, int(2e7 / max(m, 1)))
    total = 0.0
    for start in range(0, m, block):
        stop = min(start + block, m)
        gx = gram_matrix(k, data.xs[start:stop], data.xs)
        gy = gram_matrix(k, data.ys[start:stop], data.ys)
        total += float(np.sum(gx * gy))
    return total / m**2


def empirical_cross_inner(data: PairedDataset, basis: MercerBasis, M: np.ndarray) -> float:
    """<Chat^{m,t}, C^t>_HS = sum_{k,l} lambda_k lambda_l M_{kl} S_{kl}.

    S_{kl} = (1/m) sum_r phi_k(x_r) phi_l(y_r) is the finite-data average
    replacing one pair integral.
    """
    n = M.shape[0]
    fx = feature_matrix(basis, data.xs)[:n]
    fy = feature_matrix(basis, data.ys)[:n]
    S = (fx @ fy.T) / data.m
    lam = basis.eigenvalues[:n]
    return float(np.einsum("k,l,kl,kl->", lam, lam, M, S))


def estimation_error_sq(
    data: PairedDataset, basis: MercerBasis, cov: AnalyticCovariance, k: RbfKernel
) -> float:
    """Squared HS estimation error ||C^t - Chat^{m,t}||_HS^2.

    Assembled as hs_norm_sq + empirical_hs_norm_sq - 2 * cross_inner; tiny
    negatives (round-off between exact Gram arithmetic and truncated series)
    are clamped to zero with a warning, larger ones raise.
    """
    value = (
        cov.hs_norm_sq
        + empirical_hs_norm_sq(data, k)
        - 2.0 * empirical_cross_inner(data, basis, cov.M)
    )
    if value < 0.0:
        if value > -NEGATIVE_CLAMP:
            warnings.warn(f"clamping tiny negative squared error {value:.3e} to 0")
            return 0.0
        raise ValueError(
            f"squared error {value:.3e} below -{NEGATIVE_CLAMP}: "
            "kernel/basis truncations are inconsistent"
        )
    return value
