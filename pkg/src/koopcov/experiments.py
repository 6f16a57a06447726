"""Experiment orchestration: error-bound sweeps, prediction sweeps, validation.

Reproduces the two benchmark studies on the analytic OU test case:

* estimation: for each (bandwidth, m), Chebyshev confidence radii from three
  variance sources (exact sliding-window variance, coarse upper bound,
  i.i.d. variance) against the empirical 0.9-percentile of the HS estimation
  error over independent sliding-window replicates;
* prediction: the spectral prediction bound against the measured L2_mu error
  of the rank-N empirical Koopman predictor applied to the first Mercer
  feature.

Plus a machine-readable validation suite exercising every analytic identity,
and SVG renderings of both sweeps.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import bounds as bnd
from . import covariance as cov_ops
from . import ou as ou_mod
from . import predictor as pred_mod
from . import rkhs as rkhs_mod
from .quadrature import gauss_hermite

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "CSV_HEADER",
    "run_estimation_experiment",
    "run_prediction_experiment",
    "run_validation_suite",
    "emit_plots",
]

CSV_HEADER = "experiment,sigma,m,replicate,error,bound_exact,bound_coarse,bound_iid,runtime_s"


def _default_m_grid():
    grid = np.unique(np.round(np.geomspace(20, 50_000, 12)).astype(int))
    return [int(v) for v in grid]


@dataclass
class ExperimentConfig:
    """Protocol constants for both sweeps (defaults follow the benchmark)."""

    alpha: float = 1.0
    lag: float = 0.05
    bandwidths: tuple = (0.05, 0.1, 0.5)
    m_grid: list = field(default_factory=_default_m_grid)
    replicates_estimation: int = 200
    replicates_prediction: int = 20
    delta: float = 0.1
    n_koopman: int = 15
    base_seed: int = 0
    quadrature_order: int = 128
    validation_truncation: int = 256
    # mercer truncation per bandwidth; narrow kernels need more terms
    mercer_truncation_default: int = 10
    mercer_truncation_narrow: int = 20
    narrow_threshold: float = 0.075

    def n_mercer(self, bandwidth: float) -> int:
        if bandwidth <= self.narrow_threshold:
            return self.mercer_truncation_narrow
        return self.mercer_truncation_default

    def apply_preset(self, preset: str) -> "ExperimentConfig":
        if preset == "full":
            return self
        if preset == "quick":
            self.m_grid = [m for m in self.m_grid if m <= 5000]
            self.replicates_estimation = min(self.replicates_estimation, 50)
            return self
        raise ValueError(f"unknown preset {preset!r}")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        cfg = cls()
        for key, value in raw.items():
            if not hasattr(cfg, key):
                raise KeyError(f"unknown config field {key!r}")
            setattr(cfg, key, tuple(value) if key == "bandwidths" else value)
        return cfg

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=list)
            fh.write("\n")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sigma: float
    m: int
    replicate: str
    error: float
    bound_exact: float
    bound_coarse: float
    bound_iid: float
    runtime_s: float

    def as_csv(self) -> str:
        fields = [
            self.experiment,
            repr(float(self.sigma)),
            str(self.m),
            self.replicate,
            repr(float(self.error)),
            repr(float(self.bound_exact)),
            repr(float(self.bound_coarse)),
            repr(float(self.bound_iid)),
            repr(float(self.runtime_s)),
        ]
        return ",".join(fields)


def _write_csv(rows, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.as_csv() + "\n")
    return path


def _analytic_stack(cfg: ExperimentConfig, bandwidth: float):
    """(system, kernel, basis, analytic covariance) for one bandwidth."""
    sys = ou_mod.OuSystem(cfg.alpha, cfg.lag)
    kernel = rkhs_mod.RbfKernel(bandwidth)
    basis = rkhs_mod.mercer_basis(cfg.alpha, bandwidth, cfg.n_mercer(bandwidth))
    rule = gauss_hermite(cfg.quadrature_order)
    cov = cov_ops.analytic_covariance(basis, sys, cfg.n_koopman, rule)
    return sys, kernel, basis, cov


def run_estimation_experiment(cfg: ExperimentConfig, out_dir) -> Path:
    """HS estimation-error sweep; writes <out_dir>/estimation.csv."""
    rows = []
    for sigma in sorted(cfg.bandwidths):
        sys, kernel, basis, cov = _analytic_stack(cfg, sigma)
        q1 = ou_mod.koopman_eigenvalue(sys, 1)
        q_tail = np.array(
            [ou_mod.koopman_eigenvalue(sys, j) for j in range(1, cfg.n_koopman)]
        )
        for m in sorted(cfg.m_grid):
            vb = cov_ops.sigma_m_sq(cov.e0, cov.d, q_tail, m)
            query = bnd.ConfidenceQuery(m=m, delta=cfg.delta)
            bound_exact = bnd.chebyshev_radius(vb.sigma_m_sq, query)
            _, _, remark = bnd.coarse_sigma_bounds(cov.e0, q1, m)
            bound_coarse = bnd.chebyshev_radius(remark, query)
            bound_iid = bnd.chebyshev_radius(cov.e0, query)
            errors = []
            for rep in range(cfg.replicates_estimation):
                t0 = time.perf_counter()
                try:
                    data = cov_ops.sliding_window_dataset(sys, m, [cfg.base_seed, rep])
                    err = math.sqrt(
                        cov_ops.estimation_error_sq(data, basis, cov, kernel)
                    )
                except Exception:
                    rows.append(
                        ResultRow("estimation", sigma, m, f"error:{rep}", float("nan"),
                                  bound_exact, bound_coarse, bound_iid,
                                  time.perf_counter() - t0)
                    )
                    continue
                errors.append(err)
                rows.append(
                    ResultRow("estimation", sigma, m, str(rep), err,
                              bound_exact, bound_coarse, bound_iid,
                              time.perf_counter() - t0)
                )
            if errors:
                errs = np.asarray(errors)
                rows.append(ResultRow("estimation", sigma, m, "p90",
                                      float(np.quantile(errs, 0.9)),
                                      bound_exact, bound_coarse, bound_iid, 0.0))
                rows.append(ResultRow("estimation", sigma, m, "p90_sq",
                                      float(np.quantile(errs**2, 0.9)),
                                      bound_exact**2, bound_coarse**2, bound_iid**2, 0.0))
                rows.append(ResultRow("estimation", sigma, m, "median",
                                      float(np.median(errs)),
                                      bound_exact, bound_coarse, bound_iid, 0.0))
    return _write_csv(rows, Path(out_dir) / "estimation.csv")


def _prediction_m_grid(cfg: ExperimentConfig):
    """Thin the m-grid for the prediction sweep (each cell needs a dense
    eigendecomposition, so at most four log-spread sample sizes are used)."""
    grid = sorted(cfg.m_grid)
    if len(grid) <= 4:
        return grid
    idx = np.unique(np.round(np.linspace(0, len(grid) - 1, 4)).astype(int))
    return [grid[i] for i in idx]


def run_prediction_experiment(cfg: ExperimentConfig, out_dir) -> Path:
    """Prediction-error sweep for phi = first Mercer feature; writes prediction.csv."""
    rows = []
    rule = gauss_hermite(cfg.quadrature_order)
    for sigma in sorted(cfg.bandwidths):
        sys, kernel, basis, cov = _analytic_stack(cfg, sigma)
        N = cfg.n_mercer(sigma)
        lam = basis.eigenvalues
        # N features retained -> bound needs lambda_N and lambda_{N+1}
        # (1-based); extend the geometric sequence by one if necessary.
        lam_n = float(lam[N - 1])
        lam_n1 = float(lam[N] if lam.size > N else lam[N - 1] * basis.eigenvalue_ratio)
        full_lam = np.append(lam, lam[-1] * basis.eigenvalue_ratio)
        delta_n = bnd.spectral_gap(full_lam, N)
        q_tail = np.array(
            [ou_mod.koopman_eigenvalue(sys, j) for j in range(1, cfg.n_koopman)]
        )
        # observable: the first Mercer feature, itself a Gaussian bump
        amp = math.exp(basis.log_gamma[0]) * basis.corrections[0]
        obs = ou_mod.GaussianObservable(
            mean=0.0, variance=1.0 / (2.0 * basis.zeta_sq), normalization=amp
        )
        target = pred_mod.analytic_truncated_prediction(basis, sys, obs, N, rule)
        for m in _prediction_m_grid(cfg):
            vb = cov_ops.sigma_m_sq(cov.e0, cov.d, q_tail, m)
            query = bnd.ConfidenceQuery(m=m, delta=cfg.delta)
            eps = bnd.chebyshev_radius(vb.sigma_m_sq, query)
            eps_iid = bnd.chebyshev_radius(cov.e0, query)
            inputs = bnd.PredictionBoundInputs(
                N=N, lambda_n=lam_n, lambda_n1=lam_n1, delta_n=delta_n,
                epsilon=eps, koopman_rkhs_norm=math.exp(cfg.alpha * cfg.lag / 2.0),
            )
            # The epsilon < delta_N hypothesis fails at practical sample
            # sizes; the tabulated bound values are indicative (and still
            # dominate the measured errors by orders of magnitude).
            bound_exact = bnd.prediction_bound(inputs, enforce_hypothesis=False)
            bound_coarse = bnd.full_bound(inputs, enforce_hypothesis=False)
            iid_inputs = bnd.PredictionBoundInputs(
                N=N, lambda_n=lam_n, lambda_n1=lam_n1, delta_n=delta_n,
                epsilon=eps_iid, koopman_rkhs_norm=inputs.koopman_rkhs_norm,
            )
            bound_iid = bnd.prediction_bound(iid_inputs, enforce_hypothesis=False)
            errors = []
            for rep in range(cfg.replicates_prediction):
                t0 = time.perf_counter()
                try:
                    data = cov_ops.sliding_window_dataset(sys, m, [cfg.base_seed, rep])
                    feats = pred_mod.empirical_features(data, kernel, N)

                    def predicted(x, _d=data, _f=feats):
                        return pred_mod.predict(_f, _d, kernel, obs, x)

                    err = pred_mod.l2mu_error(target, predicted, sys, rule)
                except Exception:
                    rows.append(
                        ResultRow("prediction", sigma, m, f"error:{rep}", float("nan"),
                                  bound_exact, bound_coarse, bound_iid,
                                  time.perf_counter() - t0)
                    )
                    continue
                errors.append(err)
                rows.append(
                    ResultRow("prediction", sigma, m, str(rep), err,
                              bound_exact, bound_coarse, bound_iid,
                              time.perf_counter() - t0)
                )
            if errors:
                errs = np.asarray(errors)
                for tag, value in (
                    ("mean", float(errs.mean())),
                    ("std", float(errs.std(ddof=1)) if errs.size > 1 else 0.0),
                    ("median", float(np.median(errs))),
                ):
                    rows.append(ResultRow("prediction", sigma, m, tag, value,
                                          bound_exact, bound_coarse, bound_iid, 0.0))
    return _write_csv(rows, Path(out_dir) / "prediction.csv")


# ---------------------------------------------------------------------------
# validation suite


def _check(name, measured, tolerance, info=""):
    status = "pass" if measured <= tolerance else "fail"
    return {
        "check": name,
        "status": status,
        "measured": float(measured),
        "tolerance": float(tolerance),
        "info": info,
    }


def run_validation_suite(cfg: ExperimentConfig, out_dir) -> Path:
    """Execute every analytic-identity oracle; writes validation.json."""
    from scipy.integrate import quad

    checks = []
    sys = ou_mod.OuSystem(cfg.alpha, cfg.lag)
    rule = gauss_hermite(cfg.quadrature_order)
    big_rule = gauss_hermite(min(2 * cfg.validation_truncation, 512))

    for sigma in sorted(cfg.bandwidths):
        basis = rkhs_mod.mercer_basis(cfg.alpha, sigma, cfg.validation_truncation)
        lam = basis.eigenvalues
        checks.append(_check(
            f"mercer_trace sigma={sigma}", abs(lam.sum() - 1.0), 1e-5,
            f"{cfg.validation_truncation} terms",
        ))
        # feature orthonormality on the exact substituted rule
        u = rule.nodes
        poly = rkhs_mod.feature_polypart_matrix(basis, u / (math.sqrt(cfg.alpha) * basis.eta))[:21]
        g = (poly * rule.weights[None, :]) @ poly.T / (basis.eta * math.sqrt(math.pi))
        checks.append(_check(
            f"mercer_orthonormality sigma={sigma}",
            float(np.max(np.abs(g - np.eye(21)))), 1e-8, "i,j <= 20, order 128",
        ))
        # reconstruction of the kernel from the truncated series
        grid = np.linspace(-1.5, 1.5, 13)
        fm = rkhs_mod.feature_matrix(basis, grid)
        recon = (fm * lam[:, None]).T @ fm
        kernel = rkhs_mod.RbfKernel(sigma)
        exact = rkhs_mod.gram_matrix(kernel, grid, grid)
        # the achievable accuracy is limited by the eigenvalue tail beyond
        # the truncation (dominant on the diagonal where all terms add up)
        ratio = basis.eigenvalue_ratio
        tail = float(lam[-1]) * ratio / (1.0 - ratio)
        checks.append(_check(
            f"mercer_reconstruction sigma={sigma}",
            float(np.max(np.abs(recon - exact))), max(1e-6, 2.0 * tail),
            f"{cfg.validation_truncation} terms; eigenvalue tail {tail:.2e}",
        ))
        # kernel-section propagation against adaptive quadrature
        tau, nu, center = ou_mod.propagate_kernel_section(sys, sigma, 0.3)
        worst = 0.0
        for x in np.linspace(-1.2, 1.2, 9):
            target, _ = quad(
                lambda y: math.exp(-((y - 0.3) ** 2) / sigma**2)
                * math.exp(-((y - sys.decay * x) ** 2) / (2 * sys.transition_variance))
                / math.sqrt(2 * math.pi * sys.transition_variance),
                -np.inf, np.inf,
            )
            closed = tau * math.exp(-((x - center) ** 2) / nu**2)
            worst = max(worst, abs(closed - target))
        checks.append(_check(
            f"kernel_section_propagation sigma={sigma}", worst, 1e-8, "z=0.3, 9-point grid",
        ))

    # Koopman eigenfunction orthonormality + eigenrelation
    jmax = 15
    u = rule.nodes
    psi = ou_mod.koopman_eigenfunction_matrix(sys, jmax + 1, u / math.sqrt(cfg.alpha))
    g = (psi * rule.weights[None, :]) @ psi.T / math.sqrt(math.pi)
    checks.append(_check(
        "koopman_orthonormality", float(np.max(np.abs(g - np.eye(jmax + 1)))), 1e-8,
        "j <= 15, order 128",
    ))
    corrections = [ou_mod.koopman_normalization(sys, j) for j in range(jmax + 1)]
    checks.append(_check(
        "koopman_normalization_correction",
        float(max(abs(c - 1.0) for c in corrections)), 1e-12,
        "renormalization factors are unity up to round-off",
    ))
    grid = np.linspace(-2.0, 2.0, 41)
    worst = 0.0
    for j in range(jmax + 1):
        qj = ou_mod.koopman_eigenvalue(sys, j)
        for x in grid:
            from .quadrature import integrate_gaussian

            lhs = integrate_gaussian(
                lambda y, _j=j: ou_mod.koopman_eigenfunction(sys, _j, y),
                sys.decay * x, sys.transition_variance, rule,
            )
            worst = max(worst, abs(lhs - qj * ou_mod.koopman_eigenfunction(sys, j, x)))
    checks.append(_check("koopman_eigenrelation", worst, 1e-8, "j <= 15, 41-point grid"))

    # Gaussian propagation: which effective-variance variant passes
    obs = ou_mod.GaussianObservable(mean=0.2, variance=0.09)
    k_phi = ou_mod.propagate_gaussian(sys, obs)
    variant_errors = {}
    for label, extra in (
        ("sigma0_sq_plus_transition_variance", sys.transition_variance),
        ("sigma0_sq_plus_v_t_sq", sys.v_t_sq),
    ):
        s_t_sq = obs.variance + extra
        amp = obs.normalization * math.sqrt(obs.variance / s_t_sq)
        worst = 0.0
        for x in np.linspace(-1.5, 1.5, 11):
            target, _ = quad(
                lambda y: obs(y)
                * math.exp(-((y - sys.decay * x) ** 2) / (2 * sys.transition_variance))
                / math.sqrt(2 * math.pi * sys.transition_variance),
                -np.inf, np.inf,
            )
            value = amp * math.exp(-((obs.mean - sys.decay * x) ** 2) / (2 * s_t_sq))
            worst = max(worst, abs(value - target))
        variant_errors[label] = worst
    resolved = min(variant_errors, key=variant_errors.get)
    checks.append(_check(
        "gaussian_propagation_variant", variant_errors[resolved], 1e-8,
        f"resolved effective variance: {resolved}; "
        f"alternative deviates by {max(variant_errors.values()):.3e}",
    ))
    shipped_worst = max(
        abs(float(k_phi(x)) - quad(
            lambda y: obs(y)
            * math.exp(-((y - sys.decay * x) ** 2) / (2 * sys.transition_variance))
            / math.sqrt(2 * math.pi * sys.transition_variance),
            -np.inf, np.inf,
        )[0])
        for x in np.linspace(-1.5, 1.5, 11)
    )
    checks.append(_check("gaussian_propagation_shipped", shipped_worst, 1e-8))

    # F_m identities
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(200):
        z = rng.uniform(-0.99, 0.99)
        m = int(rng.integers(2, 2000))
        series = 2.0 * sum((m - k) / m * z ** (k - 1) for k in range(1, m))
        worst = max(worst, abs(series - cov_ops.f_m(z, m)))
    checks.append(_check("f_m_series_vs_closed", worst, 1e-12))
    checks.append(_check("f_m_limit_z_to_1", abs(cov_ops.f_m(1 - 1e-12, 50) - 49.0), 1e-6))

    # coarse chain + quadrature-order sensitivity
    worst_chain = 0.0
    worst_order = 0.0
    q1 = ou_mod.koopman_eigenvalue(sys, 1)
    q_tail = np.array([ou_mod.koopman_eigenvalue(sys, j) for j in range(1, cfg.n_koopman)])
    for sigma in sorted(cfg.bandwidths):
        basis = rkhs_mod.mercer_basis(cfg.alpha, sigma, cfg.n_mercer(sigma))
        cov = cov_ops.analytic_covariance(basis, sys, cfg.n_koopman, rule)
        cov64 = cov_ops.analytic_covariance(
            basis, sys, cfg.n_koopman, gauss_hermite(64)
        )
        for m in (1, 10, 100, 10_000):
            vb = cov_ops.sigma_m_sq(cov.e0, cov.d, q_tail, m)
            simple, squared, remark = bnd.coarse_sigma_bounds(cov.e0, q1, m)
            worst_chain = max(
                worst_chain,
                cov.e0 - vb.sigma_m_sq,
                vb.sigma_m_sq - simple,
                simple - squared,
                vb.sigma_m_sq - remark,
            )
            vb64 = cov_ops.sigma_m_sq(cov64.e0, cov64.d, q_tail, m)
            worst_order = max(
                worst_order,
                abs(vb64.sigma_m_sq - vb.sigma_m_sq) / vb.sigma_m_sq,
            )
    checks.append(_check("coarse_bound_chain", worst_chain, 1e-12))
    checks.append(_check(
        "quadrature_order_sensitivity", worst_order, 1e-10, "order 64 vs 128",
    ))

    # whitening identity on a random dataset
    kernel = rkhs_mod.RbfKernel(0.5)
    data = cov_ops.sliding_window_dataset(sys, 200, cfg.base_seed)
    feats = pred_mod.empirical_features(data, kernel, 8)
    gram = rkhs_mod.gram_matrix(kernel, feats.feature_xs, feats.feature_xs)
    whitened = feats.coefficients.T @ gram @ gram @ feats.coefficients / feats.feature_xs.size
    checks.append(_check(
        "whitening_identity",
        float(np.max(np.abs(np.diag(whitened) - 1.0))), 1e-8, "m=200, N=8",
    ))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "validation.json"
    with open(path, "w") as fh:
        json.dump(checks, fh, indent=2)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# plotting


class SchemaError(ValueError):
    pass


def _read_rows(csv_path):
    with open(csv_path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{csv_path}: empty file, expected header {CSV_HEADER}")
        expected = CSV_HEADER.split(",")
        if header != expected:
            bad = next(
                (f"{a!r} != {b!r}" for a, b in zip(header, expected) if a != b),
                f"column count {len(header)} != {len(expected)}",
            )
            raise SchemaError(f"{csv_path}: schema mismatch ({bad})")
        return [dict(zip(expected, row)) for row in reader]


def emit_plots(csv_paths, out_dir) -> list:
    """Render log-log sweeps from the CSVs; returns the SVG paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for csv_path in csv_paths:
        rows = _read_rows(csv_path)
        kinds = {r["experiment"] for r in rows}
        name = Path(csv_path).stem
        fig, ax = plt.subplots(figsize=(7, 5))
        if "estimation" in kinds:
            _plot_estimation(ax, rows)
        elif "prediction" in kinds:
            _plot_prediction(ax, rows)
        ax.set_xlabel("m")
        ax.set_ylabel("error / bound")
        if rows:
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.legend(fontsize=7)
        path = out / f"{name}.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def _cells(rows, tag):
    by_sigma = {}
    for r in rows:
        if r["replicate"] != tag:
            continue
        by_sigma.setdefault(float(r["sigma"]), []).append(
            (int(r["m"]), float(r["error"]),
             float(r["bound_exact"]), float(r["bound_coarse"]), float(r["bound_iid"]))
        )
    for sigma in by_sigma:
        by_sigma[sigma].sort()
    return by_sigma


def _plot_estimation(ax, rows):
    for sigma, cells in sorted(_cells(rows, "p90").items()):
        ms = [c[0] for c in cells]
        ax.plot(ms, [c[1] for c in cells], "o-", label=f"p90 err, sigma={sigma}")
        ax.plot(ms, [c[2] for c in cells], "--", label=f"exact-variance bound, sigma={sigma}")
        ax.plot(ms, [c[3] for c in cells], ":", label=f"coarse bound, sigma={sigma}")
        ax.plot(ms, [c[4] for c in cells], "-.", label=f"iid bound, sigma={sigma}")


def _plot_prediction(ax, rows):
    means = _cells(rows, "mean")
    stds = _cells(rows, "std")
    for sigma, cells in sorted(means.items()):
        ms = [c[0] for c in cells]
        errs = [c[1] for c in cells]
        sigma_std = [c[1] for c in stds.get(sigma, [(m, 0.0) for m in ms])]
        ax.errorbar(ms, errs, yerr=sigma_std, fmt="o-", capsize=3,
                    label=f"measured, sigma={sigma}")
        ax.plot(ms, [c[2] for c in cells], "--", label=f"bound, sigma={sigma}")
