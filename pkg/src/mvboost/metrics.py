"""Evaluation metrics for joint probabilistic forecasts.

Covers mean negative log-likelihood, RMSE of the predictive mean, KL
divergence to a known generating distribution, and elliptical prediction
regions: an observation is covered at level alpha when its squared Mahalanobis
distance is below the chi-square quantile with p degrees of freedom, and the
region's area follows from the chi-square radius and the covariance
determinant.  Mahalanobis terms are computed through the triangular factor
(no explicit covariance inverse).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .distributions import (
    ThetaVector,
    kl_divergence_batch,
    nll_batch,
    scale_matrices,
)


@dataclass(frozen=True)
class MetricsReport:
    nll_mean: float
    rmse: float
    pr_alpha: float
    pr_coverage: float
    pr_area_mean: float
    n_points: int
    kl_mean: float | None = None


def _as_batch(thetas, Ys):
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    Ys = np.atleast_2d(np.asarray(Ys, dtype=float))
    if thetas.shape[0] != Ys.shape[0]:
        raise ValueError("theta and observation counts differ")
    if thetas.shape[0] == 0:
        raise ValueError("empty input")
    return thetas, Ys


def mean_nll(thetas, Ys) -> float:
    thetas, Ys = _as_batch(thetas, Ys)
    return float(np.mean(nll_batch(thetas, Ys, Ys.shape[1])))


def rmse(thetas, Ys) -> float:
    """sqrt of the per-coordinate mean squared error of the predictive mean."""
    thetas, Ys = _as_batch(thetas, Ys)
    p = Ys.shape[1]
    resid = Ys - thetas[:, :p]
    return float(np.sqrt(np.mean(resid * resid)))


def chi2_cdf(x, dof) -> float:
    """Chi-square CDF via the regularized lower incomplete gamma."""
    if x <= 0:
        return 0.0
    return float(gammainc(dof / 2.0, x / 2.0))


def chi2_quantile(p_dof: int, alpha: float) -> float:
    """Inverse chi-square CDF by bisection with a Newton polish, abs tol 1e-10."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if p_dof < 1:
        raise ValueError("degrees of freedom must be >= 1")
    lo, hi = 0.0, float(p_dof)
    while chi2_cdf(hi, p_dof) < alpha:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, p_dof) < alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    x = 0.5 * (lo + hi)
    half = p_dof / 2.0
    log_norm = half * math.log(2.0) + math.lgamma(half)
    for _ in range(10):
        pdf = math.exp((half - 1.0) * math.log(x) - x / 2.0 - log_norm)
        if pdf <= 0.0:
            break
        step = (chi2_cdf(x, p_dof) - alpha) / pdf
        x -= step
        if abs(step) < 1e-12:
            break
    return x


def mahalanobis_sq(thetas, Ys, p) -> np.ndarray:
    """(y - mu)^T Sigma^{-1} (y - mu) per row, as ||L (y - mu)||^2."""
    L = scale_matrices(thetas, p)
    resid = np.atleast_2d(np.asarray(Ys, dtype=float)) - np.atleast_2d(thetas)[:, :p]
    eta = np.einsum("nij,nj->ni", L, resid)
    return np.sum(eta * eta, axis=1)


def pr_covered(theta: ThetaVector, y, alpha: float) -> bool:
    """True iff y lies inside the alpha-level elliptical prediction region."""
    d2 = mahalanobis_sq(theta.values[None, :], np.asarray(y, dtype=float)[None, :], theta.dim_p)
    return bool(d2[0] <= chi2_quantile(theta.dim_p, alpha))


def pr_area(theta: ThetaVector, alpha: float) -> float:
    """Hyper-volume of the alpha-level region for a single theta."""
    return float(pr_area_batch(theta.values[None, :], theta.dim_p, alpha)[0])


def pr_area_batch(thetas, p, alpha) -> np.ndarray:
    """(2 pi)^{p/2} / (p Gamma(p/2)) * chi2_{p,alpha}^{p/2} * |Sigma|^{1/2} per row."""
    quantile = chi2_quantile(p, alpha)
    const = (2.0 * math.pi) ** (p / 2.0) / (p * math.gamma(p / 2.0))
    L = scale_matrices(thetas, p)
    idx = np.arange(p)
    sqrt_det_sigma = 1.0 / np.prod(L[:, idx, idx], axis=1)
    return const * quantile ** (p / 2.0) * sqrt_det_sigma


def pr_coverage_rate(thetas, Ys, p, alpha) -> float:
    d2 = mahalanobis_sq(thetas, Ys, p)
    return float(np.mean(d2 <= chi2_quantile(p, alpha)))


def evaluate(thetas_pred, Ys, thetas_true=None, alpha: float = 0.9) -> MetricsReport:
    """Assemble all metrics; KL only when the generating thetas are known.

    kl_mean is the divergence from the predicted to the generating
    distribution, KL(pred || true), so over-dispersed predictions in regions
    of small true variance are penalized.
    """
    thetas_pred, Ys = _as_batch(thetas_pred, Ys)
    p = Ys.shape[1]
    kl_mean = None
    if thetas_true is not None:
        thetas_true = np.atleast_2d(np.asarray(thetas_true, dtype=float))
        if thetas_true.shape[0] != Ys.shape[0]:
            raise ValueError("ground-truth theta count differs from observations")
        kl_mean = float(np.mean(kl_divergence_batch(thetas_pred, thetas_true, p)))
    return MetricsReport(
        nll_mean=mean_nll(thetas_pred, Ys),
        rmse=rmse(thetas_pred, Ys),
        pr_alpha=alpha,
        pr_coverage=pr_coverage_rate(thetas_pred, Ys, p, alpha),
        pr_area_mean=float(np.mean(pr_area_batch(thetas_pred, p, alpha))),
        n_points=Ys.shape[0],
        kl_mean=kl_mean,
    )
