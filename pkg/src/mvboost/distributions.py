"""Multivariate Gaussian in an unconstrained precision-Cholesky parameterization.

The distribution over y in R^p is N(mu, Sigma) with Sigma^{-1} = L^T L, where L
is upper triangular with a strictly positive diagonal.  The free parameter
vector is

    theta = (mu_1, ..., mu_p, nu_11, nu_12, ..., nu_1p, nu_22, ..., nu_pp)

i.e. means first, then the triangular entries in row-major order.  The diagonal
of L is exp(nu_ii) plus a small perturbation for numerical stability; the
off-diagonals are the nu_ij themselves.  Every finite theta therefore maps to a
valid positive definite covariance.

A two-parameter univariate Gaussian family (mu, log sigma) is provided for the
per-dimension independent baseline.

All core computations have batch variants operating on an (n, M) array of
parameter rows; these are what the boosting loop consumes.  Everything here is
a pure function of its inputs, and RNG state is always caller-supplied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

DIAG_EPS = 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))

# Jitter ladder for near-singular metric solves: relative to trace(F)/M,
# starting at 1e-9 and escalating x10 until 1e-3 before giving up.
_JITTERS = (0.0, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3)


class InvalidDimensionError(ValueError):
    """Target dimension p is not a positive integer."""


class InvalidParameterError(ValueError):
    """Parameter vector is malformed (wrong length, non-finite, ...)."""


class SingularMetricError(RuntimeError):
    """Fisher metric could not be factorized even after maximum jitter."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


def param_count(p: int) -> int:
    """Number of free parameters M = (p^2 + 3p) / 2 for target dimension p."""
    if p < 1:
        raise InvalidDimensionError(f"target dimension must be >= 1, got {p}")
    return (p * p + 3 * p) // 2


def dim_from_param_count(m: int) -> int:
    """Inverse of :func:`param_count`; errors if m is not attainable."""
    p = int(round((-3 + np.sqrt(9 + 8 * m)) / 2))
    if p < 1 or param_count(p) != m:
        raise InvalidDimensionError(f"{m} is not a valid parameter count")
    return p


def triu_layout(p: int):
    """Row/column indices of the nu entries in their theta ordering."""
    rows, cols = np.triu_indices(p)
    return rows, cols


@dataclass(frozen=True)
class ThetaVector:
    """One parameter vector theta for target dimension ``dim_p``."""

    values: np.ndarray
    dim_p: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "values", vals)
        m = param_count(self.dim_p)
        if vals.shape[0] != m:
            raise InvalidParameterError(
                f"theta for p={self.dim_p} must have length {m}, got {vals.shape[0]}"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidParameterError("theta entries must be finite")

    @property
    def mean(self) -> np.ndarray:
        return self.values[: self.dim_p]

    @property
    def nu(self) -> np.ndarray:
        return self.values[self.dim_p :]


@dataclass(frozen=True)
class ScaleMatrix:
    """Upper-triangular factor L with Sigma^{-1} = L^T L."""

    entries: np.ndarray


@dataclass(frozen=True)
class MomentForm:
    """Moment parameterization (mean, covariance) of the same distribution."""

    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class WhitenedResiduals:
    """z = mu - y and its whitening eta = L z (internal helper)."""

    z: np.ndarray
    eta: np.ndarray


# ---------------------------------------------------------------------------
# batch core: thetas is (n, M), Ys is (n, p)
# ---------------------------------------------------------------------------


def scale_matrices(thetas: np.ndarray, p: int) -> np.ndarray:
    """Materialize the (n, p, p) upper-triangular factors for a theta batch."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if not np.all(np.isfinite(thetas)):
        raise InvalidParameterError("theta entries must be finite")
    rows, cols = triu_layout(p)
    vals = thetas[:, p:].copy()
    diag = rows == cols
    vals[:, diag] = np.exp(vals[:, diag]) + DIAG_EPS
    out = np.zeros((thetas.shape[0], p, p))
    out[:, rows, cols] = vals
    return out


def _whiten(thetas, Ys, p):
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    Ys = np.atleast_2d(np.asarray(Ys, dtype=float))
    if Ys.shape[1] != p or Ys.shape[0] != thetas.shape[0]:
        raise InvalidParameterError(
            f"observation batch shape {Ys.shape} does not match (n, {p})"
        )
    L = scale_matrices(thetas, p)
    z = thetas[:, :p] - Ys
    eta = np.einsum("nij,nj->ni", L, z)
    return L, z, eta


def nll_batch(thetas, Ys, p) -> np.ndarray:
    """Per-row negative log-likelihood: sum_i(eta_i^2/2 - log a_ii) + const."""
    L, _, eta = _whiten(thetas, Ys, p)
    diag = L[:, np.arange(p), np.arange(p)]
    return 0.5 * np.sum(eta * eta, axis=1) - np.sum(np.log(diag), axis=1) + 0.5 * p * _LOG_2PI


def score_batch(thetas, Ys, p) -> np.ndarray:
    """Gradient of the negative log-likelihood w.r.t. theta, per row.

    Mean block is L^T eta; nu entries are eta_i z_j with the diagonal entries
    carrying the extra exp(nu_ii) chain factor and the log-determinant term.
    This is the exact gradient of :func:`nll_batch` including the diagonal
    perturbation, so it agrees with finite differences to machine precision.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    L, z, eta = _whiten(thetas, Ys, p)
    rows, cols = triu_layout(p)
    diag = rows == cols
    grad = np.empty_like(thetas)
    grad[:, :p] = np.einsum("nji,nj->ni", L, eta)
    g_nu = eta[:, rows] * z[:, cols]
    exp_nu = np.exp(thetas[:, p:][:, diag])
    a_diag = L[:, np.arange(p), np.arange(p)]
    g_nu[:, diag] = g_nu[:, diag] * exp_nu - exp_nu / a_diag
    grad[:, p:] = g_nu
    return grad


def fisher_batch(thetas, p) -> np.ndarray:
    """Fisher information matrices, (n, M, M), depending on theta only.

    Block structure: the mean block is the precision L^T L; the mean/nu cross
    block is identically zero; the nu block couples entries that share a row
    of L, through the covariance Sigma = (L^T L)^{-1}.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = thetas.shape[0]
    m = param_count(p)
    L = scale_matrices(thetas, p)
    prec = np.einsum("nki,nkj->nij", L, L)
    sigma = np.linalg.inv(prec)
    sigma = 0.5 * (sigma + np.transpose(sigma, (0, 2, 1)))
    rows, cols = triu_layout(p)
    a_diag = L[:, np.arange(p), np.arange(p)]

    fisher = np.zeros((n, m, m))
    fisher[:, :p, :p] = prec
    n_nu = rows.size
    for s in range(n_nu):
        i, j = rows[s], cols[s]
        for t in range(s, n_nu):
            k, q = rows[t], cols[t]
            if i == j and k == q:
                if i == k:
                    # sum_{r >= i} a_ir Sigma_ir along row i of L
                    row_sum = np.einsum("nr,nr->n", L[:, i, i:], sigma[:, i, i:])
                    val = a_diag[:, i] ** 2 * sigma[:, i, i] + a_diag[:, i] * row_sum
                else:
                    continue
            elif i == j:  # diagonal nu_ii against off-diagonal nu_kq
                if k == i:
                    val = a_diag[:, i] * sigma[:, i, q]
                else:
                    continue
            elif k == q:  # off-diagonal nu_ij against diagonal nu_kk
                if i == k:
                    val = a_diag[:, k] * sigma[:, k, j]
                else:
                    continue
            else:  # both off-diagonal
                if i == k:
                    val = sigma[:, j, q]
                else:
                    continue
            fisher[:, p + s, p + t] = val
            fisher[:, p + t, p + s] = val
    return fisher


def _solve_spd_batch(mats, rhs, thetas=None):
    """Solve mats @ x = rhs per row via Cholesky, escalating jitter on failure."""
    m = mats.shape[-1]
    scale = np.trace(mats, axis1=-2, axis2=-1) / m
    eye = np.eye(m)
    for jit in _JITTERS:
        shifted = mats if jit == 0.0 else mats + (jit * scale)[:, None, None] * eye
        try:
            chol = np.linalg.cholesky(shifted)
        except np.linalg.LinAlgError:
            continue
        half = np.linalg.solve(chol, rhs[..., None])
        x = np.linalg.solve(np.transpose(chol, (0, 2, 1)), half)[..., 0]
        if np.all(np.isfinite(x)):
            return x
    raise SingularMetricError(
        "Fisher metric not positive definite after maximum jitter", theta=thetas
    )


def natural_gradient_batch(thetas, Ys, p) -> np.ndarray:
    """Fisher-preconditioned score, solved per row."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    grad = score_batch(thetas, Ys, p)
    fisher = fisher_batch(thetas, p)
    return _solve_spd_batch(fisher, grad, thetas=thetas)


def sample_each(thetas, p, rng) -> np.ndarray:
    """One draw per parameter row: y = mu + L^{-1} u with u standard normal."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    L = scale_matrices(thetas, p)
    u = rng.standard_normal((thetas.shape[0], p))
    w = np.linalg.solve(L, u[..., None])[..., 0]
    return thetas[:, :p] + w


# ---------------------------------------------------------------------------
# single-theta interface
# ---------------------------------------------------------------------------


def build_scale_matrix(theta: ThetaVector) -> ScaleMatrix:
    """Upper-triangular L with diag exp(nu_ii) + eps and off-diag nu_ij."""
    return ScaleMatrix(scale_matrices(theta.values, theta.dim_p)[0])


def to_moment_form(theta: ThetaVector) -> MomentForm:
    """Convert to (mean, covariance) by triangular solves on L."""
    p = theta.dim_p
    L = scale_matrices(theta.values, p)[0]
    # Sigma = L^{-1} L^{-T}: two triangular solves, never a dense inverse.
    inv_l = solve_triangular(L, np.eye(p), lower=False)
    cov = inv_l @ inv_l.T
    cov = 0.5 * (cov + cov.T)
    return MomentForm(mean=theta.mean.copy(), covariance=cov)


def whitened_residuals(theta: ThetaVector, y) -> WhitenedResiduals:
    _, z, eta = _whiten(theta.values, np.asarray(y, dtype=float), theta.dim_p)
    return WhitenedResiduals(z=z[0], eta=eta[0])


def nll(theta: ThetaVector, y) -> float:
    return float(nll_batch(theta.values, np.asarray(y, dtype=float), theta.dim_p)[0])


def score(theta: ThetaVector, y) -> np.ndarray:
    return score_batch(theta.values, np.asarray(y, dtype=float), theta.dim_p)[0]


def fisher_information(theta: ThetaVector) -> np.ndarray:
    return fisher_batch(theta.values, theta.dim_p)[0]


def natural_gradient(theta: ThetaVector, y) -> np.ndarray:
    return natural_gradient_batch(
        theta.values, np.asarray(y, dtype=float), theta.dim_p
    )[0]


def sample(theta: ThetaVector, n: int, rng_seed) -> np.ndarray:
    """n i.i.d. draws from the distribution at theta, (n, p)."""
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = _as_rng(rng_seed)
    p = theta.dim_p
    L = scale_matrices(theta.values, p)[0]
    u = rng.standard_normal((n, p))
    w = solve_triangular(L, u.T, lower=False).T
    return theta.mean + w


def fit_theta_from_moments(mean, covariance) -> ThetaVector:
    """Invert the moment map: recover theta whose (mu, Sigma) match the inputs."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(covariance, dtype=float)
    p = mean.shape[0]
    theta = np.empty(param_count(p))
    theta[:p] = mean
    theta[p:] = _nu_from_covariance(cov[None, :, :], p)[0]
    return ThetaVector(theta, p)


def _nu_from_covariance(covs, p):
    """nu entries (batched) from SPD covariance matrices via Cholesky factors."""
    try:
        chol = np.linalg.cholesky(covs)  # Sigma = C C^T, C lower
    except np.linalg.LinAlgError as exc:
        raise InvalidParameterError("covariance matrix is not SPD") from exc
    # Sigma^{-1} = C^{-T} C^{-1}; its lower Cholesky factor K satisfies
    # K K^T = Sigma^{-1}, so U = K^T is the upper factor with U^T U = Sigma^{-1}.
    eye = np.broadcast_to(np.eye(p), covs.shape)
    c_inv = np.linalg.solve(chol, eye)
    prec = np.einsum("nki,nkj->nij", c_inv, c_inv)
    prec = 0.5 * (prec + np.transpose(prec, (0, 2, 1)))
    upper = np.transpose(np.linalg.cholesky(prec), (0, 2, 1))
    rows, cols = triu_layout(p)
    nus = upper[:, rows, cols].copy()
    diag = rows == cols
    diag_vals = nus[:, diag] - DIAG_EPS
    if np.any(diag_vals <= 0):
        raise InvalidParameterError(
            "covariance too large to represent: triangular diagonal below eps"
        )
    nus[:, diag] = np.log(diag_vals)
    return nus


def fit_theta_from_moments_batch(means, covs) -> np.ndarray:
    """Batched inverse moment map; means (n, p), covs (n, p, p) -> (n, M)."""
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    n, p = means.shape
    out = np.empty((n, param_count(p)))
    out[:, :p] = means
    out[:, p:] = _nu_from_covariance(covs, p)
    return out


def marginal_mle(Y) -> ThetaVector:
    """Marginal maximum-likelihood theta from a sample: mean and 1/n covariance."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, p = Y.shape
    if n <= p:
        raise InvalidParameterError(
            f"need more than p={p} rows for a marginal fit, got {n}"
        )
    mean = Y.mean(axis=0)
    centered = Y - mean
    cov = centered.T @ centered / n
    try:
        return fit_theta_from_moments(mean, cov)
    except InvalidParameterError as exc:
        raise InvalidParameterError(
            "sample covariance is singular; jitter the targets or supply more data"
        ) from exc


def kl_divergence(theta_true: ThetaVector, theta_pred: ThetaVector) -> float:
    """KL(true || pred) between the two Gaussians, in nats."""
    if theta_true.dim_p != theta_pred.dim_p:
        raise InvalidParameterError("dimension mismatch between parameter vectors")
    p = theta_true.dim_p
    sigma_true = to_moment_form(theta_true).covariance
    l_pred = scale_matrices(theta_pred.values, p)[0]
    l_true = scale_matrices(theta_true.values, p)[0]
    delta = theta_pred.mean - theta_true.mean
    # Sigma_pred^{-1} = Lp^T Lp, so the trace and quadratic terms whiten with Lp.
    trace_term = float(np.sum((l_pred @ sigma_true) * l_pred))
    quad_term = float(np.sum((l_pred @ delta) ** 2))
    # log|Sigma| = -2 sum log a_ii
    log_det_ratio = 2.0 * float(
        np.sum(np.log(np.diag(l_true))) - np.sum(np.log(np.diag(l_pred)))
    )
    return 0.5 * (trace_term + quad_term - p + log_det_ratio)


def kl_divergence_batch(thetas_true, thetas_pred, p) -> np.ndarray:
    """Row-wise KL(true || pred) for two theta batches."""
    thetas_true = np.atleast_2d(np.asarray(thetas_true, dtype=float))
    thetas_pred = np.atleast_2d(np.asarray(thetas_pred, dtype=float))
    if thetas_true.shape != thetas_pred.shape:
        raise InvalidParameterError("theta batches must have matching shapes")
    l_true = scale_matrices(thetas_true, p)
    l_pred = scale_matrices(thetas_pred, p)
    inv_lt = np.linalg.solve(l_true, np.broadcast_to(np.eye(p), l_true.shape))
    sigma_true = np.einsum("nik,njk->nij", inv_lt, inv_lt)
    delta = thetas_pred[:, :p] - thetas_true[:, :p]
    trace_term = np.einsum("nij,nij->n", np.einsum("nij,njk->nik", l_pred, sigma_true), l_pred)
    quad_term = np.sum(np.einsum("nij,nj->ni", l_pred, delta) ** 2, axis=1)
    idx = np.arange(p)
    log_det_ratio = 2.0 * (
        np.sum(np.log(l_true[:, idx, idx]), axis=1)
        - np.sum(np.log(l_pred[:, idx, idx]), axis=1)
    )
    return 0.5 * (trace_term + quad_term - p + log_det_ratio)


# ---------------------------------------------------------------------------
# univariate Gaussian family (mu, log sigma)
# ---------------------------------------------------------------------------


def uv_nll(theta2, y):
    mu, log_sigma = np.asarray(theta2, dtype=float).T
    z = np.asarray(y, dtype=float) - mu
    return 0.5 * _LOG_2PI + log_sigma + 0.5 * z * z * np.exp(-2.0 * log_sigma)


def uv_score(theta2, y):
    """Gradient of uv_nll in (mu, log sigma): ((mu - y)/sigma^2, 1 - z^2/sigma^2)."""
    theta2 = np.atleast_2d(np.asarray(theta2, dtype=float))
    mu, log_sigma = theta2.T
    z = np.asarray(y, dtype=float) - mu
    inv_var = np.exp(-2.0 * log_sigma)
    return np.stack([-z * inv_var, 1.0 - z * z * inv_var], axis=-1)


def uv_fisher(theta2):
    """Fisher information diag(1/sigma^2, 2) per row."""
    theta2 = np.atleast_2d(np.asarray(theta2, dtype=float))
    inv_var = np.exp(-2.0 * theta2[:, 1])
    out = np.zeros((theta2.shape[0], 2, 2))
    out[:, 0, 0] = inv_var
    out[:, 1, 1] = 2.0
    return out


def _as_rng(rng_seed):
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


# ---------------------------------------------------------------------------
# family adapters consumed by the boosting loop
# ---------------------------------------------------------------------------


class MvnFamily:
    """Multivariate Gaussian family for target dimension p."""

    def __init__(self, p: int):
        self.p = p
        self.n_params = param_count(p)
        self.tag = f"mvn-{p}"

    def marginal_init(self, Y):
        return marginal_mle(Y).values

    def nll(self, thetas, Ys):
        return nll_batch(thetas, Ys, self.p)

    def score(self, thetas, Ys):
        return score_batch(thetas, Ys, self.p)

    def natural_gradient(self, thetas, Ys):
        return natural_gradient_batch(thetas, Ys, self.p)


class UnivariateFamily:
    """Univariate Gaussian family (mu, log sigma) for one target column."""

    p = 1
    n_params = 2
    tag = "univariate"

    def marginal_init(self, Y):
        y = np.asarray(Y, dtype=float).reshape(-1)
        if y.size < 2:
            raise InvalidParameterError("need at least 2 rows for a marginal fit")
        var = y.var()
        if var <= 0:
            raise InvalidParameterError("degenerate targets: zero sample variance")
        return np.array([y.mean(), 0.5 * np.log(var)])

    def nll(self, thetas, Ys):
        return uv_nll(np.atleast_2d(thetas), np.asarray(Ys, dtype=float).reshape(-1))

    def score(self, thetas, Ys):
        return uv_score(thetas, np.asarray(Ys, dtype=float).reshape(-1))

    def natural_gradient(self, thetas, Ys):
        grad = self.score(thetas, Ys)
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.empty_like(grad)
        out[:, 0] = grad[:, 0] * np.exp(2.0 * thetas[:, 1])
        out[:, 1] = 0.5 * grad[:, 1]
        return out
