"""Boosting of distribution parameters with natural gradients.

Each stage fits one regression tree per parameter component to the per-row
natural gradients (Fisher-preconditioned score), scales the stage by a line
search over a fixed geometric grid, and applies the step damped by the
learning rate:

    theta(x) = theta0 - learning_rate * sum_b rho_b * f_b(x)

Early stopping watches mean validation negative log-likelihood with a
patience; the model keeps only the stages up to the best validation point and
is never refit after selection.  Setting ``natural_gradient=False`` gives the
plain-gradient ablation.  Fits are deterministic given their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    DIAG_EPS,
    InvalidParameterError,
    MvnFamily,
    UnivariateFamily,
    param_count,
)
from .trees import RegressionTree, TreeParams, fit_tree, predict_tree_batch

# rho candidates for the stage line search: {2^k : k = -10..5}; includes 1.
LINE_SEARCH_GRID = tuple(2.0**k for k in range(-10, 6))


class NonFiniteGradientError(RuntimeError):
    """A gradient blew up mid-fit; carries the offending stage and row."""

    def __init__(self, stage, row):
        super().__init__(f"non-finite gradient at stage {stage}, row {row}")
        self.stage = stage
        self.row = row


@dataclass(frozen=True)
class BoostConfig:
    n_stages_max: int = 1000
    learning_rate: float = 0.01
    patience: int = 50
    natural_gradient: bool = True
    tree_params: TreeParams = field(default_factory=TreeParams)
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_stages_max < 1:
            raise ValueError("n_stages_max must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


@dataclass(frozen=True)
class Stage:
    rho: float
    trees: tuple[RegressionTree, ...]


@dataclass(frozen=True)
class BoostModel:
    theta0: np.ndarray
    stages: tuple[Stage, ...]
    config: BoostConfig
    family_tag: str
    best_stage: int
    n_features: int
    train_nll_path: tuple[float, ...] = ()
    val_nll_path: tuple[float, ...] = ()

    @property
    def n_params(self) -> int:
        return self.theta0.shape[0]


def line_search(theta_batch, directions_batch, Y_batch, family) -> float:
    """argmin over the candidate grid of the total score after a rho step.

    If every candidate worsens the current total, returns the smallest
    candidate (2^-10) so the stage contributes a negligible step.
    """
    theta_batch = np.atleast_2d(np.asarray(theta_batch, dtype=float))
    directions_batch = np.atleast_2d(np.asarray(directions_batch, dtype=float))
    baseline = float(np.sum(family.nll(theta_batch, Y_batch)))
    best_rho = LINE_SEARCH_GRID[0]
    best_total = np.inf
    for rho in LINE_SEARCH_GRID:
        trial = theta_batch - rho * directions_batch
        with np.errstate(over="ignore", invalid="ignore"):
            totals = family.nll(trial, Y_batch)
        total = float(np.sum(totals))
        if not np.isfinite(total):
            continue
        if total < best_total:
            best_total = total
            best_rho = rho
    if best_total >= baseline:
        return LINE_SEARCH_GRID[0]
    return best_rho


def _stage_predictions(trees, X):
    return np.column_stack([predict_tree_batch(t, X) for t in trees])


def fit(X_train, Y_train, X_val=None, Y_val=None, config: BoostConfig | None = None,
        family=None) -> BoostModel:
    """Run the boosting loop for one distribution family.

    ``family`` defaults to a multivariate Gaussian sized from Y_train's column
    count.  With an empty validation set there is no early stopping and all
    fitted stages are used.
    """
    config = config or BoostConfig()
    X_train = np.atleast_2d(np.asarray(X_train, dtype=float))
    Y_train = np.asarray(Y_train, dtype=float)
    if Y_train.ndim == 1:
        Y_train = Y_train[:, None]
    if X_train.shape[0] != Y_train.shape[0]:
        raise ValueError("X_train and Y_train row counts differ")
    if family is None:
        family = MvnFamily(Y_train.shape[1]) if Y_train.shape[1] > 1 else UnivariateFamily()

    have_val = X_val is not None and Y_val is not None and len(np.atleast_1d(Y_val)) > 0
    if have_val:
        X_val = np.atleast_2d(np.asarray(X_val, dtype=float))
        Y_val = np.asarray(Y_val, dtype=float)
        if Y_val.ndim == 1:
            Y_val = Y_val[:, None]

    theta0 = family.marginal_init(Y_train)
    thetas = np.tile(theta0, (X_train.shape[0], 1))
    train_path = [float(np.mean(family.nll(thetas, Y_train)))]

    stages: list[Stage] = []
    val_path: list[float] = []
    best_stage = 0
    best_val = np.inf
    if have_val:
        thetas_val = np.tile(theta0, (X_val.shape[0], 1))
        best_val = float(np.mean(family.nll(thetas_val, Y_val)))
        val_path.append(best_val)

    for b in range(1, config.n_stages_max + 1):
        if config.natural_gradient:
            grads = family.natural_gradient(thetas, Y_train)
        else:
            grads = family.score(thetas, Y_train)
        finite_rows = np.all(np.isfinite(grads), axis=1)
        if not finite_rows.all():
            raise NonFiniteGradientError(b, int(np.argmin(finite_rows)))

        trees = tuple(
            fit_tree(X_train, grads[:, m], config.tree_params)
            for m in range(family.n_params)
        )
        f_train = _stage_predictions(trees, X_train)
        rho = line_search(thetas, f_train, Y_train, family)
        thetas = thetas - config.learning_rate * rho * f_train
        stages.append(Stage(rho=rho, trees=trees))
        train_path.append(float(np.mean(family.nll(thetas, Y_train))))

        if have_val:
            thetas_val = thetas_val - config.learning_rate * rho * _stage_predictions(trees, X_val)
            val_nll = float(np.mean(family.nll(thetas_val, Y_val)))
            val_path.append(val_nll)
            if val_nll < best_val:  # strict: ties keep the earlier, smaller model
                best_val = val_nll
                best_stage = b
            elif b - best_stage >= max(config.patience, 1):
                break

    if not have_val:
        best_stage = len(stages)

    return BoostModel(
        theta0=theta0,
        stages=tuple(stages),
        config=config,
        family_tag=family.tag,
        best_stage=best_stage,
        n_features=X_train.shape[1],
        train_nll_path=tuple(train_path),
        val_nll_path=tuple(val_path),
    )


def predict_theta(model: BoostModel, X) -> np.ndarray:
    """Per-row theta, using stages up to best_stage only; (n, M)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"model expects {model.n_features} features, got {X.shape[1]}"
        )
    thetas = np.tile(model.theta0, (X.shape[0], 1))
    lr = model.config.learning_rate
    for stage in model.stages[: model.best_stage]:
        thetas -= lr * stage.rho * _stage_predictions(stage.trees, X)
    return thetas


@dataclass(frozen=True)
class IndependentModel:
    """p univariate boosting fits assembled into a diagonal-covariance MVN."""

    models: tuple[BoostModel, ...]

    @property
    def p(self) -> int:
        return len(self.models)

    def predict_theta(self, X) -> np.ndarray:
        """Joint theta with nu_ij = 0 off the diagonal; (n, M_mvn)."""
        p = self.p
        parts = [predict_theta(m, X) for m in self.models]
        n = parts[0].shape[0]
        out = np.zeros((n, param_count(p)))
        pos = p
        for i, part in enumerate(parts):
            out[:, i] = part[:, 0]
            # a_ii must equal 1/sigma_i, net of the diagonal perturbation
            out[:, pos] = np.log(np.exp(-part[:, 1]) - DIAG_EPS)
            pos += p - i
        return out


def fit_independent(X_train, Y_train, X_val=None, Y_val=None,
                    config: BoostConfig | None = None) -> IndependentModel:
    """One univariate fit per target column, each with its own early stopping."""
    Y_train = np.asarray(Y_train, dtype=float)
    if Y_train.ndim != 2 or Y_train.shape[1] < 1:
        raise InvalidParameterError("Y_train must be (n, p) with p >= 1")
    models = []
    for j in range(Y_train.shape[1]):
        y_val_j = None if Y_val is None else np.asarray(Y_val, dtype=float)[:, j]
        models.append(
            fit(X_train, Y_train[:, j], X_val, y_val_j, config, family=UnivariateFamily())
        )
    return IndependentModel(models=tuple(models))
