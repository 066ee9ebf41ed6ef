"""Command-line surface: simulate | train | predict | evaluate | benchmark.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
Every command is deterministic given its flags and seeds.
"""

from __future__ import annotations

import datetime
import functools
import os
import sys

import click
import numpy as np

from . import boosting, metrics, simulation
from .data_io import DataError, DatasetSpec, MinMaxScaling, load_dataset, read_table, write_csv
from .distributions import (
    DIAG_EPS,
    InvalidParameterError,
    MvnFamily,
    SingularMetricError,
    nll_batch,
    scale_matrices,
    triu_layout,
)
from .model_io import ModelFormatError, load_model, save_model
from .trees import HAVE_COMPILED_KERNEL, TreeParams

EXIT_DATA_ERROR = 3
EXIT_NUMERIC_ERROR = 4


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (DataError, ModelFormatError) as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA_ERROR)
        except (SingularMetricError, InvalidParameterError,
                boosting.NonFiniteGradientError, np.linalg.LinAlgError) as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC_ERROR)

    return wrapper


def _check_overwrite(path, force):
    if os.path.exists(path) and not force:
        raise click.ClickException(f"refusing to overwrite {path} (use --force)")


@click.group()
@click.version_option(package_name="mvboost", message="%(version)s")
def main():
    """Joint multivariate probabilistic regression with natural-gradient boosting."""


@main.command("simulate")
@click.option("--n", type=int, required=True, help="Number of rows to draw.")
@click.option("--variant", type=click.Choice(simulation.VARIANTS), default="modified",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Output dataset CSV.")
@click.option("--force", is_flag=True, help="Overwrite existing outputs.")
@_handle_errors
def cmd_simulate(n, variant, seed, out, force):
    """Write a dataset CSV (x,y1,y2) plus a truth sidecar with the generating parameters."""
    truth_path = _truth_path(out)
    _check_overwrite(out, force)
    _check_overwrite(truth_path, force)
    data = simulation.generate(n, variant, seed)
    write_csv(out, ["x", "y1", "y2"],
              [(float(x), float(y1), float(y2))
               for x, (y1, y2) in zip(data.X[:, 0], data.Y)])
    mu1, mu2, var1, var2, rho = simulation.true_moments(data.X[:, 0], variant)
    write_csv(truth_path, ["x", "mu1", "mu2", "var1", "var2", "rho"],
              [tuple(map(float, row))
               for row in zip(data.X[:, 0], mu1, mu2, var1, var2, rho)])
    click.echo(f"wrote {n} rows to {out} (+ {truth_path})")


def _truth_path(out):
    stem, ext = os.path.splitext(out)
    return f"{stem}_truth{ext or '.csv'}"


def _config_options(func):
    options = [
        click.option("--stages", type=int, default=1000, show_default=True,
                     help="Maximum boosting stages."),
        click.option("--learning-rate", type=float, default=0.01, show_default=True),
        click.option("--patience", type=int, default=50, show_default=True),
        click.option("--max-depth", type=int, default=3, show_default=True),
        click.option("--min-samples-leaf", type=int, default=1, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
    ]
    for opt in reversed(options):
        func = opt(func)
    return func


def _build_config(stages, learning_rate, patience, max_depth, min_samples_leaf, seed,
                  natural_gradient=True):
    return boosting.BoostConfig(
        n_stages_max=stages,
        learning_rate=learning_rate,
        patience=patience,
        natural_gradient=natural_gradient,
        tree_params=TreeParams(max_depth=max_depth, min_samples_leaf=min_samples_leaf),
        rng_seed=seed,
    )


def _parse_columns(text):
    return tuple(c.strip() for c in text.split(",") if c.strip())


@main.command("train")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--targets", required=True, help="Comma-separated target column names.")
@click.option("--features", default=None,
              help="Comma-separated feature columns (default: all non-target columns).")
@click.option("--val-file", type=click.Path(exists=True), default=None,
              help="Separate validation CSV with the same schema.")
@click.option("--val-frac", type=float, default=0.2, show_default=True,
              help="Held-out validation fraction when no --val-file is given.")
@click.option("--independent", is_flag=True, help="Fit each target dimension separately.")
@click.option("--plain-gradient", is_flag=True, help="Skip the Fisher preconditioning.")
@click.option("--scale-x", is_flag=True, help="Min-max scale features to [0,1].")
@click.option("--scale-y", is_flag=True, help="Min-max scale targets to [0,1].")
@_config_options
@click.option("--out", type=click.Path(), required=True, help="Model file to write.")
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="Per-stage train/val NLL CSV.")
@click.option("--force", is_flag=True)
@_handle_errors
def cmd_train(data_path, targets, features, val_file, val_frac, independent,
              plain_gradient, scale_x, scale_y, stages, learning_rate, patience,
              max_depth, min_samples_leaf, seed, out, log_path, force):
    """Fit a boosted distribution model and persist it as versioned JSON."""
    _check_overwrite(out, force)
    if log_path:
        _check_overwrite(log_path, force)
    target_cols = _parse_columns(targets)
    table = read_table(data_path)
    feature_cols = (
        _parse_columns(features)
        if features
        else tuple(c for c in table.columns if c not in target_cols)
    )
    spec = DatasetSpec(path=data_path, target_columns=target_cols,
                       feature_columns=feature_cols, scale_x=scale_x, scale_y=scale_y)
    X = table.select(feature_cols)
    Y = table.select(target_cols)
    if Y.shape[0] <= Y.shape[1]:
        raise DataError(f"need more rows ({Y.shape[0]}) than targets ({Y.shape[1]})")

    if val_file:
        val_table = read_table(val_file)
        X_val, Y_val = val_table.select(feature_cols), val_table.select(target_cols)
    elif val_frac > 0:
        rng = np.random.default_rng(seed)
        perm = rng.permutation(X.shape[0])
        n_val = max(1, int(round(val_frac * X.shape[0])))
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        X, Y, X_val, Y_val = X[train_idx], Y[train_idx], X[val_idx], Y[val_idx]
    else:
        X_val = Y_val = None

    scaling = {}
    if scale_x:
        sx = MinMaxScaling.fit(X)
        X = sx.transform(X)
        X_val = sx.transform(X_val) if X_val is not None else None
        scaling["x"] = sx.to_dict()
    if scale_y:
        sy = MinMaxScaling.fit(Y)
        Y = sy.transform(Y)
        Y_val = sy.transform(Y_val) if Y_val is not None else None
        scaling["y"] = sy.to_dict()

    config = _build_config(stages, learning_rate, patience, max_depth,
                           min_samples_leaf, seed, natural_gradient=not plain_gradient)
    if independent:
        model = boosting.fit_independent(X, Y, X_val, Y_val, config)
        paths = [(m.train_nll_path, m.val_nll_path) for m in model.models]
    else:
        family = MvnFamily(Y.shape[1]) if Y.shape[1] > 1 else None
        model = boosting.fit(X, Y, X_val, Y_val, config, family=family)
        paths = [(model.train_nll_path, model.val_nll_path)]

    metadata = {
        "n_train_rows": int(X.shape[0]),
        "n_val_rows": int(X_val.shape[0]) if X_val is not None else 0,
        "seed": seed,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "source": os.path.basename(data_path),
    }
    save_model(model, out, feature_names=feature_cols, target_names=target_cols,
               metadata=metadata, scaling=scaling or None)

    if log_path:
        rows = []
        for k, (train_nll, val_nll) in enumerate(paths):
            for stage_idx, t in enumerate(train_nll):
                v = val_nll[stage_idx] if stage_idx < len(val_nll) else ""
                rows.append((k, stage_idx, float(t), float(v) if v != "" else ""))
        write_csv(log_path, ["submodel", "stage", "train_nll", "val_nll"], rows)
    click.echo(f"wrote model to {out}")


def _predict_joint_thetas(model, doc, X):
    """Predicted joint thetas in original target units, (n, M)."""
    scaling = doc.get("scaling") or {}
    if "x" in scaling:
        X = MinMaxScaling.from_dict(scaling["x"]).transform(X)
    if isinstance(model, boosting.IndependentModel):
        thetas = model.predict_theta(X)
        p = model.p
    else:
        thetas = boosting.predict_theta(model, X)
        if model.family_tag == "univariate":
            # promote to the p=1 joint layout (mu, nu_11)
            p = 1
            joint = np.empty((thetas.shape[0], 2))
            joint[:, 0] = thetas[:, 0]
            joint[:, 1] = np.log(np.exp(-thetas[:, 1]) - DIAG_EPS)
            thetas = joint
        else:
            p = int(round((np.sqrt(9 + 8 * thetas.shape[1]) - 3) / 2))
    if "y" in scaling:
        thetas = _unscale_theta(thetas, p, MinMaxScaling.from_dict(scaling["y"]))
    return thetas, p


def _unscale_theta(thetas, p, sy: MinMaxScaling):
    """Map thetas fitted on min-max scaled targets back to original units."""
    L = scale_matrices(thetas, p)
    L = L / sy.span[None, None, :]
    out = np.empty_like(thetas)
    out[:, :p] = thetas[:, :p] * sy.span + sy.minima
    rows, cols = triu_layout(p)
    vals = L[:, rows, cols].copy()
    diag = rows == cols
    vals[:, diag] = np.log(vals[:, diag] - DIAG_EPS)
    out[:, p:] = vals
    return out


@main.command("predict")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--force", is_flag=True)
@_handle_errors
def cmd_predict(model_path, data_path, out, force):
    """Write per-row predicted parameters (and NLL when targets are present)."""
    _check_overwrite(out, force)
    model, doc = load_model(model_path)
    table = read_table(data_path)
    feature_cols = tuple(doc["feature_names"])
    target_cols = tuple(doc.get("target_names") or ())
    X = table.select(feature_cols)
    thetas, p = _predict_joint_thetas(model, doc, X)

    rows_idx, cols_idx = triu_layout(p)
    columns = [f"mu{i + 1}" for i in range(p)]
    columns += [f"nu{i + 1}{j + 1}" for i, j in zip(rows_idx, cols_idx)]
    columns += [f"sigma{i + 1}{j + 1}" for i, j in zip(rows_idx, cols_idx)]
    L = scale_matrices(thetas, p)
    prec = np.einsum("nki,nkj->nij", L, L)
    sigma = np.linalg.inv(prec)
    values = np.concatenate(
        [thetas, sigma[:, rows_idx, cols_idx]], axis=1
    )
    have_targets = target_cols and all(c in table.columns for c in target_cols)
    if have_targets:
        Y = table.select(target_cols)
        columns.append("nll")
        values = np.column_stack([values, nll_batch(thetas, Y, p)])
    write_csv(out, columns, [tuple(map(float, row)) for row in values])
    click.echo(f"wrote {values.shape[0]} predictions to {out}")


@main.command("evaluate")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True), default=None,
              help="Truth sidecar CSV (mu1,mu2,var1,var2,rho) for KL evaluation.")
@click.option("--alpha", type=float, default=0.9, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Optional report CSV.")
@click.option("--force", is_flag=True)
@_handle_errors
def cmd_evaluate(model_path, data_path, truth_path, alpha, out, force):
    """Evaluate a model on a labeled dataset; emit a metrics report."""
    if out:
        _check_overwrite(out, force)
    model, doc = load_model(model_path)
    table = read_table(data_path)
    feature_cols = tuple(doc["feature_names"])
    target_cols = tuple(doc.get("target_names") or ())
    if not target_cols or not all(c in table.columns for c in target_cols):
        raise DataError("evaluate requires the model's target columns in the data file")
    X = table.select(feature_cols)
    Y = table.select(target_cols)
    thetas, p = _predict_joint_thetas(model, doc, X)

    thetas_true = None
    if truth_path:
        truth = read_table(truth_path)
        moments = truth.select(("mu1", "mu2", "var1", "var2", "rho"))
        if moments.shape[0] != Y.shape[0]:
            raise DataError("truth sidecar row count differs from dataset")
        from .distributions import fit_theta_from_moments_batch

        means = moments[:, :2]
        covs = np.empty((moments.shape[0], 2, 2))
        covs[:, 0, 0] = moments[:, 2]
        covs[:, 1, 1] = moments[:, 3]
        covs[:, 0, 1] = covs[:, 1, 0] = np.sqrt(moments[:, 2] * moments[:, 3]) * moments[:, 4]
        thetas_true = fit_theta_from_moments_batch(means, covs)

    report = metrics.evaluate(thetas, Y, thetas_true, alpha=alpha)
    label = f"{report.pr_alpha * 100:.0f}% PR"
    lines = [
        ("NLL", report.nll_mean),
        ("RMSE", report.rmse),
        (f"{label} cov", report.pr_coverage),
        (f"{label} area", report.pr_area_mean),
    ]
    if report.kl_mean is not None:
        lines.insert(0, ("KL div", report.kl_mean))
    width = max(len(name) for name, _ in lines)
    for name, value in lines:
        click.echo(f"{name:<{width}}  {value:.6f}")
    click.echo(f"{'n':<{width}}  {report.n_points}")
    if out:
        header = ["n_points", "alpha", "nll", "rmse", "pr_coverage", "pr_area", "kl"]
        row = (report.n_points, float(alpha), report.nll_mean, report.rmse,
               report.pr_coverage, report.pr_area_mean,
               "" if report.kl_mean is None else report.kl_mean)
        write_csv(out, header, [row])


# Full-scale plan: the complete N grid with 50 replications.
FULL_N_GRID = (500, 1000, 3000, 5000, 8000, 10000)
FULL_REPLICATIONS = 50


@main.command("benchmark")
@click.option("--n-grid", default="500,1000,5000", show_default=True,
              help="Comma-separated training sizes.")
@click.option("--reps", type=int, default=5, show_default=True)
@click.option("--methods", default="ngb,indep-ngb,plain-gb", show_default=True)
@click.option("--variant", type=click.Choice(simulation.VARIANTS), default="modified",
              show_default=True)
@click.option("--full-table1", is_flag=True,
              help="Run the full-scale plan (N up to 10000, 50 replications).")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker processes for independent cells.")
@_config_options
@click.option("--out", "out_dir", type=click.Path(), required=True,
              help="Output directory for results CSVs.")
@click.option("--force", is_flag=True)
@_handle_errors
def cmd_benchmark(n_grid, reps, methods, variant, full_table1, threads, stages,
                  learning_rate, patience, max_depth, min_samples_leaf, seed,
                  out_dir, force):
    """Run the replicated simulation comparison and write result tables."""
    if full_table1:
        grid, reps = FULL_N_GRID, FULL_REPLICATIONS
    else:
        grid = tuple(int(v) for v in _parse_columns(n_grid))
    plan = simulation.ExperimentPlan(
        n_train_grid=grid,
        replications=reps,
        methods=tuple(_parse_columns(methods)),
        variant=variant,
        master_seed=seed,
        config=_build_config(stages, learning_rate, patience, max_depth,
                             min_samples_leaf, seed),
    )
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, "results.csv")
    _check_overwrite(out_path, force)
    rows, aggregates = simulation.run_experiment(plan, out_path, workers=threads)
    _echo_aggregate_table(aggregates)
    click.echo(f"wrote {out_path} and {os.path.join(out_dir, 'results_aggregate.csv')}")


def _echo_aggregate_table(aggregates):
    kl_rows = [a for a in aggregates if a["metric"] == "kl"]
    if not kl_rows:
        return
    methods = sorted({a["method"] for a in kl_rows})
    click.echo("mean test KL divergence (± stderr):")
    click.echo("    N  " + "".join(f"{m:>22}" for m in methods))
    for n in sorted({a["N"] for a in kl_rows}):
        cells = []
        for m in methods:
            match = [a for a in kl_rows if a["N"] == n and a["method"] == m]
            cells.append(
                f"{match[0]['mean']:.3f}±{match[0]['stderr']:.3f}" if match else "-"
            )
        click.echo(f"{n:>5}  " + "".join(f"{c:>22}" for c in cells))


@main.command("info")
def cmd_info():
    """Print which split-search kernel is active."""
    kind = "compiled (Cython)" if HAVE_COMPILED_KERNEL else "pure Python (numpy)"
    click.echo(f"split-search kernel: {kind}")


if __name__ == "__main__":
    main()
