"""Pooled and household fixed-effects OLS with household-clustered (CR1) errors."""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from geomv.domain.entities.regression import Form, PanelObservation, RegressionResult, RegressionSpec
from geomv.domain.errors import ClusterError, CollinearityError, DataError, DegenerateFitError, GroupingError

PANEL_COLUMNS = ["household_id", "year", "outcome", "weather"]


def asinh_transform(y):
    """ln(y + sqrt(y^2 + 1)); accepts scalars or arrays."""
    return np.arcsinh(y)


def panel_frame(observations: Union[pd.DataFrame, Sequence[PanelObservation]]) -> pd.DataFrame:
    if isinstance(observations, pd.DataFrame):
        return observations[PANEL_COLUMNS].copy()
    return pd.DataFrame(
        [(o.household_id, o.year, o.outcome_raw, o.weather) for o in observations], columns=PANEL_COLUMNS
    )


def _demean(matrix: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    sums = np.zeros((n_groups, matrix.shape[1]))
    np.add.at(sums, codes, matrix)
    counts = np.bincount(codes, minlength=n_groups).astype(np.float64)
    return matrix - (sums / counts[:, None])[codes]


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    """Raise naming every column that adds no rank to the columns before it."""
    offending = []
    rank = 0
    for j in range(X.shape[1]):
        if np.linalg.matrix_rank(X[:, : j + 1]) > rank:
            rank += 1
        else:
            offending.append(names[j])
    if offending:
        raise CollinearityError(offending)


def design(frame: pd.DataFrame, spec: RegressionSpec, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """(X, y) after the spec's transformation, plus column names.

    Fixed-effects designs are within-household demeaned and carry year
    indicators (first year omitted) ahead of the weather columns, with no
    intercept.
    """
    w = frame["weather"].to_numpy(dtype=np.float64)
    columns = [w]
    names = ["weather"]
    if spec.form is Form.QUADRATIC:
        columns.append(w**2)
        names.append("weather_sq")

    if not spec.fixed_effects:
        X = np.column_stack([np.ones_like(w)] + columns)
        return X, y, ["const"] + names

    codes, uniques = pd.factorize(frame["household_id"], sort=True)
    years = np.sort(frame["year"].unique())[1:]
    dummies = [(frame["year"].to_numpy() == yr).astype(np.float64) for yr in years]
    raw = np.column_stack(dummies + columns)
    X = _demean(raw, codes, len(uniques))
    y_within = _demean(y[:, None], codes, len(uniques))[:, 0]
    return X, y_within, [f"year_{yr}" for yr in years] + names


def cluster_covariance(X: np.ndarray, residuals: np.ndarray, cluster_ids, small_sample: bool = True) -> np.ndarray:
    """Sandwich covariance with meat summed over clusters.

    With `small_sample` the CR1 factor (G/(G-1))((N-1)/(N-K)) is applied.
    """
    n, k = X.shape
    codes, uniques = pd.factorize(np.asarray(cluster_ids))
    g = len(uniques)
    scores = np.zeros((g, k))
    np.add.at(scores, codes, X * residuals[:, None])
    meat = scores.T @ scores
    bread = np.linalg.inv(X.T @ X)
    cov = bread @ meat @ bread
    if small_sample:
        if g < 2:
            raise ClusterError(f"cluster-robust errors need at least 2 clusters, got {g}")
        if n <= k:
            raise DegenerateFitError(f"no residual degrees of freedom: {n} observations, {k} regressors")
        cov = cov * (g / (g - 1)) * ((n - 1) / (n - k))
    return cov


def cluster_se(X: np.ndarray, residuals: np.ndarray, cluster_ids) -> np.ndarray:
    """Diagonal of the CR1 covariance."""
    return np.diag(cluster_covariance(X, residuals, cluster_ids))


def gaussian_loglik(rss: float, n: int) -> float:
    return -n / 2.0 * (math.log(2.0 * math.pi) + math.log(rss / n) + 1.0)


def _p_value(beta: float, se: float, dof: int) -> float:
    if se == 0.0:
        return 1.0 if beta == 0.0 else 0.0
    return float(2.0 * stats.t.sf(abs(beta / se), dof))


def fit(
    observations: Union[pd.DataFrame, Sequence[PanelObservation]],
    spec: RegressionSpec,
    transform: bool = True,
) -> RegressionResult:
    """OLS of asinh(outcome) on weather under one of the four specifications.

    Rows with a missing outcome or weather value are dropped and counted.
    p-values use the t distribution with G-1 degrees of freedom.
    """
    frame = panel_frame(observations)
    complete = np.isfinite(frame["outcome"].to_numpy(dtype=np.float64)) & np.isfinite(
        frame["weather"].to_numpy(dtype=np.float64)
    )
    n_dropped = int((~complete).sum())
    frame = frame.loc[complete].reset_index(drop=True)
    if (frame["outcome"] < 0).any():
        raise DataError("outcomes must be non-negative")
    if frame.duplicated(["household_id", "year"]).any():
        raise GroupingError("(household_id, year) must be unique within a task")

    n_clusters = int(frame["household_id"].nunique())
    if n_clusters < 2:
        raise ClusterError(f"need at least 2 household clusters, got {n_clusters}")

    y = frame["outcome"].to_numpy(dtype=np.float64)
    if transform:
        y = asinh_transform(y)
    X, y_fit, names = design(frame, spec, y)
    _check_rank(X, names)
    dof_used = X.shape[1] + (n_clusters if spec.fixed_effects else 0)
    if len(y_fit) <= dof_used:
        raise DegenerateFitError(
            f"{len(y_fit)} observations leave no residual degrees of freedom for {dof_used} parameters"
        )

    beta, *_ = np.linalg.lstsq(X, y_fit, rcond=None)
    residuals = y_fit - X @ beta
    rss = float(residuals @ residuals)
    tss = float(((y_fit - y_fit.mean()) ** 2).sum()) if not spec.fixed_effects else float(y_fit @ y_fit)
    if rss == 0.0 or tss == 0.0:
        raise DegenerateFitError("zero residual variance")

    n = len(y_fit)
    variances = cluster_se(X, residuals, frame["household_id"].to_numpy())
    se = np.sqrt(np.clip(variances, 0.0, None))
    dof = n_clusters - 1
    idx = {name: i for i, name in enumerate(names)}
    b1, s1 = float(beta[idx["weather"]]), float(se[idx["weather"]])
    b2: Optional[float] = None
    s2: Optional[float] = None
    p2: Optional[float] = None
    if "weather_sq" in idx:
        b2, s2 = float(beta[idx["weather_sq"]]), float(se[idx["weather_sq"]])
        p2 = _p_value(b2, s2, dof)

    return RegressionResult(
        beta1=b1,
        se1=s1,
        p1=_p_value(b1, s1, dof),
        loglik=gaussian_loglik(rss, n),
        n_obs=n,
        n_clusters=n_clusters,
        dof_used=dof_used,
        beta2=b2,
        se2=s2,
        p2=p2,
        n_dropped=n_dropped,
    )
