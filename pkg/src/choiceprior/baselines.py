"""Reference regressors for the baseline ladder: least-squares linear
regression and k-nearest-neighbors on standardized features."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .gambles import ValidationError

RIDGE_FALLBACK_LAMBDA = 1e-6


@dataclass(frozen=True)
class BaselineParams:
    k: int = 5
    inverse_distance: bool = False


def linear_regression_fit(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients (with intercept); falls back to a tiny ridge
    penalty when the design matrix is singular."""
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    gram = Xb.T @ Xb
    rhs = Xb.T @ y
    try:
        beta = np.linalg.solve(gram, rhs)
        if not np.all(np.isfinite(beta)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        warnings.warn("singular design matrix; using ridge fallback", RuntimeWarning)
        beta = np.linalg.solve(gram + RIDGE_FALLBACK_LAMBDA * np.eye(gram.shape[0]), rhs)
    return beta


def linear_regression_predict(beta: np.ndarray, X: np.ndarray) -> np.ndarray:
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    return np.clip(Xb @ beta, 0.0, 1.0)


def knn_predict(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_eval: np.ndarray,
    params: BaselineParams = BaselineParams(),
    chunk: int = 512,
) -> np.ndarray:
    """k-NN regression with standardized Euclidean distance.

    Exact-match neighbors short-circuit to the mean of their targets; with
    inverse-distance weighting enabled, nearer neighbors count more.
    """
    if params.k < 1:
        raise ValidationError("k must be >= 1")
    k = min(params.k, X_train.shape[0])
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    A = (X_train - mean) / std
    preds = np.empty(X_eval.shape[0])
    for start in range(0, X_eval.shape[0], chunk):
        B = (X_eval[start : start + chunk] - mean) / std
        d2 = ((B[:, None, :] - A[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argpartition(d2, k - 1, axis=1)[:, :k]
        for j in range(B.shape[0]):
            idx = nearest[j]
            dist = np.sqrt(d2[j, idx])
            if np.any(dist == 0.0):
                preds[start + j] = float(y_train[idx[dist == 0.0]].mean())
            elif params.inverse_distance:
                w = 1.0 / dist
                preds[start + j] = float(np.dot(w, y_train[idx]) / w.sum())
            else:
                preds[start + j] = float(y_train[idx].mean())
    return np.clip(preds, 0.0, 1.0)


def baseline_fit_predict(
    kind: str,
    train: Dataset,
    eval_ds: Dataset,
    params: BaselineParams = BaselineParams(),
) -> tuple[float, np.ndarray]:
    """Fit the named baseline on `train`, return (MSE on eval, predictions)."""
    if kind in ("linear_regression", "linreg"):
        beta = linear_regression_fit(train.features, train.a_rate)
        preds = linear_regression_predict(beta, eval_ds.features)
    elif kind == "knn":
        preds = knn_predict(train.features, train.a_rate, eval_ds.features, params)
    else:
        raise ValidationError(f"unknown baseline kind {kind!r}")
    err = float(np.mean((preds - eval_ds.a_rate) ** 2))
    return err, preds
