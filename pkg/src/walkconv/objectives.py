"""Losses and evaluation metrics.

The regression loss is root-mean-squared error differentiated directly
(not through a mean-squared proxy), and the regression metric is the
squared Pearson correlation between predictions and targets -- the
leaderboard-style R-squared, which is not 1 - SS_res/SS_tot.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DimensionError

__all__ = ["rmse_loss", "r_squared", "error_rate"]


def rmse_loss(pred: np.ndarray, target: np.ndarray):
    """Root-mean-squared error and its gradient w.r.t. predictions.

    grad = (pred - target) / (n * rmse); a perfect fit has rmse 0, where
    the gradient is taken as 0 (the loss is at its minimum anyway).

    Returns
    -------
    (float, ndarray)
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    rmse = float(np.sqrt(np.mean(diff * diff)))
    if rmse == 0.0:
        return 0.0, np.zeros_like(diff)
    return rmse, diff / (diff.size * rmse)


def r_squared(pred: np.ndarray, target: np.ndarray) -> float:
    """Squared Pearson correlation between predictions and targets.

    Affine-invariant in the predictions: any pred = a*target + b with
    a != 0 scores exactly 1. Constant predictions have no defined
    correlation; that case returns 0.0 with a warning.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.size < 2:
        raise DimensionError("correlation needs at least 2 points")
    pc = pred - pred.mean()
    tc = target - target.mean()
    denom = np.sqrt((pc * pc).sum() * (tc * tc).sum())
    if denom == 0.0:
        warnings.warn("constant predictions or targets: R^2 undefined, reporting 0")
        return 0.0
    r = float((pc * tc).sum() / denom)
    return r * r


def error_rate(pred_classes: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of misclassified samples."""
    pred_classes = np.asarray(pred_classes).ravel()
    labels = np.asarray(labels).ravel()
    if pred_classes.shape != labels.shape:
        raise DimensionError(
            f"prediction shape {pred_classes.shape} != label shape {labels.shape}"
        )
    return float(np.mean(pred_classes != labels))
