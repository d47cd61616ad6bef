"""Regression evaluation: coefficient of determination per output variable."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateTargetError
from .pose import read_labels_csv

VARIABLES = ("x", "y", "phi")


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination, ``1 - SS_res / SS_tot``.

    One for a perfect predictor, zero for one that always outputs the mean of
    ``y_true``, negative for anything worse than that.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if len(y_true) < 2:
        raise ValueError("R² needs at least two values")
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0:
        raise DegenerateTargetError("target has zero variance")
    ss_res = np.sum((y_true - y_pred) ** 2)
    return float(1.0 - ss_res / ss_tot)


def _wrap(a: np.ndarray) -> np.ndarray:
    w = np.remainder(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w <= -np.pi, np.pi, w)


def angular_residual(phi_true, phi_pred):
    """``phi_pred - phi_true`` wrapped to (-pi, pi]."""
    r = _wrap(np.asarray(phi_pred, dtype=np.float64) - np.asarray(phi_true, dtype=np.float64))
    return float(r) if r.ndim == 0 else r


def circular_mean(phi) -> float:
    phi = np.asarray(phi, dtype=np.float64)
    return math.atan2(np.mean(np.sin(phi)), np.mean(np.cos(phi)))


def circular_r_squared(phi_true, phi_pred) -> float:
    """R² for an angle: wrapped residuals over wrapped deviations from the circular mean."""
    phi_true = np.asarray(phi_true, dtype=np.float64)
    phi_pred = np.asarray(phi_pred, dtype=np.float64)
    if phi_true.shape != phi_pred.shape or phi_true.ndim != 1:
        raise ValueError(f"length mismatch: {phi_true.shape} vs {phi_pred.shape}")
    if len(phi_true) < 2:
        raise ValueError("R² needs at least two values")
    ss_tot = np.sum(_wrap(phi_true - circular_mean(phi_true)) ** 2)
    if ss_tot == 0:
        raise DegenerateTargetError("phi has zero circular variance")
    ss_res = np.sum(angular_residual(phi_true, phi_pred) ** 2)
    return float(1.0 - ss_res / ss_tot)


@dataclass(frozen=True)
class VariableScore:
    r2: float
    mae: float
    n: int


@dataclass(frozen=True)
class EvalReport:
    x: VariableScore
    y: VariableScore
    phi: VariableScore
    phi_mode: str

    def to_json(self) -> dict:
        out = {v: vars(getattr(self, v)) for v in VARIABLES}
        out["phi_mode"] = self.phi_mode
        return out


def evaluate_arrays(truth: np.ndarray, pred: np.ndarray, phi_linear: bool = False) -> EvalReport:
    """Score ``(n, 3)`` arrays of (x, y, phi) rows."""
    n = len(truth)
    scores = {}
    for col, name in enumerate(VARIABLES[:2]):
        t, p = truth[:, col], pred[:, col]
        scores[name] = VariableScore(r_squared(t, p), float(np.mean(np.abs(t - p))), n)
    t, p = truth[:, 2], pred[:, 2]
    if phi_linear:
        scores["phi"] = VariableScore(r_squared(t, p), float(np.mean(np.abs(t - p))), n)
    else:
        scores["phi"] = VariableScore(
            circular_r_squared(t, p), float(np.mean(np.abs(angular_residual(t, p)))), n
        )
    return EvalReport(phi_mode="linear" if phi_linear else "circular", **scores)


def evaluate(labels_csv: str | os.PathLike, predictions_csv: str | os.PathLike,
             phi_linear: bool = False) -> EvalReport:
    """Join two ``frame_id, x, y, phi`` files on frame_id and score the predictions."""
    labels = read_labels_csv(labels_csv)
    preds = read_labels_csv(predictions_csv)
    ids = sorted(labels.keys() & preds.keys())
    if not ids:
        raise DataError("labels and predictions share no frame_id")
    if len(ids) < 2:
        raise DataError("need at least two joined rows")
    truth = np.array([labels[i] for i in ids], dtype=np.float64)
    pred = np.array([preds[i] for i in ids], dtype=np.float64)
    return evaluate_arrays(truth, pred, phi_linear)
