"""Inference, classification metrics, and decision-boundary grid export."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import ModelParams, forward


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Per-row argmax of the softmax output; ties go to the lowest class."""
    return np.argmax(forward(params, x).probs, axis=1).astype(np.int64)


@dataclass
class Metrics:
    """Accuracy, per-class precision/recall, confusion matrix (rows = true).

    A precision or recall whose denominator is zero is None, never 0, so
    averages over classes cannot be silently deflated.
    """

    accuracy: float
    per_class_precision: list[float | None]
    per_class_recall: list[float | None]
    confusion: np.ndarray
    n: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_precision": self.per_class_precision,
            "per_class_recall": self.per_class_recall,
            "confusion": self.confusion.tolist(),
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def compute_metrics(pred: np.ndarray, truth: np.ndarray, k: int) -> Metrics:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size == 0:
        raise ValidationError("pred and truth must be equal-length nonempty vectors")
    for name, v in (("pred", pred), ("truth", truth)):
        if v.min() < 0 or v.max() >= k:
            raise ValidationError(f"{name} contains ids outside [0, {k})")
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    precision: list[float | None] = []
    recall: list[float | None] = []
    for c in range(k):
        col = confusion[:, c].sum()
        row = confusion[c, :].sum()
        precision.append(float(confusion[c, c] / col) if col > 0 else None)
        recall.append(float(confusion[c, c] / row) if row > 0 else None)
    accuracy = float(np.trace(confusion) / pred.size)
    return Metrics(accuracy, precision, recall, confusion, int(pred.size))


@dataclass
class ContourGrid:
    """Class probabilities over a regular 2-D grid, row-major with x fastest."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    resolution: int
    points: np.ndarray  # (resolution**2, 2)
    probs: np.ndarray  # (resolution**2, K)
    preds: np.ndarray  # (resolution**2,)


def contour_grid(
    params: ModelParams, bounds: tuple[float, float, float, float], resolution: int
) -> ContourGrid:
    """Evaluate the model on a regular grid spanning the given bounds."""
    if params.input_dim != 2:
        raise ValidationError("contour export needs a model with 2-D input")
    x_min, x_max, y_min, y_max = (float(v) for v in bounds)
    if not (x_min < x_max and y_min < y_max):
        raise ValidationError("bounds must satisfy x_min < x_max and y_min < y_max")
    if resolution < 2:
        raise ValidationError("resolution must be >= 2")
    xs = np.linspace(x_min, x_max, resolution)
    ys = np.linspace(y_min, y_max, resolution)
    xx, yy = np.meshgrid(xs, ys)  # y varies along rows, x along columns
    points = np.column_stack([xx.ravel(), yy.ravel()])
    trace = forward(params, points)
    preds = np.argmax(trace.probs, axis=1).astype(np.int64)
    return ContourGrid(x_min, x_max, y_min, y_max, resolution, points, trace.probs, preds)


def default_bounds(
    features: np.ndarray, margin: float = 0.2
) -> tuple[float, float, float, float]:
    """Data bounding box expanded by the margin fraction per side."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != 2:
        raise ValidationError("default bounds need 2-D features")
    x_min, y_min = features.min(axis=0)
    x_max, y_max = features.max(axis=0)
    dx = (x_max - x_min) * margin
    dy = (y_max - y_min) * margin
    return (x_min - dx, x_max + dx, y_min - dy, y_max + dy)


def save_contour_csv(grid: ContourGrid, path: str | os.PathLike) -> None:
    """Write the grid as `x,y,p0,...,p{K-1},pred` with round-trip floats."""
    k = grid.probs.shape[1]
    header = "x,y," + ",".join(f"p{i}" for i in range(k)) + ",pred"
    lines = [header]
    for (x, y), p_row, pred in zip(grid.points, grid.probs, grid.preds):
        fields = [repr(float(x)), repr(float(y))]
        fields.extend(repr(float(p)) for p in p_row)
        fields.append(str(int(pred)))
        lines.append(",".join(fields))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
