"""Agreement metrics between a predicted label map and ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LabelMap


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Pixel accuracy, confusion counts and IoU for one prediction.

    ``confusion[t, p]`` counts pixels with truth ``t`` predicted as ``p``.
    ``per_class_iou`` holds ``nan`` for classes absent from both maps; those
    are left out of ``mean_iou``.
    """

    pixel_accuracy: float
    confusion: np.ndarray
    per_class_iou: np.ndarray
    mean_iou: float

    @property
    def num_classes(self) -> int:
        return self.confusion.shape[0]

    def as_dict(self) -> dict:
        return {
            "pixel_accuracy": float(self.pixel_accuracy),
            "confusion": self.confusion.tolist(),
            "per_class_iou": [None if math.isnan(v) else float(v) for v in self.per_class_iou],
            "mean_iou": float(self.mean_iou),
        }


def confusion_matrix(pred: LabelMap, truth: LabelMap) -> np.ndarray:
    L = truth.num_classes
    flat = truth.labels.ravel() * L + pred.labels.ravel()
    return np.bincount(flat, minlength=L * L).reshape(L, L)


def evaluate(pred: LabelMap, truth: LabelMap) -> EvalReport:
    """Compare ``pred`` against ``truth``; both must share shape and class count."""
    if pred.shape != truth.shape:
        raise ValueError(f"dimension mismatch: prediction {pred.shape} vs truth {truth.shape}")
    if pred.num_classes != truth.num_classes:
        raise ValueError(
            f"class-count mismatch: prediction has {pred.num_classes}, truth has {truth.num_classes}"
        )
    conf = confusion_matrix(pred, truth)
    tp = np.diag(conf).astype(np.float64)
    union = conf.sum(axis=0) + conf.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / union, np.nan)
    defined = iou[~np.isnan(iou)]
    conf.setflags(write=False)
    iou.setflags(write=False)
    return EvalReport(
        pixel_accuracy=float(tp.sum() / conf.sum()),
        confusion=conf,
        per_class_iou=iou,
        mean_iou=float(defined.mean()) if defined.size else float("nan"),
    )


@dataclass(frozen=True)
class SweepRow:
    p: float
    pixel_accuracy: float
    mean_iou: float


@dataclass(frozen=True)
class SweepSummary:
    rows: tuple[SweepRow, ...]
    accuracy_non_decreasing: bool

    def as_dict(self) -> dict:
        return {
            "rows": [{"p": r.p, "pixel_accuracy": r.pixel_accuracy, "mean_iou": r.mean_iou} for r in self.rows],
            "accuracy_non_decreasing": self.accuracy_non_decreasing,
        }


def sweep_report(reports) -> SweepSummary:
    """Sort ``(p, EvalReport)`` pairs by ``p`` and flag whether accuracy never drops.

    The flag is informational; a drop is reported, not raised.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("sweep needs at least one (p, report) entry")
    ps = [float(p) for p, _ in reports]
    if len(set(ps)) != len(ps):
        dupes = sorted({p for p in ps if ps.count(p) > 1})
        raise ValueError(f"duplicate p values in sweep: {dupes}")
    rows = sorted(
        (SweepRow(float(p), float(r.pixel_accuracy), float(r.mean_iou)) for p, r in reports),
        key=lambda row: row.p,
    )
    accs = [r.pixel_accuracy for r in rows]
    return SweepSummary(tuple(rows), all(a <= b for a, b in zip(accs, accs[1:])))
