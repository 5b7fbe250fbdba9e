"""Unary potentials from a hard label map or from soft class probabilities."""

from __future__ import annotations

import numpy as np

from .core import SUM_TOL, LabelMap, MarginalField, ParamError, UnaryField

DEFAULT_FLOOR = 1e-8


def unary_from_labels(labels: LabelMap, p: float) -> UnaryField:
    """Cost ``-ln p`` for the observed label and ``-ln((1 - p) / (L - 1))`` for every other class.

    ``p`` must lie strictly inside ``(1/L, 1)``; values outside are rejected, not clamped.
    """
    L = labels.num_classes
    p = float(p)
    if not (np.isfinite(p) and 1.0 / L < p < 1.0):
        raise ParamError(f"confidence out of range: p={p} must lie strictly inside (1/{L}, 1)")
    own = -np.log(p)
    other = -np.log((1.0 - p) / (L - 1))
    costs = np.full(labels.shape + (L,), other)
    np.put_along_axis(costs, labels.labels[:, :, None], own, axis=2)
    return UnaryField(costs)


def unary_from_probabilities(probs, floor: float = DEFAULT_FLOOR) -> UnaryField:
    """Cost ``-ln(max(q, floor))`` from per-pixel class probabilities."""
    if not (0.0 < floor < 1.0):
        raise ParamError(f"floor must lie in (0, 1), got {floor}")
    if not isinstance(probs, MarginalField):
        q = np.asarray(probs, dtype=np.float64)
        if q.ndim == 3 and np.abs(q.sum(axis=2) - 1.0).max(initial=0.0) > SUM_TOL:
            raise ValueError("probabilities must sum to 1 at every pixel")
        probs = MarginalField(q)
    # -log(1.0) is -0.0; adding 0.0 keeps the stored costs non-negative zero
    return UnaryField(-np.log(np.maximum(probs.q, floor)) + 0.0)
