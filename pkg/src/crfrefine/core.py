"""Domain types shared by every stage of the refinement pipeline.

All containers are frozen dataclasses wrapping read-only numpy arrays, so they
can be passed between threads without copying or locking.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ParamError(ValueError):
    """Invalid model parameter (confidence, kernel width, weight, ...)."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """H x W x C raster with intensities normalised to [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3, 4):
            raise ValueError(f"image must be HxWxC with C in (1, 3, 4), got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must have at least one pixel")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("image intensities must be finite and inside [0, 1]")
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def from_uint8(cls, arr) -> "ImageTensor":
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class LabelMap:
    """H x W raster of class indices in ``[0, num_classes)``."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError(f"label map must be 2-D, got shape {labels.shape}")
        if self.num_classes < 2:
            raise ValueError("a label map needs at least two classes")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "labels", _frozen(labels))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.num_classes == other.num_classes and np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class UnaryField:
    """Per-pixel, per-class cost (negative log-probability), shape H x W x L."""

    costs: np.ndarray

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=np.float64)
        if costs.ndim != 3 or costs.shape[2] < 2:
            raise ValueError(f"unary field must be HxWxL with L >= 2, got shape {costs.shape}")
        if not np.all(np.isfinite(costs)) or costs.min() < 0.0:
            raise ValueError("unary costs must be finite and non-negative")
        object.__setattr__(self, "costs", _frozen(costs))

    @property
    def num_classes(self) -> int:
        return self.costs.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.costs.shape[:2]


SUM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MarginalField:
    """Per-pixel class distribution Q, shape H x W x L; each pixel sums to one."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 3 or q.shape[2] < 2:
            raise ValueError(f"marginal field must be HxWxL with L >= 2, got shape {q.shape}")
        if not np.all(np.isfinite(q)) or q.min() < 0.0 or q.max() > 1.0:
            raise ValueError("marginals must be finite and inside [0, 1]")
        if np.abs(q.sum(axis=2) - 1.0).max(initial=0.0) > SUM_TOL:
            raise ValueError("marginals must sum to 1 at every pixel")
        object.__setattr__(self, "q", _frozen(q))

    @property
    def num_classes(self) -> int:
        return self.q.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.q.shape[:2]

    def argmax(self) -> LabelMap:
        # np.argmax returns the first maximum, i.e. ties go to the lowest class index
        return LabelMap(np.argmax(self.q, axis=2), self.num_classes)


@dataclass(frozen=True)
class ClassPalette:
    """Ordered (class name, RGB triplet) pairs; list position is the class index."""

    entries: tuple[tuple[str, tuple[int, int, int]], ...]

    def __post_init__(self):
        entries = tuple((str(name), tuple(int(c) for c in rgb)) for name, rgb in self.entries)
        if not entries:
            raise ValueError("palette must have at least one entry")
        for name, rgb in entries:
            if len(rgb) != 3 or any(c < 0 or c > 255 for c in rgb):
                raise ValueError(f"invalid RGB triplet for class {name!r}: {rgb}")
        colors = [rgb for _, rgb in entries]
        if len(set(colors)) != len(colors):
            raise ValueError("palette colors must be pairwise distinct")
        object.__setattr__(self, "entries", entries)

    @property
    def num_classes(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    @property
    def colors(self) -> np.ndarray:
        return np.array([rgb for _, rgb in self.entries], dtype=np.int64)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Sequence[int]]]) -> "ClassPalette":
        return cls(tuple((name, tuple(rgb)) for name, rgb in pairs))


RED = (255, 0, 0)
YELLOW = (255, 255, 0)
CYAN = (0, 255, 255)
BLUE = (0, 0, 255)
GREEN = (0, 255, 0)
WHITE = (255, 255, 255)

_BUILTIN = {
    "city_binary": (("urban", YELLOW), ("rural", BLUE)),
    "potsdam": (
        ("clutter", RED),
        ("car", YELLOW),
        ("low_vegetation", CYAN),
        ("building", BLUE),
        ("tree", GREEN),
        ("impervious", WHITE),
    ),
}

BUILTIN_PALETTES = tuple(_BUILTIN)


def builtin_palette(name: str) -> ClassPalette:
    """Return one of the shipped palettes: ``city_binary`` or ``potsdam``."""
    try:
        return ClassPalette(_BUILTIN[name])
    except KeyError:
        raise ValueError(
            f"unknown palette {name!r}; valid names: {', '.join(BUILTIN_PALETTES)}"
        ) from None


MODEL_KINDS = ("dense", "grid")


@dataclass(frozen=True)
class CrfParams:
    """Parameters of the pairwise model and of inference.

    ``p_label_confidence`` is the probability given to the observed label when
    unaries are built from a hard label map (the "negative probability" knob).
    Kernel widths are in pixels (spatial) and [0, 1] intensity units (colour).
    """

    p_label_confidence: float = 0.95
    theta_alpha: float = 80.0
    theta_beta: float = 0.05
    theta_gamma: float = 3.0
    w_appearance: float = 10.0
    w_smoothness: float = 3.0
    iterations: int = 5
    model_kind: str = "dense"
    w_grid: float = 2.0
    damping: float = 1.0
    early_exit: bool = False

    def replace(self, **changes) -> "CrfParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate_params(params: CrfParams, num_classes: int) -> CrfParams:
    """Check ``params`` against its invariants for an ``num_classes``-label problem.

    Returns the same object untouched so the call can be chained (and repeated).
    """
    L = int(num_classes)
    if L < 2:
        raise ParamError("at least two classes are required")
    p = float(params.p_label_confidence)
    if not (np.isfinite(p) and 1.0 / L < p < 1.0):
        raise ParamError(f"confidence out of range: p={p} must lie strictly inside (1/{L}, 1)")
    for field in ("theta_alpha", "theta_beta", "theta_gamma"):
        value = float(getattr(params, field))
        if not (np.isfinite(value) and value > 0.0):
            raise ParamError(f"invalid kernel width: {field}={value} must be > 0")
    for field in ("w_appearance", "w_smoothness", "w_grid"):
        value = float(getattr(params, field))
        if not (np.isfinite(value) and value >= 0.0):
            raise ParamError(f"invalid weight: {field}={value} must be >= 0")
    if int(params.iterations) != params.iterations or params.iterations < 0:
        raise ParamError(f"iterations must be a non-negative integer, got {params.iterations}")
    if params.model_kind not in MODEL_KINDS:
        raise ParamError(f"model_kind must be one of {MODEL_KINDS}, got {params.model_kind!r}")
    if not (0.0 < float(params.damping) <= 1.0):
        raise ParamError(f"damping must lie in (0, 1], got {params.damping}")
    return params
