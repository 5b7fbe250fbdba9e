"""PNG images and colour-coded label maps, plus JSON/CSV metric files."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import png

from .core import BUILTIN_PALETTES, ClassPalette, ImageTensor, LabelMap, builtin_palette
from .evaluation import EvalReport, SweepSummary

#: Largest Euclidean RGB distance at which an off-palette colour is snapped to its nearest entry.
DEFAULT_TOLERANCE = 10.0


class RasterFormatError(ValueError):
    """The file is not a PNG this module can decode."""


class CorruptRasterError(ValueError):
    """The file looks like a PNG but its data cannot be decoded."""


class PaletteMismatchError(ValueError):
    """Label raster contains colours too far from every palette entry."""


PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _read_png(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head != PNG_SIGNATURE:
        raise RasterFormatError(f"unsupported format (not a PNG): {path}")
    try:
        width, height, rows, info = png.Reader(filename=str(path)).asDirect()
        planes = info["planes"]
        data = np.vstack([np.asarray(row, dtype=np.uint32) for row in rows])
    except (png.FormatError, png.ChunkError, ValueError, EOFError) as exc:
        raise CorruptRasterError(f"corrupt PNG data in {path}: {exc}") from exc
    if data.shape != (height, width * planes):
        raise CorruptRasterError(f"corrupt PNG data in {path}: expected {height} rows of {width} pixels")
    return data.reshape(height, width, planes), info["bitdepth"]


def load_image(path) -> ImageTensor:
    """Decode an 8- or 16-bit gray, gray+alpha, RGB or RGBA PNG into ``[0, 1]`` floats.

    Gray+alpha is expanded to RGBA so the channel count stays in {1, 3, 4}.
    """
    data, depth = _read_png(path)
    if depth not in (8, 16):
        raise RasterFormatError(f"unsupported bit depth {depth} in {path}; expected 8 or 16")
    values = data.astype(np.float64) / float(2**depth - 1)
    if values.shape[2] == 2:
        gray, alpha = values[..., :1], values[..., 1:]
        values = np.concatenate([gray, gray, gray, alpha], axis=2)
    return ImageTensor(values)


def _rgb8(data, depth):
    if data.shape[2] in (1, 2):
        data = np.repeat(data[..., :1], 3, axis=2)
    rgb = data[..., :3].astype(np.float64)
    if depth != 8:
        rgb = np.rint(rgb * 255.0 / (2**depth - 1))
    return rgb.astype(np.int64)


def load_labels(path, palette: ClassPalette, tolerance: float = DEFAULT_TOLERANCE) -> LabelMap:
    """Map each pixel's RGB colour to its palette index.

    Exact matches are taken as is; other colours snap to the nearest entry when
    within ``tolerance``.  Anything farther away is reported with its count.
    """
    data, depth = _read_png(path)
    rgb = _rgb8(data, depth)
    h, w, _ = rgb.shape
    colors, inverse = np.unique(rgb.reshape(-1, 3), axis=0, return_inverse=True)
    dist = np.sqrt(((colors[:, None, :] - palette.colors[None, :, :]) ** 2).sum(axis=2))
    nearest = dist.argmin(axis=1)
    far = dist[np.arange(len(colors)), nearest] > tolerance
    if far.any():
        counts = np.bincount(inverse.ravel(), minlength=len(colors))
        listed = ", ".join(f"{tuple(int(c) for c in colors[k])} x{counts[k]}" for k in np.flatnonzero(far)[:10])
        raise PaletteMismatchError(
            f"{int(far.sum())} colour(s) in {path} match no palette entry within {tolerance}: {listed}"
        )
    return LabelMap(nearest[inverse.ravel()].reshape(h, w), palette.num_classes)


def _write_png(path, rows: np.ndarray, greyscale=False):
    h, w = rows.shape[:2]
    writer = png.Writer(w, h, greyscale=greyscale, bitdepth=8)
    with open(path, "wb") as fh:
        writer.write(fh, rows.reshape(h, -1).astype(np.uint8).tolist())


def save_labels(labels: LabelMap, palette: ClassPalette, path) -> None:
    """Write ``labels`` as an 8-bit RGB PNG using ``palette`` colours."""
    if labels.num_classes != palette.num_classes:
        raise ValueError(
            f"label map has {labels.num_classes} classes but palette has {palette.num_classes}"
        )
    _write_png(path, palette.colors[labels.labels])


def save_image(image: ImageTensor, path) -> None:
    """Write an image as an 8-bit PNG (gray, RGB or RGBA by channel count)."""
    data = np.rint(image.data * 255.0)
    if image.channels == 1:
        _write_png(path, data[..., 0], greyscale=True)
        return
    h, w, c = data.shape
    writer = png.Writer(w, h, greyscale=False, alpha=(c == 4), bitdepth=8)
    with open(path, "wb") as fh:
        writer.write(fh, data.reshape(h, -1).astype(np.uint8).tolist())


def _json_ready(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    return obj


def write_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_ready(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_report(report, path) -> None:
    """Serialise an :class:`EvalReport` to JSON, or a sweep summary to JSON plus CSV.

    For a sweep, ``path`` names the JSON file and the CSV goes next to it with
    the ``.csv`` suffix.
    """
    path = Path(path)
    if isinstance(report, EvalReport):
        write_json(report.as_dict(), path)
        return
    if not isinstance(report, SweepSummary):
        raise TypeError(f"cannot serialise {type(report).__name__}")
    write_json(report.as_dict(), path)
    with open(path.with_suffix(".csv"), "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["p", "pixel_accuracy", "mean_iou"])
        for row in report.rows:
            out.writerow([repr(row.p), repr(row.pixel_accuracy), repr(row.mean_iou)])


def parse_palette_file(path) -> ClassPalette:
    """Read a palette from text lines ``name R G B``; blank lines and ``#`` comments are skipped."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'name R G B', got {line!r}")
            try:
                rgb = tuple(int(x) for x in parts[1:])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: colour components must be integers") from None
            entries.append((parts[0], rgb))
    return ClassPalette(tuple(entries))


def resolve_palette(name: str) -> ClassPalette:
    """A builtin palette name or a path to a palette file."""
    if name in BUILTIN_PALETTES:
        return builtin_palette(name)
    if Path(name).is_file():
        return parse_palette_file(name)
    raise ValueError(f"unknown palette {name!r}: not one of {', '.join(BUILTIN_PALETTES)} and not a file")
