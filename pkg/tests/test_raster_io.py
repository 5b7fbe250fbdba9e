import csv
import json

import numpy as np
import png
import pytest
from hypothesis import given, settings, strategies as st

from crfrefine.core import LabelMap, builtin_palette
from crfrefine.evaluation import evaluate, sweep_report
from crfrefine.raster_io import (
    CorruptRasterError,
    PaletteMismatchError,
    RasterFormatError,
    load_image,
    load_labels,
    parse_palette_file,
    resolve_palette,
    save_labels,
    write_report,
)


def write_png(path, rows, **kw):
    arr = np.asarray(rows)
    h = arr.shape[0]
    w = kw.pop("width")
    with open(path, "wb") as fh:
        png.Writer(w, h, **kw).write(fh, arr.reshape(h, -1).tolist())


def test_rgb_bytes_normalised(tmp_path):
    px = np.array([[[0, 51, 255], [10, 20, 30]], [[255, 255, 255], [1, 2, 3]]])
    write_png(tmp_path / "a.png", px, width=2, greyscale=False, bitdepth=8)
    img = load_image(tmp_path / "a.png")
    np.testing.assert_allclose(img.data, px / 255.0)


def test_rgba_keeps_four_channels(tmp_path):
    write_png(tmp_path / "a.png", np.full((2, 2, 4), 200), width=2, greyscale=False, alpha=True, bitdepth=8)
    assert load_image(tmp_path / "a.png").channels == 4


def test_sixteen_bit_gray(tmp_path):
    write_png(tmp_path / "g.png", np.array([[0, 65535, 32768]]), width=3, greyscale=True, bitdepth=16)
    img = load_image(tmp_path / "g.png")
    assert img.channels == 1
    np.testing.assert_allclose(img.data[0, :, 0], [0.0, 1.0, 32768 / 65535])


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "none.png")


def test_not_a_png(tmp_path):
    (tmp_path / "x.png").write_bytes(b"GIF89a" + bytes(20))
    with pytest.raises(RasterFormatError):
        load_image(tmp_path / "x.png")


def test_truncated_png(tmp_path):
    write_png(tmp_path / "a.png", np.zeros((8, 8, 3), dtype=int), width=8, greyscale=False, bitdepth=8)
    data = (tmp_path / "a.png").read_bytes()
    (tmp_path / "t.png").write_bytes(data[: len(data) // 2])
    with pytest.raises(CorruptRasterError):
        load_image(tmp_path / "t.png")


def _one_pixel(tmp_path, rgb):
    write_png(tmp_path / "l.png", np.array([[rgb]]), width=1, greyscale=False, bitdepth=8)
    return tmp_path / "l.png"


def test_cyan_is_low_vegetation(tmp_path):
    pal = builtin_palette("potsdam")
    assert load_labels(_one_pixel(tmp_path, (0, 255, 255)), pal).labels[0, 0] == pal.index("low_vegetation")


def test_near_yellow_snaps_to_car(tmp_path):
    pal = builtin_palette("potsdam")
    assert load_labels(_one_pixel(tmp_path, (254, 254, 0)), pal).labels[0, 0] == pal.index("car")


def test_far_colour_named_in_error(tmp_path):
    with pytest.raises(PaletteMismatchError, match=r"\(100, 100, 100\) x1"):
        load_labels(_one_pixel(tmp_path, (100, 100, 100)), builtin_palette("potsdam"))


def test_single_urban_pixel_saved_yellow(tmp_path):
    save_labels(LabelMap(np.array([[0]]), 2), builtin_palette("city_binary"), tmp_path / "o.png")
    w, h, rows, info = png.Reader(filename=str(tmp_path / "o.png")).asRGB8()
    assert (w, h) == (1, 1)
    assert list(next(iter(rows))) == [255, 255, 0]


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        save_labels(LabelMap(np.array([[0]]), 2), builtin_palette("city_binary"), tmp_path / "no" / "o.png")


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["city_binary", "potsdam"]), st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**31))
def test_label_round_trip(tmp_path_factory, name, h, w, seed):
    pal = builtin_palette(name)
    labels = LabelMap(np.random.default_rng(seed).integers(0, pal.num_classes, (h, w)), pal.num_classes)
    path = tmp_path_factory.mktemp("rt") / "l.png"
    save_labels(labels, pal, path)
    assert load_labels(path, pal) == labels


def test_report_json_round_trip(tmp_path):
    r = evaluate(LabelMap(np.array([[0, 1, 1]]), 3), LabelMap(np.array([[0, 0, 1]]), 3))
    write_report(r, tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    assert set(doc) == {"pixel_accuracy", "confusion", "per_class_iou", "mean_iou"}
    assert doc["per_class_iou"][2] is None
    assert abs(doc["pixel_accuracy"] - r.pixel_accuracy) <= 1e-9
    assert abs(doc["mean_iou"] - r.mean_iou) <= 1e-9
    assert doc["confusion"] == r.confusion.tolist()


def test_sweep_csv_sorted(tmp_path):
    x = LabelMap(np.array([[0, 1]]), 2)
    y = LabelMap(np.array([[1, 1]]), 2)
    s = sweep_report([(0.9, evaluate(x, x)), (0.7, evaluate(y, x))])
    write_report(s, tmp_path / "sweep.json")
    rows = list(csv.reader(open(tmp_path / "sweep.csv")))
    assert rows[0] == ["p", "pixel_accuracy", "mean_iou"]
    assert [float(r[0]) for r in rows[1:]] == [0.7, 0.9]
    assert len(rows) == 3


def test_palette_file(tmp_path):
    f = tmp_path / "pal.txt"
    f.write_text("# custom\nwater 0 0 255\nland 0 128 0\n\n")
    pal = parse_palette_file(f)
    assert pal.names == ["water", "land"]
    assert resolve_palette(str(f)).names == pal.names
    f.write_text("bad 1 2\n")
    with pytest.raises(ValueError, match="name R G B"):
        parse_palette_file(f)
    with pytest.raises(ValueError, match="unknown palette"):
        resolve_palette("not-a-palette")
