import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crfrefine.evaluation import evaluate
from crfrefine.fixtures import FIXTURE_KINDS, flip_count, gen_fixture


def test_zero_noise_leaves_labels_clean():
    _, clean, noisy = gen_fixture("binary_blobs", 32, 32, 0.0, 1)
    assert noisy == clean


def test_flip_count_at_ten_percent_of_64x64():
    _, clean, noisy = gen_fixture("potsdam_mosaic", 64, 64, 0.1, 3)
    assert int((clean.labels != noisy.labels).sum()) == 410


def test_flip_count_rounds_half_up():
    assert flip_count(0.5, 5) == 3
    assert flip_count(0.1, 4096) == 410


@pytest.mark.parametrize("kind", FIXTURE_KINDS)
def test_same_seed_same_arrays(kind):
    a = gen_fixture(kind, 40, 48, 0.2, 99)
    b = gen_fixture(kind, 40, 48, 0.2, 99)
    assert np.array_equal(a[0].data, b[0].data)
    assert a[1] == b[1] and a[2] == b[2]


def test_different_seed_differs():
    assert gen_fixture("binary_blobs", 32, 32, 0.1, 1)[1] != gen_fixture("binary_blobs", 32, 32, 0.1, 2)[1]


def test_frozen_first_pixels():
    # regression guard on the PCG64 draw order
    image, clean, noisy = gen_fixture("binary_blobs", 16, 16, 0.1, 7)
    assert int(clean.labels.sum()) == 128
    assert int((clean.labels.ravel() * np.arange(256)).sum()) == 17006
    assert int(noisy.labels.sum()) == 130
    assert image.data[0, 0, 0] == pytest.approx(0.9065306615125004, abs=1e-15)


@pytest.mark.parametrize("kind, classes", [("binary_blobs", 2), ("potsdam_mosaic", 6)])
def test_class_count_and_image_range(kind, classes):
    image, clean, _ = gen_fixture(kind, 32, 32, 0.1, 5)
    assert clean.num_classes == classes
    assert image.channels == 3
    assert 0.0 <= image.data.min() and image.data.max() <= 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(32, 80), st.integers(32, 80), st.integers(0, 2**31))
def test_mosaic_covers_all_six_classes(h, w, seed):
    _, clean, _ = gen_fixture("potsdam_mosaic", h, w, 0.0, seed)
    assert np.unique(clean.labels).size == 6


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(FIXTURE_KINDS), st.integers(8, 40), st.integers(8, 40),
       st.floats(0.0, 0.9), st.integers(0, 2**31))
def test_noisy_accuracy_is_exact(kind, h, w, rate, seed):
    _, clean, noisy = gen_fixture(kind, h, w, rate, seed)
    n = h * w
    assert evaluate(noisy, clean).pixel_accuracy == (n - flip_count(rate, n)) / n


@pytest.mark.parametrize("args", [("nope", 16, 16, 0.1, 0), ("binary_blobs", 7, 16, 0.1, 0),
                                  ("binary_blobs", 16, 16, 1.0, 0), ("binary_blobs", 16, 16, -0.1, 0)])
def test_invalid_arguments(args):
    with pytest.raises(ValueError):
        gen_fixture(*args)
