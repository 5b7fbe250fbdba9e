"""Shared instance generators and straight-line reference implementations for the tests."""

import math

import numpy as np

from crfrefine.core import ImageTensor
from crfrefine.filtering import make_bilateral_features, make_spatial_features
from crfrefine.fixtures import gen_fixture


def filter_instances(count=50, seed=2024):
    """Random filtering problems: <= 4096 pixels, d in {2, 5}, values in [0, 1].

    Even instances use spatial features; odd ones use bilateral features over
    either a uniformly random image or a synthetic scene.
    """
    rng = np.random.default_rng(seed)
    for i in range(count):
        h = int(rng.integers(8, 65))
        w = int(rng.integers(8, 65))
        values = rng.random((h, w, 2))
        if i % 2 == 0:
            theta = math.exp(rng.uniform(math.log(1.0), math.log(10.0)))
            yield f"spatial-{i}", values, make_spatial_features(h, w, theta)
            continue
        if i % 4 == 1:
            image = ImageTensor(rng.random((h, w, 3)))
        else:
            kind = "binary_blobs" if i % 8 == 3 else "potsdam_mosaic"
            image, _, _ = gen_fixture(kind, h, w, 0.0, int(rng.integers(0, 2**31)))
        theta_a = math.exp(rng.uniform(math.log(5.0), math.log(80.0)))
        theta_b = math.exp(rng.uniform(math.log(0.05), math.log(0.5)))
        yield f"bilateral-{i}", values, make_bilateral_features(image, theta_a, theta_b)


def double_loop_filter(values, features):
    """O(N^2) Gaussian sum written as plain loops over pixel pairs."""
    f = features.features.reshape(-1, features.dim)
    v = np.asarray(values, dtype=float).reshape(f.shape[0], -1)
    out = np.zeros_like(v)
    for i in range(f.shape[0]):
        for j in range(f.shape[0]):
            diff = f[i] - f[j]
            out[i] += math.exp(-0.5 * float(diff @ diff)) * v[j]
    return out.reshape(np.shape(values))


def _gauss(a, b):
    diff = np.asarray(a) - np.asarray(b)
    return math.exp(-0.5 * float(diff @ diff))


def reference_dense_step(q, costs, image, params):
    """Pixel-by-pixel dense update with normalised, self-excluded kernel sums."""
    h, w, L = q.shape
    feats = []
    if params.w_appearance:
        feats.append((params.w_appearance, make_bilateral_features(image, params.theta_alpha, params.theta_beta)))
    if params.w_smoothness:
        feats.append((params.w_smoothness, make_spatial_features(h, w, params.theta_gamma)))
    pix = [(r, c) for r in range(h) for c in range(w)]
    out = np.empty_like(q)
    for r, c in pix:
        msg = np.zeros(L)
        for weight, ff in feats:
            f = ff.features
            norm = sum(_gauss(f[r, c], f[rr, cc]) for rr, cc in pix)
            acc = np.zeros(L)
            for rr, cc in pix:
                if (rr, cc) != (r, c):
                    acc += _gauss(f[r, c], f[rr, cc]) * q[rr, cc]
            acc /= norm
            for l in range(L):
                msg[l] += weight * sum(acc[k] for k in range(L) if k != l)
        e = np.exp(-(costs[r, c] + msg) - np.min(costs[r, c] + msg))
        out[r, c] = e / e.sum()
    return out


def reference_grid_step(q, costs, w_grid):
    """Grid update counting each in-image 4-neighbour explicitly."""
    h, w, L = q.shape
    out = np.empty_like(q)
    for r in range(h):
        for c in range(w):
            msg = np.zeros(L)
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w:
                    for l in range(L):
                        msg[l] += w_grid * sum(q[rr, cc, k] for k in range(L) if k != l)
            e = np.exp(-(costs[r, c] + msg))
            out[r, c] = e / e.sum()
    return out


def reference_energy(labels, costs, image, params):
    """Unary sum plus Potts-weighted kernel over every unordered pixel pair."""
    h, w = labels.shape
    fa = make_bilateral_features(image, params.theta_alpha, params.theta_beta).features
    fs = make_spatial_features(h, w, params.theta_gamma).features
    pix = [(r, c) for r in range(h) for c in range(w)]
    energy = sum(costs[r, c, labels[r, c]] for r, c in pix)
    for a in range(len(pix)):
        for b in range(a + 1, len(pix)):
            (r1, c1), (r2, c2) = pix[a], pix[b]
            if labels[r1, c1] != labels[r2, c2]:
                energy += params.w_appearance * _gauss(fa[r1, c1], fa[r2, c2])
                energy += params.w_smoothness * _gauss(fs[r1, c1], fs[r2, c2])
    return energy
