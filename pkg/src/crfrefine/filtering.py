"""Gaussian filtering of per-pixel vector fields over pixel feature vectors.

Both pairwise kernels of the dense model reduce to one operation once the
features are divided by their kernel widths::

    out_i = sum_j exp(-0.5 * |f_i - f_j|^2) * v_j        (self term j = i included)

:func:`brute_force_filter` evaluates that sum exactly in O(N^2).
:func:`fast_filter` approximates it in O(N) with a permutohedral lattice
(splat onto the vertices of the enclosing simplex, blur along the d + 1 lattice
directions, slice back with the same barycentric weights).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import ImageTensor

#: Largest feature dimension the lattice accepts.
MAX_FEATURE_DIM = 8
#: Pixel count above which the exact O(N^2) paths refuse to run.
BRUTE_FORCE_MAX_PIXELS = 16384
#: Normaliser values below this indicate a broken filter rather than a sparse region.
NORMALIZER_FLOOR = 1e-12


class SizeGuardError(ValueError):
    """Raised when an exact O(N^2) computation is requested on too many pixels."""


@dataclass(frozen=True, eq=False)
class FeatureField:
    """Per-pixel feature vectors, shape H x W x d, already divided by kernel widths."""

    features: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 3 or f.shape[2] < 1:
            raise ValueError(f"feature field must be HxWxd, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("features must be finite")
        f = f.copy()
        f.setflags(write=False)
        object.__setattr__(self, "features", f)

    @property
    def shape(self) -> tuple[int, int]:
        return self.features.shape[:2]

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    @property
    def num_pixels(self) -> int:
        return self.features.shape[0] * self.features.shape[1]

    def flat(self) -> np.ndarray:
        return self.features.reshape(-1, self.dim)


def _check_width(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"invalid kernel width: {name}={value} must be > 0")


def _pixel_grid(h, w, theta):
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.stack([cols / theta, rows / theta], axis=-1)


def make_spatial_features(h: int, w: int, theta_gamma: float) -> FeatureField:
    """Features ``(col, row) / theta_gamma`` for the smoothness kernel."""
    _check_width("theta_gamma", theta_gamma)
    if h < 1 or w < 1:
        raise ValueError("feature grid needs at least one pixel")
    return FeatureField(_pixel_grid(h, w, float(theta_gamma)))


def make_bilateral_features(image: ImageTensor, theta_alpha: float, theta_beta: float) -> FeatureField:
    """Features ``(col/theta_alpha, row/theta_alpha, I/theta_beta)`` for the appearance kernel."""
    _check_width("theta_alpha", theta_alpha)
    _check_width("theta_beta", theta_beta)
    pos = _pixel_grid(image.height, image.width, float(theta_alpha))
    return FeatureField(np.concatenate([pos, image.data / float(theta_beta)], axis=-1))


def _flatten_values(values, features: FeatureField):
    v = np.asarray(values, dtype=np.float64)
    n = features.num_pixels
    if v.shape[:2] == features.shape:
        tail = v.shape[2:]
    elif v.shape[:1] == (n,):
        tail = v.shape[1:]
    else:
        raise ValueError(
            f"size mismatch: values of shape {v.shape} do not match a {features.shape} feature field"
        )
    return v.reshape(n, -1), tail


def _restore(out, values, tail):
    v = np.asarray(values)
    lead = v.shape[: v.ndim - len(tail)]
    return out.reshape(lead + tail)


def brute_force_filter(values, features: FeatureField, *, max_pixels: int = BRUTE_FORCE_MAX_PIXELS):
    """Exact Gaussian sum over every pixel pair, self term included."""
    v, tail = _flatten_values(values, features)
    n = features.num_pixels
    if n > max_pixels:
        raise SizeGuardError(
            f"brute-force filtering of {n} pixels exceeds the {max_pixels}-pixel limit"
        )
    f = features.flat()
    out = np.empty_like(v)
    # row blocks keep the N x block kernel slab small
    block = max(1, min(n, 2_000_000 // max(n, 1)))
    sq = np.einsum("ij,ij->i", f, f)
    for start in range(0, n, block):
        stop = min(n, start + block)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * f[start:stop] @ f.T
        np.maximum(d2, 0.0, out=d2)
        out[start:stop] = np.exp(-0.5 * d2) @ v
    return _restore(out, values, tail)


class PermutohedralLattice:
    """Sparse permutohedral lattice built once for a feature field and reused.

    ``refine`` sets how many blur passes of the binomial [1, 2, 1] / 4 kernel are
    run along each lattice direction; the lattice spacing shrinks accordingly so
    the total kernel keeps unit variance.  ``dilation`` adds that many rings of
    empty lattice points around the occupied ones so mass blurred out of a
    cluster can come back instead of being dropped.

    Splatting and slicing smear a pixel's own contribution, so the lattice
    returns ``c_i * v_i`` for the self term where the exact sum has ``v_i``.
    With ``exact_self`` (``refine=1`` only) the per-pixel ``c_i`` is computed
    once and :meth:`filter` swaps it for the exact weight 1.  It is off by
    default: it roughly triples build time for a modest accuracy gain.
    """

    def __init__(self, features: FeatureField, *, refine: int = 1, dilation: int = 1,
                 interp_var: float = 0.25, exact_self: bool = False):
        d = features.dim
        if d > MAX_FEATURE_DIM:
            raise ValueError(f"feature dimension {d} exceeds the supported maximum {MAX_FEATURE_DIM}")
        self.dim = d
        self.num_pixels = features.num_pixels
        self.refine = int(refine)
        d1 = d + 1
        # elevated-space std of the unit feature-space kernel
        inv_std = math.sqrt(0.5 * self.refine + interp_var) * d1
        self.scale = (2.0 * math.pi) ** (d / 2.0) * inv_std ** d / (d1 ** (d - 1) * math.sqrt(d1))

        keys, weights, rank = _simplex_embedding(features.flat(), inv_std)
        n = self.num_pixels
        flat_keys = keys.reshape(-1, d)
        margin = d1 * (dilation + 2)
        lo = flat_keys.min(axis=0) - margin
        extent = flat_keys.max(axis=0) + margin - lo + 1
        if float(np.prod(extent.astype(np.float64))) >= 2.0 ** 62:
            raise ValueError("feature extent too large for the lattice key space")
        strides = np.ones(d, dtype=np.int64)
        for k in range(d - 2, -1, -1):
            strides[k] = strides[k + 1] * extent[k + 1]
        packed = (flat_keys - lo) @ strides

        # d + 1 lattice directions restricted to the first d coordinates
        steps = np.full((d1, d), -1, dtype=np.int64)
        steps[np.arange(d), np.arange(d)] = d
        offsets = steps @ strides

        occupied = np.unique(packed)
        points = occupied
        ring = occupied
        for _ in range(dilation):
            ring = np.unique((ring[:, None] + np.concatenate([offsets, -offsets])[None, :]).ravel())
            points = np.union1d(points, ring)
        self.num_points = m = points.size

        rows = np.searchsorted(points, packed)
        cols = np.repeat(np.arange(n), d1)
        self._splat = sp.csr_matrix((weights.ravel(), (rows, cols)), shape=(m, n))
        self._slice = self._splat.T.tocsr()

        self._neighbors = []
        for off in offsets:
            pair = []
            for sign in (1, -1):
                target = points + sign * off
                pos = np.searchsorted(points, target)
                pos[pos == m] = 0
                pair.append(np.where(points[pos] == target, pos, m))
            self._neighbors.append(tuple(pair))
        self.self_weight = self._self_weights(rows.reshape(n, d1), weights, rank) if exact_self else None

    def _self_weights(self, vertices: np.ndarray, bary: np.ndarray, rank: np.ndarray) -> np.ndarray:
        """Diagonal of ``scale * slice @ blur @ splat`` for every pixel.

        Two vertices of one simplex differ by a sum of lattice directions over
        a rank interval ``A`` (or minus that sum), and since the d + 1
        directions sum to zero there are exactly two single-step-per-direction
        blur paths between them (three from a vertex to itself).  Each path is
        followed through the neighbour tables so missing lattice points cut it
        exactly as the blur's zero padding does.
        """
        if self.refine != 1:
            raise ValueError("exact self weights are only available for refine=1")
        n, d1 = vertices.shape
        d = d1 - 1
        m = self.num_points
        steps = [(np.append(plus, m), np.append(minus, m)) for plus, minus in self._neighbors]

        def walk(start, pattern):
            # blur passes run j = 0..d, so the output side sees them in reverse
            pos = start
            for j in range(d, -1, -1):
                plus, minus = steps[j]
                move = pattern[:, j]
                pos = np.where(move > 0, plus[pos], np.where(move < 0, minus[pos], pos))
            nonzero = np.count_nonzero(pattern, axis=1)
            return pos, 0.25 ** nonzero * 0.5 ** (d1 - nonzero)

        diag = np.zeros(n)
        zero = np.zeros((n, d1), dtype=np.int8)
        ones = np.ones((n, d1), dtype=np.int8)
        for r in range(d1):
            k = vertices[:, r]
            for r2 in range(d1):
                target = vertices[:, r2]
                if r == r2:
                    patterns = (zero, ones, -ones)
                else:
                    lo, hi = sorted((r, r2))
                    inside = ((rank > d - hi) & (rank <= d - lo)).astype(np.int8)
                    sign = -1 if r2 > r else 1
                    patterns = (sign * inside, -sign * (1 - inside))
                total = np.zeros(n)
                for pattern in patterns:
                    end, weight = walk(k, pattern)
                    total += np.where(end == target, weight, 0.0)
                diag += bary[:, r] * bary[:, r2] * total
        return self.scale * diag

    def filter(self, values: np.ndarray) -> np.ndarray:
        """Apply the lattice Gaussian to an ``N x C`` array."""
        v = np.asarray(values, dtype=np.float64)
        x = np.asarray(self._splat @ v)
        m = self.num_points
        buf = np.zeros((m + 1,) + x.shape[1:])
        for plus, minus in self._neighbors:
            for _ in range(self.refine):
                buf[:m] = x
                x = 0.5 * x + 0.25 * (buf[plus] + buf[minus])
        out = self.scale * np.asarray(self._slice @ x)
        if self.self_weight is not None:
            correction = (1.0 - self.self_weight).reshape((-1,) + (1,) * (v.ndim - 1))
            out += correction * v
        return out


def _simplex_embedding(f: np.ndarray, inv_std: float):
    """Enclosing-simplex vertex keys (N x (d+1) x d), barycentric weights (N x (d+1))
    and the per-coordinate rank of the remainder (N x (d+1))."""
    n, d = f.shape
    d1 = d + 1
    # orthogonal basis of the plane sum(x) = 0, scaled by inv_std
    basis = np.zeros((d1, d))
    for j in range(d):
        s = inv_std / math.sqrt((j + 1) * (j + 2))
        basis[: j + 1, j] = s
        basis[j + 1, j] = -(j + 1) * s
    elevated = f @ basis.T

    # nearest remainder-0 point
    v = elevated / d1
    up = np.ceil(v) * d1
    down = np.floor(v) * d1
    rem0 = np.where(up - elevated < elevated - down, up, down)
    coord_sum = np.rint(rem0.sum(axis=1) / d1).astype(np.int64)
    rem0 = rem0.astype(np.int64)

    diff = elevated - rem0
    order = np.argsort(-diff, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.broadcast_to(np.arange(d1), (n, d1)), axis=1)
    rank += coord_sum[:, None]
    low = rank < 0
    high = rank > d
    rank[low] += d1
    rem0[low] += d1
    rank[high] -= d1
    rem0[high] -= d1

    bary = np.zeros((n, d + 2))
    delta = (elevated - rem0) / d1
    rows = np.arange(n)
    # ranks are a permutation per row, so each (row, column) pair is hit once per statement
    for i in range(d1):
        bary[rows, d - rank[:, i]] += delta[:, i]
        bary[rows, d + 1 - rank[:, i]] -= delta[:, i]
    bary[:, 0] += 1.0 + bary[:, d + 1]

    keys = np.empty((n, d1, d), dtype=np.int64)
    for r in range(d1):
        vertex = rem0 + r
        vertex -= d1 * (rank > d - r)
        keys[:, r] = vertex[:, :d]
    return keys, bary[:, :d1], rank


def fast_filter(values, features: FeatureField, *, lattice: PermutohedralLattice | None = None):
    """Lattice approximation of :func:`brute_force_filter`."""
    v, tail = _flatten_values(values, features)
    if lattice is None:
        lattice = PermutohedralLattice(features)
    elif lattice.num_pixels != features.num_pixels:
        raise ValueError("lattice was built for a different feature field")
    return _restore(lattice.filter(v), values, tail)


def normalized_filter(values, features: FeatureField, *, lattice: PermutohedralLattice | None = None):
    """``fast_filter(values) / fast_filter(ones)`` per pixel."""
    v, tail = _flatten_values(values, features)
    if lattice is None:
        lattice = PermutohedralLattice(features)
    out, _ = _normalized(lattice, v)
    return _restore(out, values, tail)


def _normalized(lattice: PermutohedralLattice, v: np.ndarray):
    norm = lattice.filter(np.ones((lattice.num_pixels, 1)))[:, 0]
    if norm.min() < NORMALIZER_FLOOR:
        raise FloatingPointError("filter normaliser vanished; the lattice lost the self term")
    return lattice.filter(v) / norm[:, None], norm
