"""Mean-field inference for the fully connected model and the 4-connected grid baseline.

Both models use Potts compatibility and synchronous updates::

    Q'_i(l)  proportional to  exp(-unary_i(l) - message_i(l))

For the dense model the message sums, over every other class, the two
normalised Gaussian filter responses of Q with the pixel's own contribution
removed.  For the grid model it counts disagreeing probability mass over the
2-4 in-image neighbours.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import CrfParams, ImageTensor, LabelMap, MarginalField, UnaryField, validate_params
from .filtering import (
    BRUTE_FORCE_MAX_PIXELS,
    FeatureField,
    PermutohedralLattice,
    SizeGuardError,
    brute_force_filter,
    make_bilateral_features,
    make_spatial_features,
    NORMALIZER_FLOOR,
)

#: Pixel limit for exact energy evaluation (O(N^2) pairs).
ENERGY_MAX_PIXELS = 4096
EARLY_EXIT_DELTA = 1e-5
FILTER_MODES = ("fast", "brute")


class NumericalError(FloatingPointError):
    """A non-finite value appeared during an update."""


@dataclass
class InferenceTrace:
    iterations_run: int = 0
    per_iteration_max_delta: list = field(default_factory=list)
    final_energy: float | None = None


def _softmax_neg(costs: np.ndarray) -> np.ndarray:
    z = -costs
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def init_marginals(unary: UnaryField) -> MarginalField:
    """Softmax of the negated unary costs at every pixel."""
    return MarginalField(_softmax_neg(unary.costs))


def _check_finite(arr: np.ndarray, what: str):
    bad = ~np.isfinite(arr)
    if bad.any():
        r, c = np.argwhere(bad.reshape(arr.shape[0], arr.shape[1], -1).any(axis=2))[0]
        raise NumericalError(f"non-finite {what} at pixel (row={r}, col={c})")


def _update(q: np.ndarray, costs: np.ndarray, message: np.ndarray, damping: float) -> np.ndarray:
    _check_finite(message, "message")
    q_new = _softmax_neg(costs + message)
    _check_finite(q_new, "marginal")
    if damping != 1.0:
        q_new = (1.0 - damping) * q + damping * q_new
    return q_new


class _Kernel:
    """One Gaussian pairwise term: weight, features, and the cached normaliser."""

    def __init__(self, weight: float, features: FeatureField, mode: str):
        self.weight = weight
        self.features = features
        self.mode = mode
        n = features.num_pixels
        if mode == "fast":
            self.lattice = PermutohedralLattice(features)
            self._raw = self.lattice.filter
        else:
            if n > BRUTE_FORCE_MAX_PIXELS:
                raise SizeGuardError(
                    f"brute-force inference on {n} pixels exceeds the {BRUTE_FORCE_MAX_PIXELS}-pixel limit"
                )
            self._raw = lambda v: brute_force_filter(v, features)
        self.norm = self._raw(np.ones((n, 1)))[:, 0]
        if self.norm.min() < NORMALIZER_FLOOR:
            raise NumericalError("filter normaliser vanished")

    def filtered_without_self(self, q_flat: np.ndarray) -> np.ndarray:
        return (self._raw(q_flat) - q_flat) / self.norm[:, None]


class DenseKernels:
    """Appearance and smoothness kernels for one image, built once per inference run."""

    def __init__(self, image: ImageTensor, params: CrfParams, mode: str = "fast", threads: int = 1):
        if mode not in FILTER_MODES:
            raise ValueError(f"filter mode must be one of {FILTER_MODES}, got {mode!r}")
        self.shape = (image.height, image.width)
        self.threads = max(1, int(threads))
        self.kernels = []
        specs = [
            (params.w_appearance, lambda: make_bilateral_features(image, params.theta_alpha, params.theta_beta)),
            (params.w_smoothness, lambda: make_spatial_features(image.height, image.width, params.theta_gamma)),
        ]
        live = [(w, make) for w, make in specs if w > 0]
        if self.threads > 1 and len(live) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                self.kernels = list(pool.map(lambda s: _Kernel(s[0], s[1](), mode), live))
        else:
            self.kernels = [_Kernel(w, make(), mode) for w, make in live]

    def message(self, q: np.ndarray) -> np.ndarray:
        h, w, L = q.shape
        q_flat = q.reshape(h * w, L)
        if self.threads > 1 and len(self.kernels) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                parts = list(pool.map(lambda k: k.filtered_without_self(q_flat), self.kernels))
        else:
            parts = [k.filtered_without_self(q_flat) for k in self.kernels]
        msg = np.zeros_like(q_flat)
        for k, filtered in zip(self.kernels, parts):
            # Potts: sum over l' != l of the filtered mass of class l'
            msg += k.weight * (filtered.sum(axis=1, keepdims=True) - filtered)
        return msg.reshape(h, w, L)


def _check_shapes(q: MarginalField, unary: UnaryField, image: ImageTensor | None = None):
    if q.q.shape != unary.costs.shape:
        raise ValueError(f"shape mismatch: marginals {q.q.shape} vs unary {unary.costs.shape}")
    if image is not None and (image.height, image.width) != unary.shape:
        raise ValueError(f"shape mismatch: image {image.height}x{image.width} vs unary {unary.shape}")


def dense_mean_field_step(q: MarginalField, unary: UnaryField, image: ImageTensor, params: CrfParams,
                          *, filter_mode: str = "fast", kernels: DenseKernels | None = None) -> MarginalField:
    """One synchronous mean-field update of the fully connected model."""
    _check_shapes(q, unary, image)
    validate_params(params, unary.num_classes)
    if kernels is None:
        kernels = DenseKernels(image, params, filter_mode)
    return MarginalField(_update(q.q, unary.costs, kernels.message(q.q), params.damping))


def _grid_neighbor_sums(q: np.ndarray):
    """Per pixel: number of 4-neighbours and the sum of their marginals."""
    h, w, _ = q.shape
    total = np.zeros_like(q)
    count = np.zeros((h, w, 1))
    total[1:] += q[:-1]
    count[1:] += 1
    total[:-1] += q[1:]
    count[:-1] += 1
    total[:, 1:] += q[:, :-1]
    count[:, 1:] += 1
    total[:, :-1] += q[:, 1:]
    count[:, :-1] += 1
    return count, total


def grid_message(q: np.ndarray, w_grid: float) -> np.ndarray:
    count, total = _grid_neighbor_sums(q)
    return w_grid * (count - total)


def grid_mean_field_step(q: MarginalField, unary: UnaryField, params: CrfParams) -> MarginalField:
    """One synchronous mean-field update of the 4-connected Potts grid."""
    _check_shapes(q, unary)
    validate_params(params, unary.num_classes)
    return MarginalField(_update(q.q, unary.costs, grid_message(q.q, params.w_grid), params.damping))


def run_inference(unary: UnaryField, image: ImageTensor | None, params: CrfParams, *,
                  filter_mode: str = "fast", threads: int = 1, energy: bool = False):
    """Initialise from the unary and run ``params.iterations`` updates of the selected model.

    Returns ``(marginals, labels, trace)``; labels are the per-pixel argmax with
    ties going to the lowest class index.
    """
    validate_params(params, unary.num_classes)
    dense = params.model_kind == "dense"
    if dense:
        if image is None:
            raise ValueError("the dense model needs an image")
        if (image.height, image.width) != unary.shape:
            raise ValueError(f"shape mismatch: image {image.height}x{image.width} vs unary {unary.shape}")
    q = init_marginals(unary).q
    trace = InferenceTrace()
    kernels = DenseKernels(image, params, filter_mode, threads) if dense and params.iterations else None
    for _ in range(params.iterations):
        if dense:
            message = kernels.message(q)
        else:
            message = grid_message(q, params.w_grid)
        q_new = _update(q, unary.costs, message, params.damping)
        delta = float(np.abs(q_new - q).max())
        q = q_new
        trace.iterations_run += 1
        trace.per_iteration_max_delta.append(delta)
        if params.early_exit and delta < EARLY_EXIT_DELTA:
            break
    marginals = MarginalField(q)
    labels = marginals.argmax()
    if energy and unary.shape[0] * unary.shape[1] <= ENERGY_MAX_PIXELS:
        if dense:
            trace.final_energy = dense_energy(labels, unary, image, params)
        else:
            trace.final_energy = grid_energy(labels, unary, params)
    return marginals, labels, trace


def _gaussian_matrix(features: FeatureField) -> np.ndarray:
    f = features.flat()
    sq = np.einsum("ij,ij->i", f, f)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * f @ f.T, 0.0)
    return np.exp(-0.5 * d2)


def _unary_term(labels: LabelMap, unary: UnaryField) -> float:
    if labels.shape != unary.shape or labels.num_classes != unary.num_classes:
        raise ValueError("labels and unary disagree in shape or class count")
    return float(np.take_along_axis(unary.costs, labels.labels[:, :, None], axis=2).sum())


def dense_energy(labels: LabelMap, unary: UnaryField, image: ImageTensor, params: CrfParams,
                 *, max_pixels: int = ENERGY_MAX_PIXELS) -> float:
    """Exact Gibbs energy of a labelling under the fully connected Potts model."""
    n = labels.height * labels.width
    if n > max_pixels:
        raise SizeGuardError(f"too large for exact energy: {n} pixels (limit {max_pixels})")
    energy = _unary_term(labels, unary)
    x = labels.labels.ravel()
    differ = x[:, None] != x[None, :]
    pair = np.zeros((n, n))
    if params.w_appearance:
        pair += params.w_appearance * _gaussian_matrix(
            make_bilateral_features(image, params.theta_alpha, params.theta_beta))
    if params.w_smoothness:
        pair += params.w_smoothness * _gaussian_matrix(
            make_spatial_features(labels.height, labels.width, params.theta_gamma))
    # symmetric with a zero diagonal under the mask, so half the full sum is the i < j sum
    return energy + 0.5 * float((pair * differ).sum())


def grid_energy(labels: LabelMap, unary: UnaryField, params: CrfParams) -> float:
    """Energy of a labelling under the 4-connected Potts grid."""
    energy = _unary_term(labels, unary)
    x = labels.labels
    cuts = np.count_nonzero(x[1:] != x[:-1]) + np.count_nonzero(x[:, 1:] != x[:, :-1])
    return energy + params.w_grid * cuts
