"""Gradient-weighted class activation maps over the conv8 feature block.

For a sample and a class, the gradient of the pre-softmax class score with
respect to the final conv feature map is averaged per feature channel into
weights, the weighted channel sum is rectified into a low-resolution map,
and that map is bilinearly upsampled to input size and min-max normalized
into a heat map ("hot map") over the folded signal image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CnnCsaModel, FeatureCapture
from .preproc import EpochDataset, IMAGE_WIDTH
from .tensor import bilinear_upsample


@dataclass
class ActivationMap:
    """One sample's normalized heat map over the folded image."""

    values: np.ndarray  # [H, W] in [0, 1]
    class_id: int
    sample_id: int


@dataclass
class CamIntermediates:
    """The three stages behind a hot map, kept for inspection."""

    gradient: np.ndarray  # dscore/dfeatures, feature-map shaped
    weights: np.ndarray  # per-feature-channel means of the gradient
    low_res: np.ndarray  # rectified weighted channel sum, pre-upsample


def feature_gradient(capture: FeatureCapture, class_id) -> np.ndarray:
    """Gradient of the chosen pre-softmax score w.r.t. the captured map.

    ``class_id`` is one class index applied to every sample in the capture,
    or a per-sample sequence.  Grads are cleared first, so repeated calls
    on one capture stay independent.
    """
    logits = capture.logits
    n_classes = logits.data.shape[-1]
    batched = logits.data.ndim == 2
    ids = np.asarray(class_id, dtype=np.int64)
    if np.any(ids < 0) or np.any(ids >= n_classes):
        raise ValueError(f"class id out of range 0..{n_classes - 1}: {class_id}")
    seed = np.zeros_like(logits.data)
    if batched:
        n = logits.data.shape[0]
        per_sample = np.broadcast_to(ids, (n,))
        seed[np.arange(n), per_sample] = 1.0
    else:
        if ids.ndim != 0:
            raise ValueError("single-sample capture takes a scalar class id")
        seed[int(ids)] = 1.0
    logits.clear_graph_grads()
    logits.backward(seed)
    return np.array(capture.features.grad, dtype=np.float64)


def channel_weights(gradient: np.ndarray) -> np.ndarray:
    """Spatial mean of the gradient per feature channel ([..,H,W,C] -> [..,C])."""
    g = np.asarray(gradient, dtype=np.float64)
    if g.ndim < 3:
        raise ValueError(f"gradient must be [..,H,W,C], got {g.shape}")
    return g.mean(axis=(-3, -2))


def low_res_map(features: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Rectified weighted sum over feature channels ([..,H,W,C] -> [..,H,W])."""
    a = np.asarray(features, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if a.shape[-1] != w.shape[-1]:
        raise ValueError(
            f"{a.shape[-1]} feature channels but {w.shape[-1]} weights"
        )
    mixed = np.einsum("...hwc,...c->...hw", a, w)
    return np.maximum(mixed, 0.0)


def _normalize(m: np.ndarray) -> np.ndarray:
    lo, hi = float(m.min()), float(m.max())
    # near-constant maps carry no signal; without the relative tolerance the
    # upsampler's rounding wobble (~1 ulp) would normalize to a fake pattern
    if hi - lo <= 1e-12 * max(abs(hi), abs(lo), 1.0):
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def to_hot(low_res: np.ndarray, target_h: int, target_w: int = IMAGE_WIDTH) -> np.ndarray:
    """Upsample a low-res map to image size and min-max normalize.

    A constant map has no localization signal and maps to all zeros.
    """
    m = np.asarray(low_res, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"low-res map must be 2-D, got {m.shape}")
    if target_h < m.shape[0] or target_w < m.shape[1]:
        raise ValueError(
            f"target {target_h}x{target_w} is smaller than the map {m.shape}"
        )
    return _normalize(bilinear_upsample(m, target_h, target_w))


def cam_intermediates(capture: FeatureCapture, class_id: int) -> CamIntermediates:
    """Gradient, channel weights and low-res map for one capture/class."""
    g = feature_gradient(capture, class_id)
    w = channel_weights(g)
    return CamIntermediates(
        gradient=g,
        weights=w,
        low_res=low_res_map(np.asarray(capture.features.data, dtype=np.float64), w),
    )


def _resize_matrix(src: int, dst: int) -> np.ndarray:
    """Row-stochastic corner-aligned interpolation weights [dst, src]."""
    m = np.zeros((dst, src))
    if dst == 1:
        m[0, 0] = 1.0
        return m
    pos = np.arange(dst) * ((src - 1) / (dst - 1))
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, src - 1)
    frac = pos - i0
    np.add.at(m, (np.arange(dst), i0), 1.0 - frac)
    np.add.at(m, (np.arange(dst), i1), frac)
    return m


def hot_maps_for_dataset(model: CnnCsaModel, dataset: EpochDataset,
                         batch_size: int = 64) -> list:
    """Hot maps for every epoch, each for its own true class.

    Heavy lifting is batched: one backward per batch seeds every sample's
    class score at once (samples are independent through the network), and
    the bilinear upsample runs as two small matrix products.
    """
    if len(dataset) == 0:
        raise ValueError("dataset has no epochs")
    images = dataset.images(model.dtype)
    labels = dataset.labels()
    n, target_h = images.shape[0], images.shape[1]
    up_rows = up_cols = None
    maps: list[ActivationMap] = []
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        capture = model.forward_with_capture(images[start:stop])
        grad = feature_gradient(capture, labels[start:stop])
        weights = channel_weights(grad)
        low = low_res_map(np.asarray(capture.features.data, np.float64), weights)
        if up_rows is None:
            up_rows = _resize_matrix(low.shape[1], target_h)
            up_cols = _resize_matrix(low.shape[2], IMAGE_WIDTH)
        upsampled = np.matmul(up_rows, np.matmul(low, up_cols.T))
        lo = upsampled.min(axis=(1, 2), keepdims=True)
        hi = upsampled.max(axis=(1, 2), keepdims=True)
        span = hi - lo
        # same degenerate-map rule as _normalize
        flat = span[:, 0, 0] <= 1e-12 * np.maximum(
            np.maximum(np.abs(hi), np.abs(lo)), 1.0
        )[:, 0, 0]
        span[flat] = 1.0
        hot = (upsampled - lo) / span
        hot[flat] = 0.0
        for i in range(stop - start):
            maps.append(ActivationMap(
                values=hot[i], class_id=int(labels[start + i]), sample_id=start + i
            ))
    return maps


# -- export ----------------------------------------------------------------


def save_map_pgm(path, values: np.ndarray) -> None:
    """8-bit binary PGM; values quantized as round(255*v)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"PGM export needs a 2-D map, got {v.shape}")
    pixels = np.clip(np.round(v * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode())
        fh.write(pixels.tobytes())


def save_map_csv(path, values: np.ndarray) -> None:
    """Lossless CSV of the raw floats (shortest round-trip formatting)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"CSV export needs a 2-D map, got {v.shape}")
    with open(path, "w", encoding="ascii") as fh:
        for row in v:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def load_map_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
