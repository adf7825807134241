"""Channel and spatial attention blocks.

Channel attention squeezes the map with global average and max pooling,
pushes both pooled vectors through one shared two-layer MLP (hidden width
floor(C/5), ReLU in the middle), adds the two outputs and applies a sigmoid.
The resulting per-channel mask rescales the input map.

Spatial attention pools over channels (average and max), stacks the two
planes, convolves with a single 3x3 kernel at stride 1 / padding 1 and
applies a sigmoid, giving a per-position mask broadcast over channels.
"""
from __future__ import annotations

import numpy as np

from .tensor import (
    Tensor,
    concat_channels,
    conv2d,
    global_pool,
    linear,
    relu,
    sigmoid,
)


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ChannelAttention:
    """Shared-MLP channel gate; requires at least 5 channels so the hidden
    layer is non-empty."""

    def __init__(self, channels: int, rng: np.random.Generator, dtype=np.float32):
        if channels < 5:
            raise ValueError(f"channel attention needs >= 5 channels, got {channels}")
        self.channels = channels
        self.hidden = channels // 5
        self.mlp_w1 = Tensor(
            _kaiming_uniform(rng, (self.hidden, channels), channels, dtype),
            requires_grad=True,
        )
        self.mlp_b1 = Tensor(np.zeros(self.hidden, dtype=dtype), requires_grad=True)
        self.mlp_w2 = Tensor(
            _kaiming_uniform(rng, (channels, self.hidden), self.hidden, dtype),
            requires_grad=True,
        )
        self.mlp_b2 = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.last_mask: np.ndarray | None = None

    def parameters(self):
        return [
            ("mlp_w1", self.mlp_w1),
            ("mlp_b1", self.mlp_b1),
            ("mlp_w2", self.mlp_w2),
            ("mlp_b2", self.mlp_b2),
        ]

    def __call__(self, f: Tensor) -> Tensor:
        return cam_forward(f, self)


def cam_forward(f: Tensor, attn: ChannelAttention) -> Tensor:
    """Apply the channel mask to feature map ``f`` ([H,W,C] or [N,H,W,C])."""
    if f.data.shape[-1] != attn.channels:
        raise ValueError(
            f"channel mismatch: map has {f.data.shape[-1]} channels, block expects {attn.channels}"
        )
    batched = f.data.ndim == 4

    def squeeze(kind: str) -> Tensor:
        pooled = global_pool(f, "spatial", kind)
        vec = pooled.reshape(pooled.data.shape[0], attn.channels) if batched \
            else pooled.reshape(attn.channels)
        h = relu(linear(vec, attn.mlp_w1, attn.mlp_b1))
        return linear(h, attn.mlp_w2, attn.mlp_b2)

    m = sigmoid(squeeze("avg") + squeeze("max"))
    mask = m.reshape(m.data.shape[0], 1, 1, attn.channels) if batched \
        else m.reshape(1, 1, attn.channels)
    attn.last_mask = mask.data
    return f * mask


class SpatialAttention:
    """Single-kernel spatial gate over stacked channel-pool planes."""

    def __init__(self, rng: np.random.Generator, dtype=np.float32):
        self.kernel = Tensor(
            _kaiming_uniform(rng, (1, 2, 3, 3), 2 * 3 * 3, dtype), requires_grad=True
        )
        self.bias = Tensor(np.zeros(1, dtype=dtype), requires_grad=True)
        self.last_mask: np.ndarray | None = None

    def parameters(self):
        return [("conv.weight", self.kernel), ("conv.bias", self.bias)]

    def __call__(self, s: Tensor) -> Tensor:
        return sam_forward(s, self)


def sam_forward(s: Tensor, attn: SpatialAttention) -> Tensor:
    """Apply the spatial mask to feature map ``s`` ([H,W,C] or [N,H,W,C])."""
    avg = global_pool(s, "channel", "avg")
    mx = global_pool(s, "channel", "max")
    planes = concat_channels(avg, mx)
    mask = sigmoid(conv2d(planes, attn.kernel, attn.bias, stride=1, padding=1))
    attn.last_mask = mask.data
    return s * mask
