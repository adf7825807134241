"""Eight-convolution classifier with channel and spatial attention.

The layer order is fixed: two conv+spatial-attention+pool blocks, two
conv-conv-pool blocks, then conv7, channel attention, conv8 (no activation)
and a final pool before the flatten and the four-way linear head.  All
convolutions are 3x3, stride 1, padding 1; all poolings are 2x2 stride 2,
with a dimension smaller than the window passing through unchanged.

The input is a folded epoch image of height 4*C for C retained electrodes
and width 64, so the head dimension is derived from the configured height
rather than hard-coded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import ChannelAttention, SpatialAttention, _kaiming_uniform
from .seeding import derive_rng
from .tensor import (
    Tensor,
    conv2d,
    linear,
    max_pool2d,
    no_grad,
    relu,
    softmax,
)

DEFAULT_CHANNELS = (8, 16, 32, 32, 64, 64, 128, 128)
N_CLASSES = 4


def _pool_dim(n: int, kernel: int = 2, stride: int = 2) -> int:
    if n < kernel:
        return n
    return (n - kernel) // stride + 1


@dataclass(frozen=True)
class TraceRow:
    op: str
    in_shape: tuple
    out_shape: tuple
    activation: str | None = None


def layer_plan(input_height: int, input_width: int = 64,
               channels=DEFAULT_CHANNELS, n_classes: int = N_CLASSES) -> list[TraceRow]:
    """Symbolic shape trace of the full forward pass, one row per layer."""
    channels = tuple(channels)
    if len(channels) != 8:
        raise ValueError(f"channel plan must list 8 convolution widths, got {len(channels)}")
    if input_height < 1 or input_width < 1:
        raise ValueError("input dimensions must be positive")

    rows: list[TraceRow] = []
    h, w = input_height, input_width

    def conv_row(idx: int, cin: int, cout: int, act: str | None):
        rows.append(TraceRow(f"conv{idx}", (h, w, cin), (h, w, cout), act))

    def pool_row(c: int):
        nonlocal h, w
        h2, w2 = _pool_dim(h), _pool_dim(w)
        rows.append(TraceRow("maxpool", (h, w, c), (h2, w2, c)))
        h, w = h2, w2

    conv_row(1, 1, channels[0], "relu")
    rows.append(TraceRow("sam", (h, w, channels[0]), (h, w, channels[0])))
    pool_row(channels[0])
    conv_row(2, channels[0], channels[1], "relu")
    rows.append(TraceRow("sam", (h, w, channels[1]), (h, w, channels[1])))
    pool_row(channels[1])
    conv_row(3, channels[1], channels[2], "relu")
    conv_row(4, channels[2], channels[3], "relu")
    pool_row(channels[3])
    conv_row(5, channels[3], channels[4], "relu")
    conv_row(6, channels[4], channels[5], "relu")
    pool_row(channels[5])
    conv_row(7, channels[5], channels[6], "relu")
    rows.append(TraceRow("cam", (h, w, channels[6]), (h, w, channels[6])))
    conv_row(8, channels[6], channels[7], None)
    pool_row(channels[7])
    flat = h * w * channels[7]
    rows.append(TraceRow("flatten", (h, w, channels[7]), (flat,)))
    rows.append(TraceRow("fc", (flat,), (n_classes,)))
    rows.append(TraceRow("softmax", (n_classes,), (n_classes,)))
    return rows


def feature_shape(input_height: int, input_width: int = 64,
                  channels=DEFAULT_CHANNELS) -> tuple[int, int, int]:
    """Shape of the conv8 output map, the target of activation mapping."""
    for row in layer_plan(input_height, input_width, channels):
        if row.op == "conv8":
            return row.out_shape
    raise AssertionError("plan has no conv8 row")


def count_flops(input_height: int, input_width: int = 64,
                channels=DEFAULT_CHANNELS, n_classes: int = N_CLASSES) -> int:
    """Multiply-accumulate count of one forward pass.

    One MAC is one multiply plus one add.  Convolutions contribute
    out_h*out_w*out_c*(in_c*kh*kw), the head flat*n_classes, the attention
    MLP its two pooled passes and the spatial gate its single 3x3 kernel
    over two planes.  Pooling, activations and bias adds contribute none.
    """
    total = 0
    for row in layer_plan(input_height, input_width, channels, n_classes):
        if row.op.startswith("conv"):
            h, w, cout = row.out_shape
            cin = row.in_shape[2]
            total += h * w * cout * cin * 9
        elif row.op == "sam":
            h, w, _ = row.in_shape
            total += h * w * 2 * 9
        elif row.op == "cam":
            c = row.in_shape[2]
            hidden = c // 5
            total += 2 * (c * hidden + hidden * c)
        elif row.op == "fc":
            total += row.in_shape[0] * n_classes
    return total


def count_params(input_height: int, input_width: int = 64,
                 channels=DEFAULT_CHANNELS, n_classes: int = N_CLASSES) -> int:
    """Trainable parameter count for the given configuration."""
    channels = tuple(channels)
    total = 0
    cin = 1
    for cout in channels:
        total += cout * cin * 9 + cout
        cin = cout
    total += 2 * (1 * 2 * 9 + 1)
    c = channels[6]
    hidden = c // 5
    total += hidden * c + hidden + c * hidden + c
    flat = layer_plan(input_height, input_width, channels, n_classes)[-2].in_shape[0]
    total += n_classes * flat + n_classes
    return total


@dataclass
class FeatureCapture:
    """Conv8 feature map and logits from one forward pass, still on the
    autodiff graph so the map's gradient can be pulled from the logits."""

    features: Tensor
    logits: Tensor

    def probabilities(self) -> np.ndarray:
        return softmax(self.logits.data)


class CnnCsaModel:
    """The attention CNN, parameterized by folded-image height.

    ``seed`` drives Kaiming-uniform fan-in weight draws (biases start at
    zero) through a named sub-stream, so equal seeds give bit-identical
    models.
    """

    def __init__(self, input_height: int = 84, input_width: int = 64,
                 channels=DEFAULT_CHANNELS, n_classes: int = N_CLASSES,
                 seed: int = 0, dtype=np.float32):
        self.input_height = int(input_height)
        self.input_width = int(input_width)
        self.channels = tuple(channels)
        self.n_classes = int(n_classes)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype).type
        plan = layer_plan(self.input_height, self.input_width, self.channels, self.n_classes)
        self.flat_dim = plan[-2].in_shape[0]

        rng = derive_rng(self.seed, "init")
        self.convs: list[tuple[Tensor, Tensor]] = []
        cin = 1
        for i, cout in enumerate(self.channels):
            if i == 0:
                weight = Tensor(
                    _kaiming_uniform(rng, (cout, cin, 3, 3), cin * 9, self.dtype),
                    requires_grad=True,
                )
                bias = Tensor(np.zeros(cout, dtype=self.dtype), requires_grad=True)
                self.convs.append((weight, bias))
                self.sam1 = SpatialAttention(rng, self.dtype)
            elif i == 1:
                weight = Tensor(
                    _kaiming_uniform(rng, (cout, cin, 3, 3), cin * 9, self.dtype),
                    requires_grad=True,
                )
                bias = Tensor(np.zeros(cout, dtype=self.dtype), requires_grad=True)
                self.convs.append((weight, bias))
                self.sam2 = SpatialAttention(rng, self.dtype)
            else:
                if i == 7:
                    self.cam = ChannelAttention(self.channels[6], rng, self.dtype)
                weight = Tensor(
                    _kaiming_uniform(rng, (cout, cin, 3, 3), cin * 9, self.dtype),
                    requires_grad=True,
                )
                bias = Tensor(np.zeros(cout, dtype=self.dtype), requires_grad=True)
                self.convs.append((weight, bias))
            cin = cout
        self.fc_weight = Tensor(
            _kaiming_uniform(rng, (self.n_classes, self.flat_dim), self.flat_dim, self.dtype),
            requires_grad=True,
        )
        self.fc_bias = Tensor(np.zeros(self.n_classes, dtype=self.dtype), requires_grad=True)

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = []
        for i, (w, b) in enumerate(self.convs, start=1):
            named.append((f"conv{i}.weight", w))
            named.append((f"conv{i}.bias", b))
            if i == 1:
                named.extend((f"sam1.{n}", p) for n, p in self.sam1.parameters())
            elif i == 2:
                named.extend((f"sam2.{n}", p) for n, p in self.sam2.parameters())
            elif i == 7:
                named.extend((f"cam.{n}", p) for n, p in self.cam.parameters())
        named.append(("fc.weight", self.fc_weight))
        named.append(("fc.bias", self.fc_bias))
        return named

    def state(self) -> list[tuple[str, np.ndarray]]:
        return [(name, p.data) for name, p in self.parameters()]

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters():
            if name not in arrays:
                raise ValueError(f"checkpoint is missing parameter {name!r}")
            arr = np.asarray(arrays[name], dtype=self.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"parameter shape mismatch for {name!r}: checkpoint {arr.shape}, model {p.data.shape}"
                )
            p.data = arr.copy()
        extra = set(arrays) - {name for name, _ in self.parameters()}
        if extra:
            raise ValueError(f"checkpoint has unexpected parameters: {sorted(extra)}")

    def count_params(self) -> int:
        return sum(p.data.size for _, p in self.parameters())

    def count_flops(self) -> int:
        return count_flops(self.input_height, self.input_width, self.channels, self.n_classes)

    # -- forward -------------------------------------------------------------

    def _check_input(self, x: Tensor) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x), dtype=self.dtype)
        expect = (self.input_height, self.input_width, 1)
        if x.data.ndim not in (3, 4) or x.data.shape[-3:] != expect:
            raise ValueError(
                f"model input must be [...,{expect[0]},{expect[1]},1], got {x.data.shape}"
            )
        return x

    def _trunk(self, x: Tensor, trace: list | None = None) -> Tensor:
        """Everything up to and including conv8: the map Grad-CAM reads."""
        def record(op, before, after, act=None):
            if trace is not None:
                trace.append(TraceRow(op, before.data.shape[-3:], after.data.shape[-3:], act))

        def spatial_block(t: Tensor, idx: int, sam) -> Tensor:
            w, b = self.convs[idx]
            y = relu(conv2d(t, w, b, stride=1, padding=1))
            record(f"conv{idx + 1}", t, y, "relu")
            g = sam(y)
            record("sam", y, g)
            p = max_pool2d(g, 2, 2)
            record("maxpool", g, p)
            return p

        def plain_conv(t: Tensor, idx: int, act: bool) -> Tensor:
            w, b = self.convs[idx]
            y = conv2d(t, w, b, stride=1, padding=1)
            if act:
                y2 = relu(y)
                record(f"conv{idx + 1}", t, y2, "relu")
                return y2
            record(f"conv{idx + 1}", t, y, None)
            return y

        t = spatial_block(x, 0, self.sam1)
        t = spatial_block(t, 1, self.sam2)
        t = plain_conv(t, 2, True)
        t = plain_conv(t, 3, True)
        p = max_pool2d(t, 2, 2)
        record("maxpool", t, p)
        t = plain_conv(p, 4, True)
        t = plain_conv(t, 5, True)
        p = max_pool2d(t, 2, 2)
        record("maxpool", t, p)
        t = plain_conv(p, 6, True)
        g = self.cam(t)
        record("cam", t, g)
        return plain_conv(g, 7, False)

    def _head(self, features: Tensor, trace: list | None = None) -> Tensor:
        pooled = max_pool2d(features, 2, 2)
        if trace is not None:
            trace.append(TraceRow("maxpool", features.data.shape[-3:], pooled.data.shape[-3:]))
        if pooled.data.ndim == 4:
            flat = pooled.reshape(pooled.data.shape[0], self.flat_dim)
        else:
            flat = pooled.reshape(self.flat_dim)
        if trace is not None:
            trace.append(TraceRow("flatten", pooled.data.shape[-3:], (self.flat_dim,)))
        logits = linear(flat, self.fc_weight, self.fc_bias)
        if trace is not None:
            trace.append(TraceRow("fc", (self.flat_dim,), (self.n_classes,)))
            trace.append(TraceRow("softmax", (self.n_classes,), (self.n_classes,)))
        return logits

    def _features_and_logits(self, x: Tensor, trace: list | None = None) -> tuple[Tensor, Tensor]:
        features = self._trunk(x, trace)
        return features, self._head(features, trace)

    def logits(self, x) -> Tensor:
        x = self._check_input(x)
        _, logits = self._features_and_logits(x)
        return logits

    def forward(self, x) -> Tensor:
        """Class probabilities for one image or a batch (softmax applied)."""
        x = self._check_input(x)
        _, logits = self._features_and_logits(x)
        return Tensor(softmax(logits.data))

    def forward_with_capture(self, x) -> FeatureCapture:
        """Forward pass that also hands back the conv8 map, re-rooted as a
        leaf so a backward from any logit lands its gradient there.

        Only the small pool/flatten/fc head is taped; the conv stack runs
        untaped, which keeps per-sample map extraction cheap.
        """
        x = self._check_input(x)
        with no_grad():
            trunk_out = self._trunk(x)
        features = Tensor(trunk_out.data, requires_grad=True)
        logits = self._head(features)
        return FeatureCapture(features=features, logits=logits)

    def shape_trace(self) -> list[TraceRow]:
        """Layer-by-layer shapes recorded from a real forward pass."""
        x = Tensor(np.zeros((self.input_height, self.input_width, 1), dtype=self.dtype))
        trace: list[TraceRow] = []
        self._features_and_logits(x, trace=trace)
        return trace
