"""Dense numpy-backed tensors with reverse-mode automatic differentiation.

The op set is deliberately small: exactly the layers the classifier needs
(convolution, max pooling, linear, ReLU/sigmoid, softmax cross-entropy,
global pooling, channel concatenation) plus elementwise add/mul, sum and
reshape as glue.  Spatial tensors use height x width x channels layout with
an optional leading batch axis; every op accepts both forms.

Gradients accumulate additively into ``.grad`` of every tensor reached by
``backward``.  Interior nodes keep their accumulated gradients too, so a
second backward pass over the same graph compounds stale values; call
``clear_graph_grads`` first when replaying a graph.  Accumulation across
separate graphs that share leaves (the usual mini-batch pattern) is safe.
All math is plain numpy, which keeps results bit-identical for identical
inputs.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import blas as _blas

_GRAD_ENABLED = True
_CHECK_FINITE = False


def set_check_finite(flag: bool) -> None:
    """Enable per-op finiteness assertions (debug aid, off by default)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


@contextmanager
def no_grad():
    """Context manager that skips graph construction, for inference loops."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype in (np.float32, np.float64):
        return arr
    return arr.astype(np.float64)


class Tensor:
    """A dense array plus the bookkeeping needed to replay backward."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph -----------------------------------------------------------

    def backward(self, grad=None) -> None:
        """Accumulate gradients of ``self`` into every ancestor's ``.grad``.

        Without an explicit seed gradient the root must be scalar.  Replaying
        the same graph needs ``clear_graph_grads`` in between; otherwise the
        stale interior gradients feed back into the new pass.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(
                    "backward root must be scalar unless a seed gradient is given"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ValueError(
                    f"seed gradient shape {grad.shape} does not match tensor shape {self.data.shape}"
                )

        topo: list[Tensor] = []
        visited = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        _accumulate(self, grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def clear_graph_grads(self) -> None:
        """Set ``grad`` to None on this tensor and every ancestor, so a
        fresh backward pass starts from zero instead of accumulating."""
        seen = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            node.grad = None
            stack.extend(node._parents)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -other if isinstance(other, Tensor) else -np.asarray(other))

    def sum(self) -> "Tensor":
        out_data = np.asarray(self.data.sum(), dtype=self.data.dtype)
        src = self

        def bw(g):
            _accumulate(src, np.broadcast_to(g, src.data.shape))

        return _from_op(out_data, (src,), bw)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        src = self

        def bw(g):
            _accumulate(src, g.reshape(src.data.shape))

        return _from_op(out_data, (src,), bw)


def _accumulate(t: Tensor, g: np.ndarray, own: bool = False) -> None:
    # own=True promises g is freshly allocated and aliases no other live
    # gradient, letting us adopt it without a defensive copy
    if not t.requires_grad:
        return
    if t.grad is None:
        if own and g.dtype == t.data.dtype:
            t.grad = g
        else:
            t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _from_op(data: np.ndarray, parents: tuple, backward) -> Tensor:
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced in forward pass")
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data + b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _from_op(out_data, (a, b), bw)


def _mul_grad(g: np.ndarray, other: np.ndarray, shape) -> np.ndarray:
    """Gradient of an elementwise product wrt the factor of shape `shape`.

    When that factor was broadcast, fuse the multiply and the axis sums in
    one einsum pass instead of materialising the full-size product.
    """
    if g.shape == tuple(shape):
        return g * other
    nd = g.ndim
    padded = (1,) * (nd - len(shape)) + tuple(shape)
    letters = "abcdefghijklmnop"[:nd]
    kept = "".join(letters[i] for i in range(nd) if padded[i] != 1)
    prod = np.einsum(
        f"{letters},{letters}->{kept}",
        g,
        np.broadcast_to(other, g.shape),
        optimize=True,
    )
    return prod.reshape(shape)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _mul_grad(g, b.data, a.data.shape), own=True)
        if b.requires_grad:
            _accumulate(b, _mul_grad(g, a.data, b.data.shape), own=True)

    return _from_op(out_data, (a, b), bw)


# -- activations ---------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    x = _coerce(x)
    out_data = np.maximum(x.data, 0)

    def bw(g):
        # out > 0 coincides with x > 0, so no saved mask is needed
        _accumulate(x, g * (out_data > 0), own=True)

    return _from_op(out_data, (x,), bw)


def _sigmoid_stable(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    x = _coerce(x)
    out_data = _sigmoid_stable(x.data)

    def bw(g):
        _accumulate(x, g * out_data * (1.0 - out_data), own=True)

    return _from_op(out_data, (x,), bw)


def pointwise(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown pointwise kind {kind!r}")


# -- dense layers ----------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` with ``x`` of shape [n] or [batch, n]."""
    x, weight, bias = _coerce(x), _coerce(weight), _coerce(bias)
    if x.data.shape[-1] != weight.data.shape[1]:
        raise ValueError(
            f"linear dimension mismatch: input {x.data.shape[-1]} vs weight {weight.data.shape[1]}"
        )
    out_data = x.data @ weight.data.T + bias.data

    def bw(g):
        if x.data.ndim == 1:
            _accumulate(weight, np.outer(g, x.data), own=True)
            _accumulate(bias, g)
        else:
            _accumulate(
                weight,
                g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.data.shape[-1]),
                own=True,
            )
            _accumulate(bias, g.reshape(-1, g.shape[-1]).sum(axis=0), own=True)
        if x.requires_grad:
            _accumulate(x, g @ weight.data, own=True)

    return _from_op(out_data, (x, weight, bias), bw)


# -- convolution -----------------------------------------------------------


def _conv_windows(x4: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    win = sliding_window_view(x4, (kh, kw), axis=(1, 2))
    return win[:, ::stride, ::stride]


def _conv_raw(x4: np.ndarray, k4: np.ndarray, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Valid cross-correlation of [N,H,W,Cin] with [Cout,Cin,kh,kw]."""
    cout, cin, kh, kw = k4.shape
    win = _conv_windows(x4, kh, kw, stride)
    n, ho, wo = win.shape[:3]
    cols = win.reshape(n * ho * wo, cin * kh * kw)
    out = cols @ k4.reshape(cout, -1).T
    return out.reshape(n, ho, wo, cout), cols


def _gemm_acc(x2: np.ndarray, k2: np.ndarray, y2: np.ndarray) -> None:
    """``y2 += x2 @ k2`` in place; all operands C-contiguous 2-D slices."""
    fn = _blas.sgemm if x2.dtype == np.float32 else _blas.dgemm
    fn(1.0, k2.T, x2.T, beta=1.0, c=y2.T, overwrite_c=1)


def _shifted_offsets(wp: int):
    for di in range(3):
        for dj in range(3):
            yield di, dj, (di - 1) * wp + (dj - 1)


class _Conv3x3Fast:
    """Same-size 3x3 stride-1 convolution as nine accumulating GEMMs.

    Input and output live on padded planes flattened to 2-D so every GEMM
    operand is a contiguous row slice; garbage contributions land only in
    the padding ring, which is cropped away.  Forward, input gradient and
    kernel gradient all reuse the pattern.
    """

    def __init__(self, xp_flat, k9, n, h, w, cin, cout, dtype):
        self.xf = xp_flat
        self.k9 = k9
        self.n, self.h, self.w = n, h, w
        self.cin, self.cout = cin, cout
        self.dtype = dtype
        self.hp, self.wp = h + 2, w + 2
        self.plane = self.hp * self.wp

    def forward(self) -> np.ndarray:
        total = self.n * self.plane
        yp = np.zeros((total, self.cout), dtype=self.dtype)
        for di, dj, o in _shifted_offsets(self.wp):
            a, b = max(0, -o), total - max(0, o)
            _gemm_acc(self.xf[a + o:b + o], self.k9[di, dj], yp[a:b])
        y = yp.reshape(self.n, self.hp, self.wp, self.cout)
        return y[:, 1:1 + self.h, 1:1 + self.w, :]

    def grads(self, g4: np.ndarray, need_dk: bool, need_dx: bool):
        total = self.n * self.plane
        dyp = np.zeros((total, self.cout), dtype=self.dtype)
        dyp.reshape(self.n, self.hp, self.wp, self.cout)[
            :, 1:1 + self.h, 1:1 + self.w, :] = g4
        dk9 = dxp = None
        if need_dk:
            dk9 = np.empty((3, 3, self.cin, self.cout), dtype=self.dtype)
        if need_dx:
            dxp = np.zeros((total, self.cin), dtype=self.dtype)
            k9t = np.ascontiguousarray(self.k9.transpose(0, 1, 3, 2))
        for di, dj, o in _shifted_offsets(self.wp):
            a, b = max(0, -o), total - max(0, o)
            if need_dk:
                dk9[di, dj] = self.xf[a + o:b + o].T @ dyp[a:b]
            if need_dx:
                _gemm_acc(dyp[a:b], k9t[di, dj], dxp[a + o:b + o])
        dk = None
        if need_dk:
            dk = np.ascontiguousarray(dk9.transpose(3, 2, 0, 1))
        dx = None
        if need_dx:
            dx = dxp.reshape(self.n, self.hp, self.wp, self.cin)[
                :, 1:1 + self.h, 1:1 + self.w, :]
        return dk, dx


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over [H,W,Cin] or [N,H,W,Cin] input.

    Kernel layout is [Cout,Cin,kh,kw] and padding is zero-fill on both
    spatial edges.  Backward reaches input, kernel and bias.
    """
    x, kernel, bias = _coerce(x), _coerce(kernel), _coerce(bias)
    batched = x.data.ndim == 4
    if x.data.ndim not in (3, 4):
        raise ValueError(f"conv2d expects 3-D or 4-D input, got {x.data.ndim}-D")
    if stride < 1 or padding < 0:
        raise ValueError("conv2d stride must be >= 1 and padding >= 0")
    x4 = x.data if batched else x.data[None]
    n, h, w, cin = x4.shape
    cout, kcin, kh, kw = kernel.data.shape
    if kcin != cin:
        raise ValueError(f"channel mismatch: input has {cin} channels, kernel expects {kcin}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(
            f"degenerate output: {h}x{w} input with kernel {kh}x{kw}, stride {stride}, padding {padding}"
        )

    # the shifted-GEMM engine works on padded planes, so it only wins while
    # the padding ring stays a small fraction of the map and the reduction
    # depth is fat enough for its nine GEMMs to beat one im2col pass
    fast = (
        stride == 1 and padding == 1 and kh == 3 and kw == 3
        and x4.dtype == kernel.data.dtype
        and x4.dtype in (np.float32, np.float64)
        and (h + 2) * (w + 2) <= 1.35 * h * w
        and cin >= 4
    )
    if fast:
        xp = np.pad(x4, ((0, 0), (1, 1), (1, 1), (0, 0)))
        k9 = np.ascontiguousarray(kernel.data.transpose(2, 3, 1, 0))
        engine = _Conv3x3Fast(
            xp.reshape(-1, cin), k9, n, h, w, cin, cout, x4.dtype
        )
        out4 = engine.forward() + bias.data
        out_data = out4 if batched else out4[0]

        def bw(g):
            g4 = g if batched else g[None]
            if bias.requires_grad:
                _accumulate(bias, g4.sum(axis=(0, 1, 2)), own=True)
            dk, dx = engine.grads(
                np.ascontiguousarray(g4), kernel.requires_grad, x.requires_grad
            )
            if dk is not None:
                _accumulate(kernel, dk, own=True)
            if dx is not None:
                _accumulate(x, dx if batched else dx[0], own=True)

        return _from_op(out_data, (x, kernel, bias), bw)

    xp = np.pad(x4, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else x4
    out4, cols = _conv_raw(xp, kernel.data, stride)
    out4 = out4 + bias.data
    out_data = out4 if batched else out4[0]

    def bw(g):
        g4 = g if batched else g[None]
        gcol = g4.reshape(-1, cout)
        if kernel.requires_grad:
            _accumulate(kernel, (gcol.T @ cols).reshape(kernel.data.shape), own=True)
        if bias.requires_grad:
            _accumulate(bias, g4.sum(axis=(0, 1, 2)), own=True)
        if x.requires_grad:
            # scatter strided gradient, then full correlation with the
            # flipped kernel recovers the padded-input gradient
            hs, ws = h + 2 * padding - kh + 1, w + 2 * padding - kw + 1
            gs = np.zeros((n, hs, ws, cout), dtype=g4.dtype)
            gs[:, ::stride, ::stride] = g4
            gp = np.pad(gs, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
            kflip = kernel.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            dxp, _ = _conv_raw(gp, np.ascontiguousarray(kflip), 1)
            dx = dxp[:, padding:padding + h, padding:padding + w, :]
            _accumulate(x, dx if batched else dx[0], own=True)

    return _from_op(out_data, (x, kernel, bias), bw)


# -- pooling ---------------------------------------------------------------


def max_pool2d(x: Tensor, kernel: int = 2, stride: int = 2) -> Tensor:
    """Spatial max pooling; a dimension smaller than the kernel passes
    through unchanged.  Ties route the gradient to the first maximum in
    row-major window order."""
    x = _coerce(x)
    if kernel < 1 or stride < 1:
        raise ValueError("max_pool2d kernel and stride must be >= 1")
    batched = x.data.ndim == 4
    if x.data.ndim not in (3, 4):
        raise ValueError(f"max_pool2d expects 3-D or 4-D input, got {x.data.ndim}-D")
    x4 = x.data if batched else x.data[None]
    n, h, w, c = x4.shape
    kh, sh = (1, 1) if h < kernel else (kernel, stride)
    kw, sw = (1, 1) if w < kernel else (kernel, stride)

    if kh == 1 and kw == 1:
        out_data = x.data

        def bw_identity(g):
            _accumulate(x, g)

        return _from_op(out_data.copy(), (x,), bw_identity)

    if kh == 2 and kw == 2 and sh == 2 and sw == 2:
        # the model's only pooling: compare the four window corners via
        # strided views, and on backward claim ties in row-major order
        ho, wo = h // 2, w // 2
        h2, w2 = ho * 2, wo * 2
        corners = (
            x4[:, 0:h2:2, 0:w2:2, :],
            x4[:, 0:h2:2, 1:w2:2, :],
            x4[:, 1:h2:2, 0:w2:2, :],
            x4[:, 1:h2:2, 1:w2:2, :],
        )
        out4 = np.maximum(
            np.maximum(corners[0], corners[1]),
            np.maximum(corners[2], corners[3]),
        )
        out_data = out4 if batched else out4[0]

        def bw2(g):
            g4 = g if batched else g[None]
            dx = np.zeros_like(x4)
            views = (
                dx[:, 0:h2:2, 0:w2:2, :],
                dx[:, 0:h2:2, 1:w2:2, :],
                dx[:, 1:h2:2, 0:w2:2, :],
                dx[:, 1:h2:2, 1:w2:2, :],
            )
            # first corner in row-major order claims the gradient on ties,
            # matching argmax semantics of the generic path
            rem = None
            for i, (src, dst) in enumerate(zip(corners, views)):
                hit = src == out4
                if rem is None:
                    rem = ~hit
                else:
                    hit &= rem
                    if i < 3:
                        rem ^= hit
                np.copyto(dst, g4, where=hit)
            _accumulate(x, dx if batched else dx[0], own=True)

        return _from_op(out_data, (x,), bw2)

    win = sliding_window_view(x4, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    n_, ho, wo = win.shape[:3]
    wflat = win.reshape(n_, ho, wo, c, kh * kw)
    idx = wflat.argmax(axis=-1)
    out4 = np.take_along_axis(wflat, idx[..., None], axis=-1)[..., 0]
    out_data = out4 if batched else out4[0]

    def bw(g):
        g4 = g if batched else g[None]
        dx = np.zeros_like(x4)
        ni, hi, wi, ci = np.indices((n_, ho, wo, c), sparse=True)
        rows = hi * sh + idx // kw
        cols = wi * sw + idx % kw
        if sh >= kh and sw >= kw:
            # windows disjoint, so indices are unique and a plain
            # fancy-index assignment is safe (and much faster)
            dx[ni, rows, cols, ci] = g4
        else:
            np.add.at(dx, (ni, rows, cols, ci), g4)
        _accumulate(x, dx if batched else dx[0], own=True)

    return _from_op(out_data, (x,), bw)


def global_pool(x: Tensor, axis: str, kind: str) -> Tensor:
    """Average or max reduction over all spatial positions (``axis="spatial"``,
    keeping [1,1,C]) or over channels (``axis="channel"``, keeping [H,W,1])."""
    x = _coerce(x)
    if axis not in ("spatial", "channel"):
        raise ValueError(f"unknown global_pool axis {axis!r}")
    if kind not in ("avg", "max"):
        raise ValueError(f"unknown global_pool kind {kind!r}")
    batched = x.data.ndim == 4
    if x.data.ndim not in (3, 4):
        raise ValueError(f"global_pool expects 3-D or 4-D input, got {x.data.ndim}-D")
    x4 = x.data if batched else x.data[None]
    n, h, w, c = x4.shape

    if axis == "spatial":
        red_axes = (1, 2)
        count = h * w
    else:
        red_axes = (3,)
        count = c

    if kind == "avg":
        out4 = x4.mean(axis=red_axes, keepdims=True)

        def bw(g):
            g4 = g if batched else g[None]
            dx = np.broadcast_to(g4 / count, x4.shape)
            _accumulate(x, dx if batched else dx[0])

    else:
        if axis == "spatial":
            flat = x4.reshape(n, h * w, c)
            pos = flat.argmax(axis=1)
            out4 = np.take_along_axis(flat, pos[:, None, :], axis=1).reshape(n, 1, 1, c)

            def bw(g):
                g4 = (g if batched else g[None]).reshape(n, 1, c)
                dflat = np.zeros((n, h * w, c), dtype=x4.dtype)
                np.put_along_axis(dflat, pos[:, None, :], g4, axis=1)
                dx = dflat.reshape(x4.shape)
                _accumulate(x, dx if batched else dx[0], own=True)

        else:
            pos = x4.argmax(axis=3)
            out4 = np.take_along_axis(x4, pos[..., None], axis=3)

            def bw(g):
                g4 = g if batched else g[None]
                dx = np.zeros_like(x4)
                np.put_along_axis(dx, pos[..., None], g4, axis=3)
                _accumulate(x, dx if batched else dx[0], own=True)

    out_data = out4 if batched else out4[0]
    return _from_op(out_data, (x,), bw)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two feature maps along the channel axis."""
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != b.data.ndim or a.data.shape[:-1] != b.data.shape[:-1]:
        raise ValueError(
            f"spatial mismatch in concat_channels: {a.data.shape} vs {b.data.shape}"
        )
    ca = a.data.shape[-1]
    out_data = np.concatenate([a.data, b.data], axis=-1)

    def bw(g):
        _accumulate(a, g[..., :ca])
        _accumulate(b, g[..., ca:])

    return _from_op(out_data, (a, b), bw)


# -- losses ------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis (plain numpy)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, label) -> Tensor:
    """Mean negative log softmax probability of the true class.

    ``logits`` is [K] with an integer label, or [N,K] with a length-N label
    vector (loss is averaged over the batch).
    """
    logits = _coerce(logits)
    if logits.data.ndim == 1:
        labels = np.asarray([label], dtype=np.int64)
        z2 = logits.data[None]
    elif logits.data.ndim == 2:
        labels = np.asarray(label, dtype=np.int64).reshape(-1)
        if labels.shape[0] != logits.data.shape[0]:
            raise ValueError(
                f"label count {labels.shape[0]} does not match batch size {logits.data.shape[0]}"
            )
        z2 = logits.data
    else:
        raise ValueError("softmax_cross_entropy expects 1-D or 2-D logits")
    k = z2.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range for {k} classes")

    zmax = z2.max(axis=1, keepdims=True)
    zs = z2 - zmax
    lse = np.log(np.exp(zs).sum(axis=1)) + zmax[:, 0]
    losses = lse - z2[np.arange(len(labels)), labels]
    out_data = np.asarray(losses.mean(), dtype=logits.data.dtype)
    probs = np.exp(zs - (lse - zmax[:, 0])[:, None])

    def bw(g):
        d = probs.copy()
        d[np.arange(len(labels)), labels] -= 1.0
        d *= float(g) / len(labels)
        _accumulate(logits, d if logits.data.ndim == 2 else d[0], own=True)

    return _from_op(out_data, (logits,), bw)


# -- interpolation (forward only) ---------------------------------------------


def bilinear_upsample(img, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2-D map with corner-aligned bilinear interpolation.

    Forward-only array math; returns float64.  A target dimension of 1
    samples the first row/column.
    """
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"bilinear_upsample expects a 2-D map, got {a.ndim}-D")
    h, w = a.shape
    if h < 1 or w < 1:
        raise ValueError("bilinear_upsample input must be non-empty")
    if out_h < 1 or out_w < 1:
        raise ValueError("bilinear_upsample target dimensions must be positive")

    ys = np.arange(out_h) * ((h - 1) / (out_h - 1)) if out_h > 1 else np.zeros(1)
    xs = np.arange(out_w) * ((w - 1) / (out_w - 1)) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]

    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x1] * fx
    bot = a[y1][:, x0] * (1 - fx) + a[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy
