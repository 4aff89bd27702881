"""Dense batch-channel-height-width tensors with reverse-mode autodiff.

Data lives in contiguous numpy buffers, float32 by default and float64 for
finite-difference gradient checking. Differentiable kernels record their
backward closures on an explicit :class:`Tape`; ``backward(loss)`` replays
the tape in exact reverse execution order and accumulates gradients into
every ``requires_grad`` leaf. Running an op with no tape active is plain
inference: nothing is recorded and outputs do not require grad.

The finite-difference oracle (``numerical_gradient`` / ``check_gradient``)
lives here too, next to the kernels it verifies.
"""

import numpy as np

from .errors import ContractError

DEFAULT_DTYPE = np.float32

__all__ = [
    "Tensor", "Tape", "backward",
    "tensor", "zeros", "ones", "random_normal",
    "add", "sub", "mul", "div", "absolute", "sigmoid", "relu",
    "tensor_sum", "tensor_mean", "abs_sum",
    "reshape", "permute", "concat_channels", "slice_channels",
    "split_channels", "reflect_pad2d", "crop2d",
    "softmax_lastdim", "matmul", "batched_row_matmul",
    "conv2d", "conv_transpose2d", "fft2", "resize_bilinear",
    "global_avg_pool",
    "numerical_gradient", "check_gradient", "check_gradient_sampled",
]


class Tape:
    """Ordered record of executed differentiable ops (a Wengert list).

    Use as a context manager around a forward pass that will be
    differentiated. Ops append ``(output, backward_fn)`` records while a
    tape is active; ``backward`` walks the records in reverse and must be
    called inside the block. Leaving the block releases the records and
    the outputs' scratch grads: backward closures capture their operands
    (sometimes their own output, a reference cycle), so an unreleased
    graph would sit in memory until a full garbage-collection pass.
    Leaf gradients are untouched by the release.
    """

    _stack = []

    def __init__(self):
        self._records = []

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        for out, _ in self._records:
            out._tape = None
            out.grad = None
        self._records.clear()
        return False

    @staticmethod
    def current():
        return Tape._stack[-1] if Tape._stack else None

    def __len__(self):
        return len(self._records)


class Tensor:
    """A dense n-d array plus optional gradient buffer.

    Tensors are immutable after creation except for gradient accumulation;
    image-like data uses (batch, channels, height, width) layout with the
    width axis innermost.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape", "_is_leaf")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None
        self._is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self):
        """A leaf view of the same buffer, cut off from the tape."""
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.requires_grad = False
        t.grad = None
        t._tape = None
        t._is_leaf = True
        return t

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # operator sugar; scalars are allowed on either side
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return tensor_mean(self)

    def abs(self):
        return absolute(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)


def tensor(data, requires_grad=False, dtype=None):
    """Wrap array-like data as a leaf Tensor."""
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, requires_grad=False, dtype=DEFAULT_DTYPE):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, requires_grad=False, dtype=DEFAULT_DTYPE):
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def random_normal(shape, rng, requires_grad=False, dtype=DEFAULT_DTYPE):
    """Standard-normal tensor from an explicit seed or Generator."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.PCG64(int(rng)))
    return Tensor(rng.standard_normal(shape).astype(dtype), requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# op plumbing
# ---------------------------------------------------------------------------

def _as_tensor_pair(a, b):
    """Coerce one scalar operand; both Tensors must share dtype."""
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.data.dtype != b.data.dtype:
            raise ContractError(
                f"mixed dtypes {a.data.dtype.name} vs {b.data.dtype.name}")
        return a, b, True, True
    if isinstance(a, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype)), True, False
    if isinstance(b, Tensor):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b, False, True
    raise ContractError("at least one operand must be a Tensor")


def _make_output(data, inputs):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._is_leaf = False
    tape = Tape.current()
    out.requires_grad = tape is not None and any(t.requires_grad for t in inputs)
    out._tape = tape if out.requires_grad else None
    return out


def _record(out, backward_fn):
    if out.requires_grad:
        out._tape._records.append((out, backward_fn))


def _unbroadcast(g, shape):
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def backward(loss):
    """Populate grads of every requires_grad leaf reachable from `loss`.

    `loss` must be a scalar produced through taped operations. Repeated
    calls without zeroing leaf grads accumulate.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        raise ContractError("loss was not recorded on an active Tape")
    records = loss._tape._records
    # non-leaf grads are scratch space; clear them so repeated backward
    # calls accumulate only into leaves
    for out, _ in records:
        out.grad = None
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(records):
        if out.grad is None:
            continue
        fn(out.grad)


# ---------------------------------------------------------------------------
# elementwise ops (broadcasting numpy semantics)
# ---------------------------------------------------------------------------

def add(a, b):
    a, b, ga, gb = _as_tensor_pair(a, b)
    out = _make_output(a.data + b.data, (a, b) if ga and gb else ((a,) if ga else (b,)))

    def _backward(g):
        if ga and a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if gb and b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    _record(out, _backward)
    return out


def sub(a, b):
    a, b, ga, gb = _as_tensor_pair(a, b)
    out = _make_output(a.data - b.data, (a, b) if ga and gb else ((a,) if ga else (b,)))

    def _backward(g):
        if ga and a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if gb and b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    _record(out, _backward)
    return out


def mul(a, b):
    """Elementwise (Hadamard) product with broadcasting."""
    a, b, ga, gb = _as_tensor_pair(a, b)
    out = _make_output(a.data * b.data, (a, b) if ga and gb else ((a,) if ga else (b,)))

    def _backward(g):
        if ga and a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if gb and b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    _record(out, _backward)
    return out


def div(a, b):
    a, b, ga, gb = _as_tensor_pair(a, b)
    out = _make_output(a.data / b.data, (a, b) if ga and gb else ((a,) if ga else (b,)))

    def _backward(g):
        if ga and a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        if gb and b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    _record(out, _backward)
    return out


def absolute(x):
    """|x|; subgradient 0 at 0."""
    out = _make_output(np.abs(x.data), (x,))

    def _backward(g):
        if x.requires_grad:
            x._accumulate(g * np.sign(x.data))

    _record(out, _backward)
    return out


def sigmoid(x):
    # two-branch form keeps exp arguments non-positive, so no overflow
    z = x.data
    e = np.exp(-np.abs(z))
    y_data = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = _make_output(y_data.astype(z.dtype, copy=False), (x,))
    y = out.data

    def _backward(g):
        if x.requires_grad:
            x._accumulate(g * y * (1.0 - y))

    _record(out, _backward)
    return out


def relu(x):
    out = _make_output(np.maximum(x.data, 0), (x,))

    def _backward(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0))

    _record(out, _backward)
    return out


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def tensor_sum(x):
    """Sum of all elements, as a 0-d tensor."""
    out = _make_output(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,))

    def _backward(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, g))

    _record(out, _backward)
    return out


def tensor_mean(x):
    n = x.data.size
    out = _make_output(np.asarray(x.data.mean(), dtype=x.data.dtype), (x,))

    def _backward(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, g / n))

    _record(out, _backward)
    return out


def abs_sum(x):
    """Sum of absolute values (the L1 building block)."""
    return tensor_sum(absolute(x))


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(x, shape):
    out = _make_output(np.ascontiguousarray(x.data.reshape(shape)), (x,))

    def _backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    _record(out, _backward)
    return out


def permute(x, axes):
    axes = tuple(axes)
    inv = np.argsort(axes)
    out = _make_output(np.ascontiguousarray(x.data.transpose(axes)), (x,))

    def _backward(g):
        if x.requires_grad:
            x._accumulate(g.transpose(inv))

    _record(out, _backward)
    return out


def concat_channels(tensors):
    """Concatenate along the channel axis (axis 1)."""
    tensors = list(tensors)
    base = tensors[0]
    for t in tensors[1:]:
        if t.data.dtype != base.data.dtype:
            raise ContractError("concat_channels: mixed dtypes")
        if t.data.shape[0] != base.data.shape[0] or t.data.shape[2:] != base.data.shape[2:]:
            raise ContractError(
                f"concat_channels: incompatible shapes {base.data.shape} vs {t.data.shape}")
    out = _make_output(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors))
    edges = np.cumsum([0] + [t.data.shape[1] for t in tensors])

    def _backward(g):
        for t, lo, hi in zip(tensors, edges[:-1], edges[1:]):
            if t.requires_grad:
                t._accumulate(g[:, lo:hi])

    _record(out, _backward)
    return out


def slice_channels(x, start, stop):
    """x[:, start:stop] along the channel axis."""
    if not (0 <= start < stop <= x.data.shape[1]):
        raise ContractError(
            f"slice_channels: [{start}:{stop}] out of range for C={x.data.shape[1]}")
    out = _make_output(np.ascontiguousarray(x.data[:, start:stop]), (x,))

    def _backward(g):
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            dx[:, start:stop] = g
            x._accumulate(dx)

    _record(out, _backward)
    return out


def split_channels(x, parts=2):
    """Split the channel axis into `parts` equal slices."""
    c = x.data.shape[1]
    if c % parts != 0:
        raise ContractError(f"split_channels: C={c} not divisible by {parts}")
    w = c // parts
    return tuple(slice_channels(x, i * w, (i + 1) * w) for i in range(parts))


def reflect_pad2d(x, pads):
    """Reflect-pad the two spatial axes; pads = (top, bottom, left, right)."""
    t, b, l, r = pads
    h, w = x.data.shape[-2:]
    if t >= h or b >= h or l >= w or r >= w:
        raise ContractError(f"reflect_pad2d: pads {pads} too large for {h}x{w}")
    # index maps let backward scatter-add exactly where forward gathered
    ih = np.concatenate([np.arange(t, 0, -1), np.arange(h), np.arange(h - 2, h - 2 - b, -1)])
    iw = np.concatenate([np.arange(l, 0, -1), np.arange(w), np.arange(w - 2, w - 2 - r, -1)])
    out = _make_output(np.ascontiguousarray(x.data[..., ih[:, None], iw[None, :]]), (x,))

    def _backward(g):
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            np.add.at(dx, (..., ih[:, None], iw[None, :]), g)
            x._accumulate(dx)

    _record(out, _backward)
    return out


def crop2d(x, top, left, height, width):
    """Spatial crop x[..., top:top+height, left:left+width]."""
    h, w = x.data.shape[-2:]
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise ContractError(f"crop2d: window {(top, left, height, width)} outside {h}x{w}")
    out = _make_output(
        np.ascontiguousarray(x.data[..., top:top + height, left:left + width]), (x,))

    def _backward(g):
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            dx[..., top:top + height, left:left + width] = g
            x._accumulate(dx)

    _record(out, _backward)
    return out


# ---------------------------------------------------------------------------
# softmax / matmul
# ---------------------------------------------------------------------------

def softmax_lastdim(x):
    """Softmax over the last axis, stable under additive shift."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _make_output(y, (x,))

    def _backward(g):
        if x.requires_grad:
            x._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    _record(out, _backward)
    return out


def matmul(a, b):
    """Batched matrix product over the last two axes; leading axes must match."""
    if a.data.dtype != b.data.dtype:
        raise ContractError("matmul: mixed dtypes")
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ContractError("matmul: operands must be at least 2-d")
    if a.data.ndim != b.data.ndim or a.data.shape[:-2] != b.data.shape[:-2]:
        raise ContractError(
            f"matmul: leading extents differ: {a.data.shape} vs {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ContractError(
            f"matmul: inner extents differ: {a.data.shape} vs {b.data.shape}")
    out = _make_output(np.matmul(a.data, b.data), (a, b))

    def _backward(g):
        if a.requires_grad:
            a._accumulate(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            b._accumulate(np.matmul(np.swapaxes(a.data, -1, -2), g))

    _record(out, _backward)
    return out


def batched_row_matmul(a, b):
    """Per-row products: (N,H,M,K) x (N,H,K,P) -> (N,H,M,P).

    Each image row (epipolar line) gets its own independent matrix product:
    out[n,h,i,j] = sum_k a[n,h,i,k] * b[n,h,k,j]. Computed with a fixed
    per-element ascending-k accumulation (einsum), so exchanging the two
    views of an attention computation transposes the scores bitwise.
    """
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ContractError("batched_row_matmul expects rank-4 operands")
    if a.data.dtype != b.data.dtype:
        raise ContractError("batched_row_matmul: mixed dtypes")
    if a.data.shape[:2] != b.data.shape[:2] or a.data.shape[3] != b.data.shape[2]:
        raise ContractError(
            f"batched_row_matmul: extents mismatch: {a.data.shape} vs {b.data.shape}")
    out = _make_output(np.einsum("nhik,nhkj->nhij", a.data, b.data), (a, b))

    def _backward(g):
        if a.requires_grad:
            a._accumulate(np.einsum("nhij,nhkj->nhik", g, b.data))
        if b.requires_grad:
            b._accumulate(np.einsum("nhik,nhij->nhkj", a.data, g))

    _record(out, _backward)
    return out


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _im2col(x, kh, kw, stride, pad):
    """(N,C,H,W) -> (N*OH*OW, C*kh*kw) patch matrix, plus (OH, OW)."""
    n, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    col = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        i_max = i + stride * oh
        for j in range(kw):
            j_max = j + stride * ow
            col[:, :, i, j] = x[:, :, i:i_max:stride, j:j_max:stride]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, c * kh * kw), (oh, ow)


def _col2im(col, x_shape, kh, kw, stride, pad):
    """Scatter-add the inverse of _im2col back to an (N,C,H,W) buffer."""
    n, c, h, w = x_shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    col = col.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=col.dtype)
    for i in range(kh):
        i_max = i + stride * oh
        for j in range(kw):
            j_max = j + stride * ow
            img[:, :, i:i_max:stride, j:j_max:stride] += col[:, :, i, j]
    if pad > 0:
        img = img[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(img)


def _conv_fwd(x, w, stride, pad):
    cout = w.shape[0]
    col, (oh, ow) = _im2col(x, w.shape[2], w.shape[3], stride, pad)
    y = col @ w.reshape(cout, -1).T
    return np.ascontiguousarray(
        y.reshape(x.shape[0], oh, ow, cout).transpose(0, 3, 1, 2))


def _conv_bwd(x, w, g, stride, pad, need_dx, need_dw):
    cout = w.shape[0]
    g_r = g.transpose(0, 2, 3, 1).reshape(-1, cout)
    dx = dw = None
    if need_dw:
        # recompute the patch matrix instead of caching it from forward:
        # im2col is cheap next to the GEMMs and caching would hold
        # hundreds of MB across a deep forward pass
        col, _ = _im2col(x, w.shape[2], w.shape[3], stride, pad)
        dw = (g_r.T @ col).reshape(w.shape)
    if need_dx:
        dcol = g_r @ w.reshape(cout, -1)
        dx = _col2im(dcol, x.shape, w.shape[2], w.shape[3], stride, pad)
    return dx, dw


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-d cross-correlation: (N,Cin,H,W) * (Cout,Cin,kh,kw) -> (N,Cout,H',W').

    H' = (H + 2*padding - kh)//stride + 1, likewise W'. Differentiable in
    input, weight and bias.
    """
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ContractError("conv2d expects rank-4 input and weight")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ContractError(
            f"conv2d: input channels {x.data.shape} do not match weight {weight.data.shape}")
    if x.data.dtype != weight.data.dtype:
        raise ContractError("conv2d: mixed dtypes")
    kh, kw = weight.data.shape[2:]
    if padding < 0 or x.data.shape[2] + 2 * padding < kh or x.data.shape[3] + 2 * padding < kw:
        raise ContractError(
            f"conv2d: kernel {kh}x{kw} does not fit input {x.data.shape} with padding {padding}")

    y = _conv_fwd(x.data, weight.data, stride, padding)
    if bias is not None:
        if bias.data.shape != (weight.data.shape[0],):
            raise ContractError(
                f"conv2d: bias shape {bias.data.shape} vs Cout {weight.data.shape[0]}")
        y += bias.data[None, :, None, None]
    inputs = (x, weight) if bias is None else (x, weight, bias)
    out = _make_output(y, inputs)

    def _backward(g):
        dx, dw = _conv_bwd(x.data, weight.data, g, stride, padding,
                           x.requires_grad, weight.requires_grad)
        if x.requires_grad:
            x._accumulate(dx)
        if weight.requires_grad:
            weight._accumulate(dw)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    _record(out, _backward)
    return out


def conv_transpose2d(x, weight, bias=None, stride=2, padding=1):
    """Transposed conv doubling spatial extents: weight is (Cin,Cout,4,4).

    Only the 4x4 / stride-2 / padding-1 combination is supported; anything
    else would not realize exact doubling.
    """
    if weight.data.ndim != 4 or weight.data.shape[2:] != (4, 4) or stride != 2 or padding != 1:
        raise ContractError(
            "conv_transpose2d supports only kernel 4x4, stride 2, padding 1 "
            f"(got kernel {weight.data.shape[2:]}, stride {stride}, padding {padding})")
    if x.data.shape[1] != weight.data.shape[0]:
        raise ContractError(
            f"conv_transpose2d: input channels {x.data.shape} do not match weight {weight.data.shape}")
    if x.data.dtype != weight.data.dtype:
        raise ContractError("conv_transpose2d: mixed dtypes")
    kh = 4
    pad_eff = kh - 1 - padding

    def _stuff(arr):
        n, c, h, w = arr.shape
        up = np.zeros((n, c, (h - 1) * stride + 1, (w - 1) * stride + 1), dtype=arr.dtype)
        up[:, :, ::stride, ::stride] = arr
        return up

    # transposed conv == zero-stuffed conv with the flipped, axis-swapped kernel
    w_conv = np.ascontiguousarray(weight.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    x_up = _stuff(x.data)
    y = _conv_fwd(x_up, w_conv, 1, pad_eff)
    if bias is not None:
        if bias.data.shape != (weight.data.shape[1],):
            raise ContractError(
                f"conv_transpose2d: bias shape {bias.data.shape} vs Cout {weight.data.shape[1]}")
        y += bias.data[None, :, None, None]
    inputs = (x, weight) if bias is None else (x, weight, bias)
    out = _make_output(y, inputs)

    def _backward(g):
        dx_up, dw_conv = _conv_bwd(x_up, w_conv, g, 1, pad_eff,
                                   x.requires_grad, weight.requires_grad)
        if x.requires_grad:
            x._accumulate(np.ascontiguousarray(dx_up[:, :, ::stride, ::stride]))
        if weight.requires_grad:
            weight._accumulate(
                np.ascontiguousarray(dw_conv[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    _record(out, _backward)
    return out


# ---------------------------------------------------------------------------
# FFT
# ---------------------------------------------------------------------------

def fft2(x):
    """Unnormalized forward 2-d DFT per channel; returns (real, imag).

    Arbitrary H, W work (mixed-radix with Bluestein fallback underneath).
    Satisfies Parseval: sum(|X|^2) == H*W * sum(|x|^2).
    """
    spec = np.fft.fft2(x.data, axes=(-2, -1))
    re = _make_output(np.ascontiguousarray(spec.real.astype(x.data.dtype)), (x,))
    im = _make_output(np.ascontiguousarray(spec.imag.astype(x.data.dtype)), (x,))
    hw = x.data.shape[-2] * x.data.shape[-1]

    # the transform is linear, so real/imag contributions backpropagate
    # independently: d/dx Re-path uses ifft of g, Im-path ifft of i*g
    def _backward_re(g):
        if x.requires_grad:
            x._accumulate((np.fft.ifft2(g, axes=(-2, -1)).real * hw).astype(x.data.dtype))

    def _backward_im(g):
        if x.requires_grad:
            x._accumulate((np.fft.ifft2(1j * g, axes=(-2, -1)).real * hw).astype(x.data.dtype))

    _record(re, _backward_re)
    _record(im, _backward_im)
    return re, im


# ---------------------------------------------------------------------------
# bilinear resizing
# ---------------------------------------------------------------------------

_ALLOWED_SCALES = (0.25, 0.5, 2.0, 4.0)


def _interp_matrix(n_in, n_out, dtype):
    """Dense (n_out, n_in) align-corners-false bilinear sampling matrix."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        i0 = int(np.floor(src))
        frac = src - i0
        m[i, min(max(i0, 0), n_in - 1)] += 1.0 - frac
        m[i, min(max(i0 + 1, 0), n_in - 1)] += frac
    return m


def resize_bilinear(x, scale):
    """Bilinear resample of the spatial axes by scale in {1/4, 1/2, 2, 4}."""
    if not any(abs(scale - s) < 1e-12 for s in _ALLOWED_SCALES):
        raise ContractError(f"resize_bilinear: unsupported scale {scale}")
    h, w = x.data.shape[-2:]
    ho, wo = h * scale, w * scale
    if abs(ho - round(ho)) > 1e-9 or abs(wo - round(wo)) > 1e-9 or round(ho) < 1 or round(wo) < 1:
        raise ContractError(
            f"resize_bilinear: scale {scale} of {h}x{w} gives non-integral or empty extents")
    ho, wo = int(round(ho)), int(round(wo))
    mh = _interp_matrix(h, ho, x.data.dtype)
    mw = _interp_matrix(w, wo, x.data.dtype)
    out = _make_output(
        np.ascontiguousarray(np.matmul(np.matmul(mh, x.data), mw.T)), (x,))

    def _backward(g):
        if x.requires_grad:
            x._accumulate(np.matmul(np.matmul(mh.T, g), mw))

    _record(out, _backward)
    return out


def global_avg_pool(x):
    """(N,C,H,W) -> (N,C,1,1) spatial mean."""
    if x.data.ndim != 4:
        raise ContractError("global_avg_pool expects rank-4 input")
    n = x.data.shape[2] * x.data.shape[3]
    out = _make_output(x.data.mean(axis=(2, 3), keepdims=True), (x,))

    def _backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g / n, x.data.shape))

    _record(out, _backward)
    return out


# ---------------------------------------------------------------------------
# finite-difference verification oracle
# ---------------------------------------------------------------------------

def numerical_gradient(f, x, eps=1e-5):
    """Central-difference d f / d x for an in-place-perturbed buffer x.

    `f` is a zero-argument callable returning a float and reading `x`;
    meaningful only for float64 buffers.
    """
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def check_gradient(build_loss, leaves, eps=1e-5, rtol=1e-4, atol=1e-7):
    """Compare taped gradients of `build_loss()` against finite differences.

    `leaves` are requires_grad float64 tensors the loss closure reads.
    Returns the max elementwise violation of |a - n| <= atol + rtol*max(|a|,|n|)
    (negative when everything passes).
    """
    for t in leaves:
        if t.data.dtype != np.float64:
            raise ContractError("check_gradient requires float64 leaves")
        t.zero_grad()
    with Tape():
        loss = build_loss()
        backward(loss)
    analytic = [np.array(t.grad, copy=True) for t in leaves]

    def run():
        with Tape():
            return build_loss().item()

    worst = -np.inf
    for t, a in zip(leaves, analytic):
        n = numerical_gradient(run, t.data, eps=eps)
        viol = np.abs(a - n) - (atol + rtol * np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float(viol.max()))
    return worst


def check_gradient_sampled(build_loss, leaves, n_samples, rng, eps=1e-5,
                           rtol=1e-3, atol=1e-7):
    """check_gradient on a random subset of coordinates.

    Dense finite differencing is quadratic in parameter count; for big
    graphs this draws `n_samples` (tensor, element) coordinates uniformly
    across all leaves and differences only those. Same return convention
    as check_gradient.
    """
    for t in leaves:
        if t.data.dtype != np.float64:
            raise ContractError("check_gradient_sampled requires float64 leaves")
        t.zero_grad()
    with Tape():
        loss = build_loss()
        backward(loss)
    sizes = np.array([t.size for t in leaves])
    picks = rng.choice(int(sizes.sum()), size=min(int(n_samples), int(sizes.sum())),
                       replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def run():
        with Tape():
            return build_loss().item()

    worst = -np.inf
    for p in picks:
        t = leaves[int(np.searchsorted(offsets, p, side="right")) - 1]
        idx = int(p - offsets[int(np.searchsorted(offsets, p, side="right")) - 1])
        flat = t.data.reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + eps
        fp = run()
        flat[idx] = orig - eps
        fm = run()
        flat[idx] = orig
        numeric = (fp - fm) / (2.0 * eps)
        # a leaf untouched by the loss has grad None, meaning zero everywhere
        analytic = 0.0 if t.grad is None else float(t.grad.reshape(-1)[idx])
        viol = abs(analytic - numeric) - (atol + rtol * max(abs(analytic), abs(numeric)))
        worst = max(worst, viol)
    return worst
