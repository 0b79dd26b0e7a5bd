"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op builds its output from numpy arrays and, when gradients are
enabled and some input requires them, records a closure mapping the output
gradient to input gradients. ``Tensor.backward`` walks the tape once in
reverse topological order and then frees it.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ConfigurationError, DimensionError, NumericError, UsageError

DTYPE = np.float64

_grad_enabled = True
_mac_counters: list["MacCounter"] = []
_kink_logs: list[list[np.ndarray]] = []


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class MacCounter:
    """Accumulates multiply-accumulate counts of conv2d and matmul calls."""

    def __init__(self) -> None:
        self.total = 0

    def add(self, n: int) -> None:
        self.total += int(n)


@contextlib.contextmanager
def count_macs() -> Iterator[MacCounter]:
    counter = MacCounter()
    _mac_counters.append(counter)
    try:
        yield counter
    finally:
        _mac_counters.remove(counter)


def _record_macs(n: int) -> None:
    for c in _mac_counters:
        c.add(n)


@contextlib.contextmanager
def record_kinks() -> Iterator[list[np.ndarray]]:
    """Collect the sign mask of every relu-family input evaluated in the block.

    Two evaluations with equal mask lists ran on the same linear piece.
    """
    log: list[np.ndarray] = []
    _kink_logs.append(log)
    try:
        yield log
    finally:
        _kink_logs.remove(log)


def _record_mask(mask: np.ndarray) -> None:
    for log in _kink_logs:
        log.append(mask)


class Tensor:
    """N-dimensional float64 array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False) -> None:
        arr = np.array(data, dtype=DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- reverse pass -----------------------------------------------------
    def backward(self) -> None:
        """Propagate d(self)/d(leaf) into ``.grad`` of every reachable leaf.

        Gradients accumulate into existing ``.grad`` buffers. The tape is
        released afterwards, so a second call on the same graph is an error.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("backward() on a tensor that does not require grad")

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            in_grads = node._backward(g)
            for parent, pg in zip(node._parents, in_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        for node in order:
            node._parents = ()
            node._backward = None

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError("non-finite value in forward result")
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=DTYPE)
    out.grad = None
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not match") from exc


# -- elementwise ------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(a: Tensor, s: float) -> Tensor:
    return _make(a.data * s, (a,), lambda g: (g * s,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    _record_mask(mask)
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    mask = a.data > 0
    _record_mask(mask)
    factor = np.where(mask, 1.0, slope)
    return _make(a.data * factor, (a,), lambda g: (g * factor,))


def tsum(a: Tensor) -> Tensor:
    shape = a.shape
    return _make(np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return _make(np.array(a.data.mean()), (a,), lambda g: (np.full(shape, float(g) / n),))


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute difference; the subgradient of |0| is taken as 0."""
    target = _as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"l1_loss: shapes {pred.shape} and {target.shape} differ")
    diff = pred.data - target.data
    n = diff.size
    sign = np.sign(diff)
    return _make(np.array(np.abs(diff).mean()), (pred, target),
                 lambda g: (sign * (float(g) / n), -sign * (float(g) / n)))


# -- shape manipulation ----------------------------------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}") from exc
    src = a.shape
    return _make(out, (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"bad permutation {axes} for {a.ndim}-d tensor")
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat of an empty sequence")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[t.shape for t in tensors]} along {axis}") from exc
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return _make(out, tuple(tensors), backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("stack of an empty sequence")
    if len({t.shape for t in tensors}) != 1:
        raise DimensionError(f"stack: unequal shapes {[t.shape for t in tensors]}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(out, tuple(tensors), backward)


def _check_basic_index(index) -> None:
    items = index if isinstance(index, tuple) else (index,)
    for it in items:
        if not (isinstance(it, (int, np.integer, slice)) or it is Ellipsis or it is None):
            raise UsageError("only basic (int/slice) indexing is differentiable")


def getitem(a: Tensor, index) -> Tensor:
    _check_basic_index(index)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[index] = g
        return (full,)

    return _make(a.data[index], (a,), backward)


# -- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-d matrix product."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    _record_macs(ad.shape[0] * ad.shape[1] * bd.shape[1])
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def softmax_rows(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows expects a matrix, got {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _make(y, (x,), backward)


# -- sliding-window machinery ----------------------------------------------------

def _window_view(x: np.ndarray, kh: int, kw: int, sh: int, sw: int,
                 dil: int, oh: int, ow: int) -> np.ndarray:
    """Strided view of shape (B, C, kh, kw, oh, ow)."""
    s0, s1, s2, s3 = x.strides
    return as_strided(x, shape=(x.shape[0], x.shape[1], kh, kw, oh, ow),
                      strides=(s0, s1, s2 * dil, s3 * dil, s2 * sh, s3 * sw),
                      writeable=False)


def _im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int, dil: int,
            oh: int, ow: int) -> np.ndarray:
    """Columns as a (C*kh*kw, B*oh*ow) matrix; each tap copies contiguous runs."""
    win = _window_view(x, kh, kw, sh, sw, dil, oh, ow)
    b, c = x.shape[:2]
    return win.transpose(1, 2, 3, 0, 4, 5).reshape(c * kh * kw, b * oh * ow)


def _col2im(cols: np.ndarray, shape: tuple[int, int, int, int], kh: int, kw: int,
            sh: int, sw: int, dil: int, oh: int, ow: int) -> np.ndarray:
    """Adjoint of ``_im2col``: scatter-add columns back into an image.

    Accumulates in (C, B, H, W) memory order and returns a transposed view.
    """
    b, c, h, w = shape
    blocks = cols.reshape(c, kh, kw, b, oh, ow)
    out = np.zeros((c, b, h, w), dtype=DTYPE)
    for i in range(kh):
        r0 = i * dil
        for j in range(kw):
            c0 = j * dil
            out[:, :, r0:r0 + sh * (oh - 1) + 1:sh, c0:c0 + sw * (ow - 1) + 1:sw] += blocks[:, i, j]
    return out.transpose(1, 0, 2, 3)


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1,
           pad: int = 0, dilation: int = 1) -> Tensor:
    """Cross-correlation of ``x`` [B, Cin, H, W] with ``w`` [Cout, Cin, kh, kw]."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-d input and weight, got {x.shape}, {w.shape}")
    b, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise DimensionError(f"conv2d channel mismatch: input {cin}, weight {cin_w}")
    if bias is not None and bias.shape != (cout,):
        raise DimensionError(f"conv2d bias shape {bias.shape}, expected {(cout,)}")
    hp, wp = h + 2 * pad, wd + 2 * pad
    eff_h, eff_w = dilation * (kh - 1) + 1, dilation * (kw - 1) + 1
    if eff_h > hp or eff_w > wp:
        raise DimensionError(f"kernel extent {(eff_h, eff_w)} exceeds padded input {(hp, wp)}")
    oh = (hp - eff_h) // stride + 1
    ow = (wp - eff_w) // stride + 1
    pointwise = kh == 1 and kw == 1 and stride == 1

    if pad:
        # pad straight into channel-major memory so the column copy stays contiguous
        xp = np.zeros((cin, b, hp, wp), dtype=DTYPE)
        xp[:, :, pad:pad + h, pad:pad + wd] = x.data.transpose(1, 0, 2, 3)
        xp = xp.transpose(1, 0, 2, 3)
    else:
        xp = x.data
    if pointwise:
        cols = xp.transpose(1, 0, 2, 3).reshape(cin, -1)
    else:
        cols = _im2col(xp, kh, kw, stride, stride, dilation, oh, ow)
    wmat = w.data.reshape(cout, -1)
    _record_macs(cols.shape[0] * cols.shape[1] * cout)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(cout, b, oh, ow).transpose(1, 0, 2, 3)

    def backward(g):
        go = g.transpose(1, 0, 2, 3).reshape(cout, -1)
        gw = (go @ cols.T).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = wmat.T @ go
            if pointwise:
                gxp = gcols.reshape(cin, b, oh, ow).transpose(1, 0, 2, 3)
            else:
                gxp = _col2im(gcols, (b, cin, hp, wp), kh, kw, stride, stride, dilation, oh, ow)
            gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
        if bias is None:
            return gx, gw
        return gx, gw, go.sum(axis=1)

    parents = (x, w) if bias is None else (x, w, bias)
    return _make(out, parents, backward)


def _tile_counts(h: int, w: int, patch: tuple[int, int], stride: tuple[int, int]) -> tuple[int, int]:
    ph, pw = patch
    sh, sw = stride
    if ph < 1 or pw < 1 or sh < 1 or sw < 1:
        raise ConfigurationError(f"patch {patch} and stride {stride} must be positive")
    if ph > h or pw > w:
        raise ConfigurationError(f"patch {patch} larger than map {(h, w)}")
    if (h - ph) % sh or (w - pw) % sw:
        raise ConfigurationError(
            f"patch {patch} with stride {stride} does not tile a {h}x{w} map")
    return (h - ph) // sh + 1, (w - pw) // sw + 1


def unfold(x: Tensor, patch: tuple[int, int], stride: tuple[int, int]) -> Tensor:
    """Extract patches of ``x`` [B, C, H, W] as rows of an [n, C*Hp*Wp] matrix.

    Rows are ordered (batch, patch-row, patch-col); columns (channel, dy, dx).
    """
    if x.ndim != 4:
        raise DimensionError(f"unfold expects [B, C, H, W], got {x.shape}")
    b, c, h, w = x.shape
    nh, nw = _tile_counts(h, w, patch, stride)
    ph, pw = patch
    sh, sw = stride
    cols = _im2col(x.data, ph, pw, sh, sw, 1, nh, nw).T
    shape = x.shape
    return _make(cols, (x,),
                 lambda g: (_col2im(g.T, shape, ph, pw, sh, sw, 1, nh, nw),))


def overlap_counts(shape: tuple[int, int, int, int], patch, stride) -> np.ndarray:
    """Number of patches covering each pixel, as a [1, 1, H, W] array."""
    _, _, h, w = shape
    nh, nw = _tile_counts(h, w, patch, stride)
    ones = np.ones((patch[0] * patch[1], nh * nw), dtype=DTYPE)
    return _col2im(ones, (1, 1, h, w), patch[0], patch[1], stride[0], stride[1], 1, nh, nw)


def fold(tokens: Tensor, out_shape: Sequence[int], patch: tuple[int, int],
         stride: tuple[int, int]) -> Tensor:
    """Inverse of ``unfold``: overlapping contributions are averaged."""
    out_shape = tuple(int(s) for s in out_shape)
    if len(out_shape) != 4:
        raise DimensionError(f"fold target must be [B, C, H, W], got {out_shape}")
    b, c, h, w = out_shape
    nh, nw = _tile_counts(h, w, patch, stride)
    ph, pw = patch
    sh, sw = stride
    expect = (b * nh * nw, c * ph * pw)
    if tokens.shape != expect:
        raise DimensionError(f"fold: tokens {tokens.shape} do not match geometry {expect}")
    inv = 1.0 / overlap_counts(out_shape, patch, stride)
    out = _col2im(tokens.data.T, out_shape, ph, pw, sh, sw, 1, nh, nw) * inv

    def backward(g):
        return (_im2col(g * inv, ph, pw, sh, sw, 1, nh, nw).T,)

    return _make(out, (tokens,), backward)


def pixel_shuffle(x: Tensor, factor: int) -> Tensor:
    """[B, C*r*r, H, W] -> [B, C, r*H, r*W] with out[c, r*h+i, r*w+j] = in[c*r*r+i*r+j, h, w]."""
    if x.ndim != 4:
        raise DimensionError(f"pixel_shuffle expects [B, C, H, W], got {x.shape}")
    b, cr, h, w = x.shape
    r = int(factor)
    if r < 1 or cr % (r * r):
        raise DimensionError(f"{cr} channels not divisible by {r}^2")
    c = cr // (r * r)
    out = x.data.reshape(b, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(b, c, h * r, w * r)

    def backward(g):
        return (g.reshape(b, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(b, cr, h, w),)

    return _make(out, (x,), backward)
