"""Dense float64 tensor with reverse-mode differentiation.

A thin tape: every op wires a backward closure onto its output; calling
``backward()`` on a scalar walks the graph in reverse topological order.
Only the ops this project needs are implemented, each with an analytic
backward rule that the finite-difference suite checks.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- graph bookkeeping -------------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @staticmethod
    def _accum(p: "Tensor", g: np.ndarray):
        if p.requires_grad:
            p.grad = g if p.grad is None else p.grad + g

    def backward(self, seed=None):
        if seed is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without seed needs a scalar, got {self.data.shape}")
            seed = np.ones_like(self.data)
        topo, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(seed, dtype=np.float64).reshape(self.data.shape)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- basics -------------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    @staticmethod
    def as_tensor(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        a, b = self, Tensor.as_tensor(other)
        out_data = a.data + b.data

        def bw(g):
            Tensor._accum(a, _unbroadcast(g, a.data.shape))
            Tensor._accum(b, _unbroadcast(g, b.data.shape))

        return Tensor._make(out_data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        a = self
        return Tensor._make(-a.data, (a,), lambda g: Tensor._accum(a, -g))

    def __sub__(self, other):
        return self + (-Tensor.as_tensor(other))

    def __rsub__(self, other):
        return Tensor.as_tensor(other) + (-self)

    def __mul__(self, other):
        a, b = self, Tensor.as_tensor(other)
        out_data = a.data * b.data

        def bw(g):
            Tensor._accum(a, _unbroadcast(g * b.data, a.data.shape))
            Tensor._accum(b, _unbroadcast(g * a.data, b.data.shape))

        return Tensor._make(out_data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, Tensor.as_tensor(other)
        out_data = a.data / b.data

        def bw(g):
            Tensor._accum(a, _unbroadcast(g / b.data, a.data.shape))
            Tensor._accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._make(out_data, (a, b), bw)

    def __rtruediv__(self, other):
        return Tensor.as_tensor(other) / self

    def __pow__(self, p):
        if not np.isscalar(p):
            raise ShapeError("only scalar exponents are supported")
        a = self
        out_data = a.data**p

        def bw(g):
            Tensor._accum(a, g * p * a.data ** (p - 1))

        return Tensor._make(out_data, (a,), bw)

    def __matmul__(self, other):
        a, b = self, Tensor.as_tensor(other)
        out_data = a.data @ b.data

        def bw(g):
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            Tensor._accum(a, _unbroadcast(ga, a.data.shape))
            Tensor._accum(b, _unbroadcast(gb, b.data.shape))

        return Tensor._make(out_data, (a, b), bw)

    # -- elementwise functions -------------------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(a.data)
        return Tensor._make(out_data, (a,), lambda g: Tensor._accum(a, g * out_data))

    def log(self):
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: Tensor._accum(a, g / a.data))

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)
        return Tensor._make(out_data, (a,), lambda g: Tensor._accum(a, g * 0.5 / out_data))

    def abs(self):
        a = self
        return Tensor._make(np.abs(a.data), (a,), lambda g: Tensor._accum(a, g * np.sign(a.data)))

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)
        return Tensor._make(out_data, (a,), lambda g: Tensor._accum(a, g * (1.0 - out_data**2)))

    def sigmoid(self):
        a = self
        out_data = 0.5 * (1.0 + np.tanh(0.5 * a.data))
        return Tensor._make(out_data, (a,), lambda g: Tensor._accum(a, g * out_data * (1.0 - out_data)))

    def relu(self):
        # slope 1/2 exactly at the kink: matches what a central difference
        # measures when a preactivation sits exactly on 0 (zero-init biases
        # behind fully-rectified receptive fields make that case systematic)
        a = self
        mask = (a.data > 0) + 0.5 * (a.data == 0)
        return Tensor._make(a.data * (a.data > 0), (a,), lambda g: Tensor._accum(a, g * mask))

    def gelu(self):
        # tanh approximation, smooth everywhere
        a = self
        c = np.sqrt(2.0 / np.pi)
        x = a.data
        u = c * (x + 0.044715 * x**3)
        t = np.tanh(u)
        out_data = 0.5 * x * (1.0 + t)

        def bw(g):
            du = c * (1.0 + 3 * 0.044715 * x**2)
            Tensor._accum(a, g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du))

        return Tensor._make(out_data, (a,), bw)

    def softplus(self):
        a = self
        out_data = np.logaddexp(0.0, a.data)

        def bw(g):
            Tensor._accum(a, g * 0.5 * (1.0 + np.tanh(0.5 * a.data)))

        return Tensor._make(out_data, (a,), bw)

    # -- reductions --------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            gg = g
            if not keepdims and axis is not None:
                gg = np.expand_dims(g, axis)
            Tensor._accum(a, np.broadcast_to(gg, a.data.shape).copy())

        return Tensor._make(out_data, (a,), bw)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[i] for i in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def max(self, axis=None, keepdims=False):
        a = self
        out_data = a.data.max(axis=axis, keepdims=keepdims)

        def bw(g):
            gg, oo = g, out_data
            if not keepdims and axis is not None:
                gg = np.expand_dims(g, axis)
                oo = np.expand_dims(out_data, axis)
            mask = a.data == oo
            count = mask.sum(axis=axis, keepdims=True) if axis is not None else mask.sum()
            Tensor._accum(a, mask * (gg / count))

        return Tensor._make(out_data, (a,), bw)

    # -- shape ops ---------------------------------------------------------------

    def reshape(self, *shape):
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = a.data.reshape(shape)
        return Tensor._make(out_data, (a,), lambda g: Tensor._accum(a, g.reshape(a.data.shape)))

    def transpose(self, *axes):
        a = self
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        out_data = a.data.transpose(axes)
        return Tensor._make(out_data, (a,), lambda g: Tensor._accum(a, g.transpose(inv)))

    def broadcast_to(self, shape):
        a = self
        out_data = np.broadcast_to(a.data, shape).copy()
        return Tensor._make(out_data, (a,), lambda g: Tensor._accum(a, _unbroadcast(g, a.data.shape)))

    def __getitem__(self, idx):
        a = self
        out_data = a.data[idx]
        # boolean masks and basic slices never alias, so += is safe for them
        no_dups = not isinstance(idx, np.ndarray) and not (
            isinstance(idx, tuple) and any(isinstance(i, np.ndarray) for i in idx)
        )
        if isinstance(idx, np.ndarray) and idx.dtype == bool:
            no_dups = True

        def bw(g):
            if not a.requires_grad:
                return
            dx = np.zeros_like(a.data)
            if no_dups:
                dx[idx] += g
            else:
                np.add.at(dx, idx, g)
            Tensor._accum(a, dx)

        return Tensor._make(np.ascontiguousarray(out_data), (a,), bw)


def concat(tensors, axis=0):
    tensors = [Tensor.as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            Tensor._accum(t, g[tuple(sl)])

    return Tensor._make(out_data, tensors, bw)


def softmax(x: Tensor, axis=-1) -> Tensor:
    a = Tensor.as_tensor(x)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        Tensor._accum(a, out_data * (g - dot))

    return Tensor._make(out_data, (a,), bw)


def stack(tensors, axis=0):
    expanded = []
    for t in tensors:
        t = Tensor.as_tensor(t)
        expanded.append(t.reshape(t.shape[:axis] + (1,) + t.shape[axis:]))
    return concat(expanded, axis=axis)


# -- convolution ------------------------------------------------------------------


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation: x (B,C,H,W) * w (F,C,kh,kw) -> (B,F,Ho,Wo)."""
    x, w = Tensor.as_tensor(x), Tensor.as_tensor(w)
    B, C, H, W = x.data.shape
    F, Cw, kh, kw = w.data.shape
    if Cw != C:
        raise ShapeError(f"conv2d channel mismatch: input {x.data.shape} vs weight {w.data.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = _windows(xp, kh, kw, stride)
    out_data = np.einsum("bchwij,fcij->bfhw", win, w.data, optimize=True)
    if b is not None:
        out_data = out_data + b.data[None, :, None, None]
    Ho, Wo = out_data.shape[2:]
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        if w.requires_grad:
            Tensor._accum(w, np.einsum("bchwij,bfhw->fcij", win, g, optimize=True))
        if b is not None and b.requires_grad:
            Tensor._accum(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += np.einsum(
                        "bfhw,fc->bchw", g, w.data[:, :, i, j], optimize=True
                    )
            if padding:
                dxp = dxp[:, :, padding : padding + H, padding : padding + W]
            Tensor._accum(x, dxp)

    return Tensor._make(out_data, parents, bw)


def depthwise_conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Per-channel convolution: x (B,C,H,W) * w (C,kh,kw) -> (B,C,Ho,Wo)."""
    x, w = Tensor.as_tensor(x), Tensor.as_tensor(w)
    B, C, H, W = x.data.shape
    Cw, kh, kw = w.data.shape
    if Cw != C:
        raise ShapeError(f"depthwise channel mismatch: {x.data.shape} vs {w.data.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = _windows(xp, kh, kw, stride)
    out_data = np.einsum("bchwij,cij->bchw", win, w.data, optimize=True)
    if b is not None:
        out_data = out_data + b.data[None, :, None, None]
    Ho, Wo = out_data.shape[2:]
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        if w.requires_grad:
            Tensor._accum(w, np.einsum("bchwij,bchw->cij", win, g, optimize=True))
        if b is not None and b.requires_grad:
            Tensor._accum(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += (
                        g * w.data[None, :, i, j, None, None]
                    )
            if padding:
                dxp = dxp[:, :, padding : padding + H, padding : padding + W]
            Tensor._accum(x, dxp)

    return Tensor._make(out_data, parents, bw)


# -- pooling / resize -----------------------------------------------------------


def avg_pool2x2(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        x = x[:, :, : H - H % 2, : W - W % 2]
        B, C, H, W = x.shape
    return x.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))


def max_pool2x2(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        x = x[:, :, : H - H % 2, : W - W % 2]
        B, C, H, W = x.shape
    return x.reshape(B, C, H // 2, 2, W // 2, 2).max(axis=(3, 5))


def _resize_matrix(in_size: int, out_size: int) -> np.ndarray:
    """Dense (out, in) bilinear interpolation matrix, half-pixel centers, border clamp."""
    R = np.zeros((out_size, in_size))
    if in_size == 1:
        R[:, 0] = 1.0
        return R
    src = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    i0 = np.clip(np.floor(src).astype(int), 0, in_size - 2)
    frac = src - i0
    R[np.arange(out_size), i0] += 1.0 - frac
    R[np.arange(out_size), i0 + 1] += frac
    return R


def interpolate_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize (B,C,H,W) -> (B,C,out_h,out_w) with separable bilinear weights."""
    x = Tensor.as_tensor(x)
    B, C, H, W = x.data.shape
    Rh = _resize_matrix(H, out_h)
    Rw = _resize_matrix(W, out_w)
    tmp = np.einsum("oh,bchw->bcow", Rh, x.data, optimize=True)
    out_data = np.einsum("pw,bcow->bcop", Rw, tmp, optimize=True)

    def bw(g):
        if x.requires_grad:
            t = np.einsum("pw,bcop->bcow", Rw, g, optimize=True)
            Tensor._accum(x, np.einsum("oh,bcow->bchw", Rh, t, optimize=True))

    return Tensor._make(out_data, (x,), bw)


def bilinear_sample(x: Tensor, loc: Tensor) -> Tensor:
    """Sample x (B,C,H,W) at continuous (row, col) locations (B,P,2) -> (B,C,P).

    Out-of-bounds locations are clamped to the border; the location gradient
    is zero in the clamped region.
    """
    x, loc = Tensor.as_tensor(x), Tensor.as_tensor(loc)
    B, C, H, W = x.data.shape
    if loc.data.ndim != 3 or loc.data.shape[2] != 2 or loc.data.shape[0] != B:
        raise ShapeError(f"locations must be (B,P,2), got {loc.data.shape}")
    P = loc.data.shape[1]
    r_raw, c_raw = loc.data[..., 0], loc.data[..., 1]
    r = np.clip(r_raw, 0.0, H - 1.0)
    c = np.clip(c_raw, 0.0, W - 1.0)
    r_in = (r_raw > 0.0) & (r_raw < H - 1.0)
    c_in = (c_raw > 0.0) & (c_raw < W - 1.0)
    r0 = np.clip(np.floor(r).astype(int), 0, max(H - 2, 0))
    c0 = np.clip(np.floor(c).astype(int), 0, max(W - 2, 0))
    r1 = np.minimum(r0 + 1, H - 1)
    c1 = np.minimum(c0 + 1, W - 1)
    fr = (r - r0)[:, None, :]  # (B,1,P)
    fc = (c - c0)[:, None, :]

    xf = x.data.reshape(B, C, H * W)

    def gather(ri, ci):
        idx = np.broadcast_to((ri * W + ci)[:, None, :], (B, C, P))
        return np.take_along_axis(xf, idx, axis=2)

    x00 = gather(r0, c0)
    x01 = gather(r0, c1)
    x10 = gather(r1, c0)
    x11 = gather(r1, c1)
    top = x00 * (1 - fc) + x01 * fc
    bot = x10 * (1 - fc) + x11 * fc
    out_data = top * (1 - fr) + bot * fr

    def bw(g):
        if x.requires_grad:
            # scatter-add via bincount on flat (batch, channel, pixel) indices
            base = (np.arange(B * C) * (H * W)).reshape(B, C, 1)
            size = B * C * H * W

            def scatter(ri, ci, wgt):
                flat = (base + (ri * W + ci)[:, None, :]).ravel()
                return np.bincount(flat, weights=(g * wgt).ravel(), minlength=size)

            dxf = scatter(r0, c0, (1 - fr) * (1 - fc))
            dxf += scatter(r0, c1, (1 - fr) * fc)
            dxf += scatter(r1, c0, fr * (1 - fc))
            dxf += scatter(r1, c1, fr * fc)
            Tensor._accum(x, dxf.reshape(B, C, H, W))
        if loc.requires_grad:
            dr = ((bot - top) * g).sum(axis=1) * r_in
            dc = (((x01 - x00) * (1 - fr) + (x11 - x10) * fr) * g).sum(axis=1) * c_in
            Tensor._accum(loc, np.stack([dr, dc], axis=-1))

    return Tensor._make(out_data, (x, loc), bw)
