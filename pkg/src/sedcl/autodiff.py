"""Reverse-mode automatic differentiation over dense float64 arrays.

Each operation computes its result eagerly with numpy and records a
pullback closure on the output tensor; ``backward`` walks the graph in
reverse topological order and accumulates gradients into ``grad`` fields.
Gradients flow only into tensors created with ``requires_grad=True`` (and
their ancestors), so constant subtrees cost nothing in the backward pass.

Every forward result is checked for NaN/Inf: a non-finite value raises
immediately, naming the operation that produced it.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError, SedclError, ShapeError

__all__ = [
    "Tensor",
    "parameter",
    "add",
    "mul",
    "matmul",
    "conv2d",
    "maxpool2d",
    "sigmoid",
    "tanh",
    "relu",
    "log",
    "exp",
    "concat",
    "tensor_sum",
    "tensor_mean",
    "softmax",
    "transpose",
    "reshape",
    "bce_logits",
    "gru",
    "gradcheck",
]


def _finite(values: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"{op} produced a non-finite value")
    return values


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to ``shape`` along broadcast dimensions."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    """A float64 array plus the bookkeeping to backpropagate through it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._spent = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; constants are wrapped as non-grad tensors
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __sub__(self, other):
        return add(self, -_as_tensor(other))

    def __rsub__(self, other):
        return add(_as_tensor(other), -self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("divide by a plain scalar, not a tensor")
        return mul(self, _as_tensor(1.0 / float(other)))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        out = _node(self.data[key], (self,), "slice")
        if out.requires_grad:

            def backward(g, key=key, shape=self.data.shape):
                full = np.zeros(shape)
                full[key] += g  # basic indexing only: views, no repeats
                return (full,)

            out._backward = backward
        return out

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable parameter."""
        if self.data.shape != ():
            raise ShapeError(f"backward needs a scalar, got shape {self.data.shape}")
        if self._spent:
            raise SedclError("backward called twice on the same graph; rebuild it first")
        order = _toposort(self)
        self.grad = np.ones(())
        for node in order:
            fn = node._backward
            if fn is None:
                continue
            grads = fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros(parent.data.shape)
                parent.grad += g
            # free activations; also poisons accidental reuse
            node._backward = None
            node._parents = ()
            node._spent = True


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(values: np.ndarray, parents: tuple, op: str) -> Tensor:
    out = Tensor(_finite(values, op))
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
    return out


def _toposort(root: Tensor) -> list:
    order, stack, seen = [], [(root, iter(root._parents))], {id(root)}
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen and p.requires_grad and p._backward is not None:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    order.reverse()
    return order


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        values = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from None
    out = _node(values, (a, b), "add")
    if out.requires_grad:
        out._backward = lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        values = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from None
    out = _node(values, (a, b), "mul")
    if out.requires_grad:
        out._backward = lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        )
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """[..., M, K] @ [K, N]; the right operand must be a plain matrix."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = _node(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:

        def backward(g):
            da = g @ b.data.T if a.requires_grad else None
            if b.requires_grad:
                k, n = b.shape
                db = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                db = None
            return (da, db)

        out._backward = backward
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """3x3 convolution, stride 1, zero 'same' padding.

    x: [B, C_in, H, W]; w: [C_out, C_in, 3, 3]; b: [C_out] or None.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d: expected [B,C,H,W] and [O,C,3,3], got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch {x.shape} vs {w.shape}")
    bsz, cin, h, wd = x.shape
    cout = w.shape[0]
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h * wd, cin * 9)
    wmat = w.data.reshape(cout, cin * 9)
    values = (cols @ wmat.T).reshape(bsz, h, wd, cout).transpose(0, 3, 1, 2)
    parents = (x, w)
    if b is not None:
        b = _as_tensor(b)
        if b.shape != (cout,):
            raise ShapeError(f"conv2d: bias shape {b.shape} != ({cout},)")
        values = values + b.data[:, None, None]
        parents = (x, w, b)
    out = _node(values, parents, "conv2d")
    if out.requires_grad:

        def backward(g):
            gmat = g.transpose(0, 2, 3, 1).reshape(bsz * h * wd, cout)
            dw = (gmat.T @ cols).reshape(cout, cin, 3, 3) if w.requires_grad else None
            if x.requires_grad:
                dwin = (gmat @ wmat).reshape(bsz, h, wd, cin, 3, 3).transpose(0, 3, 1, 2, 4, 5)
                dxp = np.zeros_like(xp)
                for i in range(3):
                    for j in range(3):
                        dxp[:, :, i : i + h, j : j + wd] += dwin[..., i, j]
                dx = dxp[:, :, 1:-1, 1:-1]
            else:
                dx = None
            if len(parents) == 3:
                db = g.sum(axis=(0, 2, 3)) if parents[2].requires_grad else None
                return (dx, dw, db)
            return (dx, dw)

        out._backward = backward
    return out


def maxpool2d(x: Tensor, pool: tuple) -> Tensor:
    """Non-overlapping max pooling over the trailing two axes.

    Ties route the gradient to the first (lowest-index) maximal element.
    """
    x = _as_tensor(x)
    ph, pw = pool
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d: expected [B,C,H,W], got {x.shape}")
    bsz, c, h, wd = x.shape
    if h % ph or wd % pw:
        raise ShapeError(f"maxpool2d: {h}x{wd} not divisible by {ph}x{pw} window")
    blocks = x.data.reshape(bsz, c, h // ph, ph, wd // pw, pw).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(bsz, c, h // ph, wd // pw, ph * pw)
    idx = flat.argmax(axis=-1)
    out = _node(np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0], (x,), "maxpool2d")
    if out.requires_grad:

        def backward(g):
            dflat = np.zeros_like(flat)
            np.put_along_axis(dflat, idx[..., None], g[..., None], axis=-1)
            dblocks = dflat.reshape(bsz, c, h // ph, wd // pw, ph, pw)
            return (dblocks.transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h, wd),)

        out._backward = backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    v = x.data
    s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    out = _node(s, (x,), "sigmoid")
    if out.requires_grad:
        out._backward = lambda g: (g * s * (1.0 - s),)
    return out


def tanh(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    t = np.tanh(x.data)
    out = _node(t, (x,), "tanh")
    if out.requires_grad:
        out._backward = lambda g: (g * (1.0 - t * t),)
    return out


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = _node(np.maximum(x.data, 0.0), (x,), "relu")
    if out.requires_grad:
        mask = x.data > 0
        out._backward = lambda g: (g * mask,)
    return out


def log(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data <= 0):
        raise NumericalError("log of a non-positive value")
    v = np.log(x.data)
    out = _node(v, (x,), "log")
    if out.requires_grad:
        out._backward = lambda g: (g / x.data,)
    return out


def exp(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(over="ignore"):  # overflow becomes the finite-check error
        e = np.exp(x.data)
    out = _node(e, (x,), "exp")
    if out.requires_grad:
        out._backward = lambda g: (g * e,)
    return out


def concat(tensors: list, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        values = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}"
        ) from None
    out = _node(values, tuple(tensors), "concat")
    if out.requires_grad:
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        out._backward = lambda g: tuple(np.split(g, splits, axis=axis))
    return out


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = _node(x.data.sum(axis=axis, keepdims=keepdims), (x,), "sum")
    if out.requires_grad:

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.shape).copy(),)

        out._backward = backward
    return out


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    count = x.data.size if axis is None else np.prod(
        [x.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    out = _node(x.data.mean(axis=axis, keepdims=keepdims), (x,), "mean")
    if out.requires_grad:

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.shape) / count,)

        out._backward = backward
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _node(s, (x,), "softmax")
    if out.requires_grad:
        out._backward = lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),)
    return out


def transpose(x: Tensor, axes=None) -> Tensor:
    x = _as_tensor(x)
    out = _node(x.data.transpose(axes), (x,), "transpose")
    if out.requires_grad:
        inverse = None if axes is None else np.argsort(axes)
        out._backward = lambda g: (g.transpose(inverse),)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    try:
        values = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
    out = _node(values, (x,), "reshape")
    if out.requires_grad:
        out._backward = lambda g: (g.reshape(x.shape),)
    return out


def bce_logits(y: Tensor, z: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy against targets z, from logits.

    Computed as max(y,0) - y*z + log1p(exp(-|y|)), which never raises the
    log floor no matter how saturated the logits get.  The pullback is the
    textbook sigmoid(y) - z.
    """
    y = _as_tensor(y)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeError(f"bce_logits: target shape {z.shape} != logit shape {y.shape}")
    v = y.data
    values = np.maximum(v, 0.0) - v * z + np.log1p(np.exp(-np.abs(v)))
    out = _node(values, (y,), "bce_logits")
    if out.requires_grad:

        def backward(g):
            s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
            return (g * (s - z),)

        out._backward = backward
    return out


def gru(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """Single-layer GRU over [B, T, D] input; returns all states [B, T, H].

    Weights pack the reset, update, and candidate gates side by side:
    wx [D, 3H], wh [H, 3H], b [3H].  The initial state is zero.  With
    ``reverse=True`` the layer scans right to left and the output stays
    aligned with the input's time axis, so a bidirectional pair is just
    two calls and a feature concat.
    """
    x, wx, wh, b = _as_tensor(x), _as_tensor(wx), _as_tensor(wh), _as_tensor(b)
    if x.data.ndim != 3 or wx.data.ndim != 2 or x.shape[2] != wx.shape[0]:
        raise ShapeError(f"gru: input {x.shape} incompatible with wx {wx.shape}")
    hid3 = wx.shape[1]
    if hid3 % 3 or wh.shape != (hid3 // 3, hid3) or b.shape != (hid3,):
        raise ShapeError(f"gru: inconsistent weight shapes wx {wx.shape}, wh {wh.shape}, b {b.shape}")
    hid = hid3 // 3
    bsz, steps, _ = x.shape
    xd = x.data[:, ::-1] if reverse else x.data
    pre = xd @ wx.data + b.data  # input projections for every step at once
    wh_rz, wh_n = wh.data[:, : 2 * hid], wh.data[:, 2 * hid :]

    h = np.zeros((bsz, hid))
    hprev = np.empty((bsz, steps, hid))
    rs = np.empty((bsz, steps, hid))
    zs = np.empty((bsz, steps, hid))
    cand = np.empty((bsz, steps, hid))
    outs = np.empty((bsz, steps, hid))
    for t in range(steps):
        hprev[:, t] = h
        rz = pre[:, t, : 2 * hid] + h @ wh_rz
        rz = 1.0 / (1.0 + np.exp(-rz))
        r, z = rz[:, :hid], rz[:, hid:]
        c = np.tanh(pre[:, t, 2 * hid :] + (r * h) @ wh_n)
        h = (1.0 - z) * c + z * h
        rs[:, t], zs[:, t], cand[:, t], outs[:, t] = r, z, c, h

    out = _node(outs[:, ::-1] if reverse else outs, (x, wx, wh, b), "gru")
    if out.requires_grad:

        def backward(g):
            if reverse:
                g = g[:, ::-1]
            dpre = np.empty((bsz, steps, 3 * hid))
            dh = np.zeros((bsz, hid))
            for t in range(steps - 1, -1, -1):
                dh = dh + g[:, t]
                r, z, c, hp = rs[:, t], zs[:, t], cand[:, t], hprev[:, t]
                dz = dh * (hp - c) * z * (1.0 - z)
                dn = dh * (1.0 - z) * (1.0 - c * c)
                drh = dn @ wh_n.T
                dr = drh * hp * r * (1.0 - r)
                dpre[:, t, :hid] = dr
                dpre[:, t, hid : 2 * hid] = dz
                dpre[:, t, 2 * hid :] = dn
                dh = dh * z + drh * r + np.concatenate([dr, dz], axis=1) @ wh_rz.T
            flat = dpre.reshape(-1, 3 * hid)
            dwx = xd.reshape(-1, xd.shape[2]).T @ flat if wx.requires_grad else None
            db = flat.sum(axis=0) if b.requires_grad else None
            if wh.requires_grad:
                dwh_rz = hprev.reshape(-1, hid).T @ flat[:, : 2 * hid]
                dwh_n = (rs * hprev).reshape(-1, hid).T @ flat[:, 2 * hid :]
                dwh = np.concatenate([dwh_rz, dwh_n], axis=1)
            else:
                dwh = None
            if x.requires_grad:
                dx = flat @ wx.data.T
                dx = dx.reshape(bsz, steps, -1)
                if reverse:
                    dx = dx[:, ::-1]
            else:
                dx = None
            return (dx, dwx, dwh, db)

        out._backward = backward
    return out


def gradcheck(builder, params: list, step: float = 1e-5) -> float:
    """Compare analytic gradients with central finite differences.

    ``builder`` maps a list of parameter tensors to a scalar tensor; it is
    evaluated twice up front and must give bit-identical losses, otherwise
    it is rejected as non-deterministic.  Returns the worst elementwise
    relative error max |a - n| / max(1e-8, |a| + |n|).
    """
    points = [np.array(p, dtype=np.float64) for p in params]

    def evaluate(values) -> float:
        loss = builder([Tensor(v) for v in values])
        if loss.data.shape != ():
            raise ShapeError(f"gradcheck: builder returned shape {loss.data.shape}")
        return loss.item()

    if evaluate(points) != evaluate(points):
        raise SedclError("gradcheck: builder is not deterministic")

    tensors = [parameter(p) for p in points]
    builder(tensors).backward()
    worst = 0.0
    for k, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        it = np.nditer(points[k], flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            bumped = [p.copy() for p in points]
            bumped[k][ix] += step
            hi = evaluate(bumped)
            bumped[k][ix] -= 2 * step
            lo = evaluate(bumped)
            numeric = (hi - lo) / (2 * step)
            a = float(analytic[ix])
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst
