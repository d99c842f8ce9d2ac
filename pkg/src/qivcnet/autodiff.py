"""Reverse-mode automatic differentiation on float64 numpy arrays.

Every operation builds a node that records its parent tensors and a closure
mapping the node's output gradient to parent gradients.  ``backward`` walks
the graph from a scalar loss in reverse topological order exactly once,
accumulating gradients additively so fan-out (a tensor consumed by several
ops) just works.

Conventions used throughout the package:

 - signals are laid out (batch, time, channels);
 - convolution kernels are (width, in_channels, out_channels);
 - elementwise binaries follow numpy broadcasting (trailing axes), and
   gradients are summed back over the broadcast axes;
 - a graph supports a single backward pass: closures and saved buffers are
   released as soon as they have been applied, to keep peak memory low.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as _expit

from .errors import GraphError, NumericalError, ShapeError

# Shared log stabilizer for cross-entropy and KL terms.
LOG_EPS = 1e-8


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: "tuple[Tensor, ...]" = ()
        self._backward = None

    # -- conveniences -------------------------------------------------
    @property
    def shape(self) -> "tuple[int, ...]":
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: "tuple[Tensor, ...]", backward_fn) -> Tensor:
    """Wrap an op result; the closure is kept only when a parent needs grads."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: "tuple[int, ...]") -> np.ndarray:
    """Sum a gradient back to ``shape`` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss through the recorded graph.

    Visits each node once in reverse topological order.  Closures and
    intermediate gradients are dropped after use, so calling backward a
    second time on the same graph raises GraphError.
    """
    if loss.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor requiring gradients")
    if loss._backward is None and loss._parents == ():
        raise GraphError("backward was already run on this graph")

    # Iterative post-order topological sort over grad-requiring nodes.
    order: "list[Tensor]" = []
    seen: "set[int]" = set()
    stack: "list[tuple[Tensor, bool]]" = [(loss, False)]
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

    loss.grad = np.ones(())
    for node in reversed(order):
        fn = node._backward
        if fn is not None and node.grad is not None:
            fn(node.grad)
        if node._parents:
            # interior node: free closure, saved buffers and its gradient
            node._backward = None
            node._parents = ()
            node.grad = None


# ---------------------------------------------------------------------
# elementwise and arithmetic ops
# ---------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def back(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def back(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), back)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def back(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), back)


def neg(a: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0

    def back(g):
        g *= mask   # g is this node's own grad buffer, safe to clobber
        _accumulate(a, g)

    return _make(np.where(mask, a.data, 0.0), (a,), back)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def back(g):
        _accumulate(a, g * (1.0 - data * data))

    return _make(data, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    data = _expit(a.data)

    def back(g):
        _accumulate(a, g * data * (1.0 - data))

    return _make(data, (a,), back)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def back(g):
        _accumulate(a, g * data)

    return _make(data, (a,), back)


def log(a: Tensor, eps: float = 0.0) -> Tensor:
    """Natural log of (a + eps); eps >= 0 stabilizes near-zero inputs."""
    if eps < 0.0:
        raise ShapeError(f"log stabilizer must be >= 0, got {eps}")
    shifted = a.data + eps
    if np.any(shifted <= 0.0):
        raise NumericalError("log of non-positive value")

    def back(g):
        _accumulate(a, g / shifted)

    return _make(np.log(shifted), (a,), back)


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed stably for large |x|."""
    data = np.logaddexp(0.0, a.data)

    def back(g):
        _accumulate(a, g * _expit(a.data))

    return _make(data, (a,), back)


def identity(a: Tensor) -> Tensor:
    return a


ACTIVATIONS = {
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "identity": identity,
}


# ---------------------------------------------------------------------
# reductions, shaping, indexing
# ---------------------------------------------------------------------

def tsum(a: Tensor) -> Tensor:
    """Sum of all elements (scalar)."""
    shape = a.shape

    def back(g):
        _accumulate(a, np.broadcast_to(g, shape).copy())

    return _make(a.data.sum(), (a,), back)


def tmean(a: Tensor) -> Tensor:
    """Mean of all elements (scalar)."""
    count = a.data.size
    shape = a.shape

    def back(g):
        _accumulate(a, np.broadcast_to(g / count, shape).copy())

    return _make(a.data.mean(), (a,), back)


def reshape(a: Tensor, shape: "tuple[int, ...]") -> Tensor:
    old = a.shape

    def back(g):
        _accumulate(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), back)


def concat(parts: "list[Tensor]", axis: int = -1) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def back(g):
        for p, piece in zip(parts, np.split(g, offsets, axis=axis)):
            _accumulate(p, piece)

    return _make(data, tuple(parts), back)


def take_channel(a: Tensor, index: int) -> Tensor:
    """Select one entry of the last axis (drops that axis)."""
    if not -a.shape[-1] <= index < a.shape[-1]:
        raise ShapeError(f"channel {index} out of range for last axis {a.shape[-1]}")
    shape = a.shape

    def back(g):
        full = np.zeros(shape)
        full[..., index] = g
        _accumulate(a, full)

    return _make(a.data[..., index].copy(), (a,), back)


def reverse_time(a: Tensor) -> Tensor:
    """Flip the time axis of a (batch, time, channels) tensor."""
    if a.ndim != 3:
        raise ShapeError(f"reverse_time expects rank 3, got shape {a.shape}")

    def back(g):
        _accumulate(a, g[:, ::-1, :])

    return _make(np.ascontiguousarray(a.data[:, ::-1, :]), (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b with b a matrix; a may carry leading batch axes."""
    if b.ndim != 2 or a.ndim < 2:
        raise ShapeError(f"matmul needs a.ndim >= 2 and b.ndim == 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def back(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            lead = tuple(range(a.ndim - 1))
            _accumulate(b, np.tensordot(a.data, g, axes=(lead, lead)))

    return _make(data, (a, b), back)


# ---------------------------------------------------------------------
# structured ops: convolution, pooling, softmax, batch norm, LSTM
# ---------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: "Tensor | None" = None, stride: int = 1) -> Tensor:
    """1-D convolution with zero "same" padding.

    x is (batch, time, c_in), w is (width, c_in, c_out), optional bias is
    (c_out,).  The left pad is width // 2 and the output length is
    time // stride (floor), so stride 1 preserves the input length.
    """
    if x.ndim != 3:
        raise ShapeError(f"conv1d input must be rank 3, got shape {x.shape}")
    if w.ndim != 3:
        raise ShapeError(f"conv1d kernel must be rank 3, got shape {w.shape}")
    B, T, Cin = x.shape
    K, KCin, Cout = w.shape
    if KCin != Cin:
        raise ShapeError(f"kernel in_channels={KCin} does not match input channels={Cin}")
    if b is not None and b.shape != (Cout,):
        raise ShapeError(f"bias shape {b.shape} does not match out_channels={Cout}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if K > T:
        raise ShapeError(f"kernel width {K} exceeds signal length {T}")

    t_out = T // stride
    pad_left = K // 2
    # rightmost input index touched is (t_out-1)*stride + K-1 - pad_left
    pad_right = max(0, (t_out - 1) * stride + K - 1 - pad_left - (T - 1))
    xp = np.pad(x.data, ((0, 0), (pad_left, pad_right), (0, 0)))
    # im2col: materialize the (batch*t_out, width*c_in) window matrix once so
    # the convolution and both weight/input gradients are single GEMMs.
    win = np.lib.stride_tricks.sliding_window_view(xp, K, axis=1)
    win = win[:, :: stride, :, :][:, : t_out]          # (B, t_out, Cin, K)
    col = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B * t_out, K * Cin)
    w2 = w.data.reshape(K * Cin, Cout)
    out = (col @ w2).reshape(B, t_out, Cout)
    if b is not None:
        out += b.data

    def back(g):
        g2 = g.reshape(B * t_out, Cout)
        if x.requires_grad:
            dcol = (g2 @ w2.T).reshape(B, t_out, K, Cin)
            dxp = np.zeros_like(xp)
            for k in range(K):
                dxp[:, k: k + stride * t_out: stride, :] += dcol[:, :, k, :]
            _accumulate(x, dxp[:, pad_left: pad_left + T, :])
        if w.requires_grad:
            _accumulate(w, (col.T @ g2).reshape(K, Cin, Cout))
        if b is not None and b.requires_grad:
            _accumulate(b, g.sum(axis=(0, 1)))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, back)


def max_pool(x: Tensor, width: int = 2) -> Tensor:
    """Non-overlapping max pooling along time; a trailing remainder is dropped."""
    if x.ndim != 3:
        raise ShapeError(f"max_pool input must be rank 3, got shape {x.shape}")
    if width < 1:
        raise ShapeError(f"pool width must be >= 1, got {width}")
    B, T, C = x.shape
    t_out = T // width
    if t_out == 0:
        raise ShapeError(f"signal length {T} shorter than pool width {width}")
    xr = x.data[:, : t_out * width, :].reshape(B, t_out, width, C)
    idx = xr.argmax(axis=2)
    out = np.take_along_axis(xr, idx[:, :, None, :], axis=2)[:, :, 0, :]

    def back(g):
        dxr = np.zeros((B, t_out, width, C))
        np.put_along_axis(dxr, idx[:, :, None, :], g[:, :, None, :], axis=2)
        dx = np.zeros((B, T, C))
        dx[:, : t_out * width, :] = dxr.reshape(B, t_out * width, C)
        _accumulate(x, dx)

    return _make(out, (x,), back)


def global_max_pool(x: Tensor) -> Tensor:
    """Maximum over the time axis: (batch, time, channels) -> (batch, channels)."""
    if x.ndim != 3:
        raise ShapeError(f"global_max_pool input must be rank 3, got shape {x.shape}")
    B, T, C = x.shape
    idx = x.data.argmax(axis=1)
    out = np.take_along_axis(x.data, idx[:, None, :], axis=1)[:, 0, :]

    def back(g):
        dx = np.zeros((B, T, C))
        np.put_along_axis(dx, idx[:, None, :], g[:, None, :], axis=1)
        _accumulate(x, dx)

    return _make(out, (x,), back)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with the max-shift trick."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        _accumulate(x, data * (g - inner))

    return _make(data, (x,), back)


class BatchNormState:
    """Running statistics for one batch-norm layer.

    The running variance is the biased (population) batch variance, matching
    what normalization itself uses; with momentum 1.0 a single training batch
    therefore reproduces its own statistics exactly at inference.
    """

    __slots__ = ("running_mean", "running_var", "momentum", "eps")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        if eps <= 0.0:
            raise ShapeError(f"batch_norm eps must be > 0, got {eps}")
        if not 0.0 < momentum <= 1.0:
            raise ShapeError(f"batch_norm momentum must be in (0, 1], got {momentum}")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = float(momentum)
        self.eps = float(eps)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               state: BatchNormState, training: bool) -> Tensor:
    """Per-channel batch normalization over the (batch, time) axes.

    Training mode normalizes by batch statistics and updates the running
    mean/variance in ``state``; inference mode uses the stored statistics.
    """
    if x.ndim != 3:
        raise ShapeError(f"batch_norm input must be rank 3, got shape {x.shape}")
    C = x.shape[-1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"gamma/beta must have shape ({C},), got {gamma.shape}/{beta.shape}")

    n = x.shape[0] * x.shape[1]
    if training:
        mean = x.data.mean(axis=(0, 1))
        xhat = x.data - mean
        var = np.einsum("btc,btc->c", xhat, xhat) / n
        m = state.momentum
        state.running_mean = (1.0 - m) * state.running_mean + m * mean
        state.running_var = (1.0 - m) * state.running_var + m * var
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat *= inv
    else:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = x.data - state.running_mean
        xhat *= inv
    data = xhat * gamma.data
    data += beta.data

    def back(g):
        gx = np.einsum("btc,btc->c", g, xhat)
        if gamma.requires_grad:
            _accumulate(gamma, gx)
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=(0, 1)))
        if x.requires_grad:
            dx = g * gamma.data
            if training:
                dx -= dx.mean(axis=(0, 1))
                dx -= xhat * (gx * (gamma.data / n))
            dx *= inv
            _accumulate(x, dx)

    return _make(data, (x, gamma, beta), back)


def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor,
         h0: "np.ndarray | None" = None, c0: "np.ndarray | None" = None) -> Tensor:
    """Unidirectional LSTM over (batch, time, features); returns all hidden states.

    wx is (features, 4*hidden), wh is (hidden, 4*hidden), b is (4*hidden,).
    Gates are packed [input, forget, output, cell] so one sigmoid covers the
    first three blocks and one tanh the last.  h0 and c0 are constant initial
    states (zero when omitted); gradients do not flow into them.  Backward is
    hand-rolled full-sequence BPTT; the input projection and its gradients
    are single GEMMs.
    """
    if x.ndim != 3:
        raise ShapeError(f"lstm input must be rank 3, got shape {x.shape}")
    B, T, I = x.shape
    H = wh.shape[0]
    if wx.shape != (I, 4 * H) or wh.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ShapeError(
            f"lstm weights inconsistent: x {x.shape}, wx {wx.shape}, wh {wh.shape}, b {b.shape}")
    h_init = np.zeros((B, H)) if h0 is None else np.asarray(h0, dtype=np.float64)
    c_init = np.zeros((B, H)) if c0 is None else np.asarray(c0, dtype=np.float64)
    if h_init.shape != (B, H) or c_init.shape != (B, H):
        raise ShapeError(f"initial states must have shape ({B}, {H})")

    # Input projection as one time-major GEMM; the recurrence then works on
    # contiguous (B, 4H) slices with preallocated buffers to keep the per-step
    # python overhead down (this loop dominates training time).
    xt_flat = np.ascontiguousarray(x.data.transpose(1, 0, 2)).reshape(T * B, I)
    gates = (xt_flat @ wx.data).reshape(T, B, 4 * H)
    gates += b.data
    cells = np.empty((T, B, H))
    tanh_c = np.empty((T, B, H))
    hiddens = np.empty((T, B, H))
    tmp = np.empty((B, H))
    zbuf = np.empty((B, 4 * H))
    h = np.ascontiguousarray(h_init)
    c = c_init
    whd = wh.data
    for t in range(T):
        z = gates[t]
        np.dot(h, whd, out=zbuf)
        z += zbuf
        _expit(z[:, : 3 * H], out=z[:, : 3 * H])
        np.tanh(z[:, 3 * H:], out=z[:, 3 * H:])
        c_t = cells[t]
        np.multiply(z[:, H: 2 * H], c, out=c_t)
        np.multiply(z[:, :H], z[:, 3 * H:], out=tmp)
        c_t += tmp
        h = hiddens[t]
        np.tanh(c_t, out=tanh_c[t])
        np.multiply(z[:, 2 * H: 3 * H], tanh_c[t], out=h)
        c = c_t
    out = np.ascontiguousarray(hiddens.transpose(1, 0, 2))

    def back(g):
        gt = np.ascontiguousarray(g.transpose(1, 0, 2))  # (T, B, H)
        # Elementwise derivative factors, one vectorized pass each: for the
        # sigmoid gates s*(1-s) times the downstream multiplicand, for the
        # tanh gate 1-g^2 times it, and o*(1-tanh(c)^2) feeding dc.
        tc = tanh_c
        i_g = gates[:, :, :H]
        f_g = gates[:, :, H: 2 * H]
        o_g = gates[:, :, 2 * H: 3 * H]
        t_g = gates[:, :, 3 * H:]
        q = np.multiply(tc, tc)
        np.subtract(1.0, q, out=q)
        pre_c = np.multiply(o_g, q, out=q)     # o * (1-tanh(c)^2), dh -> dc
        r = np.subtract(1.0, o_g)
        r *= o_g
        pre_o = np.multiply(tc, r, out=r)      # tanh(c) * o * (1-o)
        s = np.subtract(1.0, i_g)
        s *= i_g
        pre_i = np.multiply(t_g, s, out=s)     # g * i * (1-i)
        c_prev = np.empty((T, B, H))
        c_prev[0] = c_init
        c_prev[1:] = cells[: T - 1]
        u = np.subtract(1.0, f_g)
        u *= f_g
        pre_f = np.multiply(c_prev, u, out=u)  # c_prev * f * (1-f)
        v = np.multiply(t_g, t_g, out=c_prev)
        np.subtract(1.0, v, out=v)
        pre_g = np.multiply(i_g, v, out=v)     # i * (1-g^2)
        dgates = gates                         # overwrite gate values in place
        dh = np.empty((B, H))
        dc = np.empty((B, H))
        dcf = np.zeros((B, H))                 # dc_next * f_next, carried back
        dhr = np.zeros((B, H))
        tmp2 = np.empty((B, H))
        wht = np.ascontiguousarray(whd.T)
        for t in range(T - 1, -1, -1):
            np.add(gt[t], dhr, out=dh)
            np.multiply(dh, pre_c[t], out=dc)
            dc += dcf
            np.multiply(dc, f_g[t], out=dcf)
            d = dgates[t]
            np.multiply(dc, pre_f[t], out=d[:, H: 2 * H])
            np.multiply(dh, pre_o[t], out=d[:, 2 * H: 3 * H])
            np.multiply(dc, pre_g[t], out=tmp2)
            np.multiply(dc, pre_i[t], out=d[:, :H])
            d[:, 3 * H:] = tmp2
            np.dot(d, wht, out=dhr)
        if wh.requires_grad:
            dwh = h_init.T @ dgates[0]
            if T > 1:
                dwh = dwh + hiddens[: T - 1].reshape((T - 1) * B, H).T @ \
                    dgates[1:].reshape((T - 1) * B, 4 * H)
            _accumulate(wh, dwh)
        dz = dgates.reshape(T * B, 4 * H)
        if wx.requires_grad:
            _accumulate(wx, xt_flat.T @ dz)
        if b.requires_grad:
            _accumulate(b, dz.sum(axis=0))
        if x.requires_grad:
            dx = (dz @ wx.data.T).reshape(T, B, I)
            _accumulate(x, dx.transpose(1, 0, 2))

    return _make(out, (x, wx, wh, b), back)
