"""Dense tensors with reverse-mode differentiation.

A ``Tensor`` wraps a numpy array (float32 for training, float64 for gradient
checking).  Differentiable operations append a node to the active ``Tape``;
``backward(loss, tape)`` replays the tape in reverse execution order, which
is a valid reverse topological order because every op's inputs were recorded
before the op itself.  Gradients accumulate into ``.grad`` arrays.

The op set is exactly what the relation-extraction networks need; this is
not a general autodiff library (no higher-order derivatives, no GPU).
"""

from __future__ import annotations

import numpy as np

from .backend import kernels
from .rng import SeededRng

DEFAULT_DTYPE = np.float32

# Floor inside every log so that cross-entropy stays finite on hard zeros.
EPS_LOG = 1e-12

ACTIVATIONS = ("sigmoid", "tanh", "relu")


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class Tensor:
    """A dense n-dimensional array, optionally carrying a gradient."""

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, dtype=None, name: str = ""):
        arr = np.asarray(data)
        if dtype is None:
            # keep an explicit float precision, promote everything else
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else DEFAULT_DTYPE
        self.data = np.asarray(arr, dtype=dtype)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(other))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A named trainable tensor; ``grad`` is always allocated and zeroed.

    ``frozen_rows`` lists first-axis rows excluded from optimizer updates
    (used to pin the PAD embedding row at zero); gradient checks skip them
    for the same reason.
    """

    __slots__ = ("frozen_rows",)

    def __init__(self, name: str, data, dtype=None, frozen_rows=()):
        if not name:
            raise ValueError("Parameter needs a non-empty name")
        super().__init__(data, dtype=dtype, name=name)
        self.grad = np.zeros_like(self.data)
        self.frozen_rows = tuple(frozen_rows)

    def zero_grad(self):
        self.grad[...] = 0


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def glorot_uniform(shape, rng: SeededRng, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); fans are the
    first and last axis sizes."""
    fan_in, fan_out = shape[0], shape[-1]
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-limit, limit, shape, dtype=dtype)


class Tape:
    """Record of differentiable ops; back-propagated at most once.

    Use as a context manager around the forward pass.  At most one tape is
    active at a time; training steps are sequential by design.
    """

    def __init__(self):
        self.nodes = []  # (output Tensor, backward closure)
        self.spent = False

    def append(self, out: Tensor, backward_fn) -> None:
        self.nodes.append((out, backward_fn))

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a computation record is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False


_ACTIVE_TAPE: Tape | None = None


def _tape() -> Tape | None:
    return _ACTIVE_TAPE


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(input) for everything reachable from ``loss``."""
    if loss.data.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if tape.spent:
        raise RuntimeError("this computation record was already back-propagated")
    tape.spent = True
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for out, fn in reversed(tape.nodes):
        if out.grad is not None:
            fn(out.grad)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))

        tape.append(out, bwd)
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data, dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:
        tape.append(out, lambda g: _accum(a, -g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data, dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

        tape.append(out, bwd)
    return out


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * s, dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:
        tape.append(out, lambda g: _accum(a, g * s))
    return out


def log(a: Tensor, eps: float = 0.0) -> Tensor:
    """log(a + eps); pass eps=EPS_LOG when a may contain exact zeros."""
    shifted = a.data + eps
    out = Tensor(np.log(shifted), dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:
        tape.append(out, lambda g: _accum(a, g / shifted))
    return out


def tsum(a: Tensor, axis=None) -> Tensor:
    out = Tensor(a.data.sum(axis=axis), dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            if axis is None:
                _accum(a, np.broadcast_to(g, a.data.shape))
            else:
                _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape))

        tape.append(out, bwd)
    return out


def tmean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape), dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:
        tape.append(out, lambda g: _accum(a, g.reshape(a.data.shape)))
    return out


def transpose2d(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose2d needs a matrix, got shape {a.data.shape}")
    out = Tensor(a.data.T.copy(), dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:
        tape.append(out, lambda g: _accum(a, g.T))
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 dtype=tensors[0].data.dtype)
    tape = _tape()
    if tape is not None:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def bwd(g):
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                _accum(t, piece)

        tape.append(out, bwd)
    return out


def time_slice(a: Tensor, t: int) -> Tensor:
    """Select step t of a (batch, time, dim) or (time, dim) tensor; the
    backward pass scatters the gradient into an otherwise-zero slice."""
    if a.data.ndim not in (2, 3):
        raise ShapeError(f"time_slice needs 2 or 3 axes, got shape {a.data.shape}")
    batched = a.data.ndim == 3
    if not 0 <= t < a.data.shape[1 if batched else 0]:
        raise ShapeError(f"step {t} out of range for shape {a.data.shape}")
    out = Tensor((a.data[:, t, :] if batched else a.data[t]).copy(), dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            ga = np.zeros_like(a.data)
            if batched:
                ga[:, t, :] = g
            else:
                ga[t] = g
            _accum(a, ga)

        tape.append(out, bwd)
    return out


# ---------------------------------------------------------------------------
# linear algebra and network ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, dtype=a.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

        tape.append(out, bwd)
    return out


def conv1d(x: Tensor, filters: Tensor, bias: Tensor, padding: str = "valid") -> Tensor:
    """Affine 1-d convolution over the time axis (no nonlinearity).

    ``x`` is (m, d) or batched (B, m, d); ``filters`` is (win, d, f);
    ``bias`` is (f,).  'valid' output length is m - win + 1, 'same'
    zero-pads to preserve m.
    """
    if padding not in ("valid", "same"):
        raise ValueError(f"unknown padding {padding!r}")
    if filters.data.ndim != 3:
        raise ShapeError(f"filter bank must be (win, d, f), got {filters.data.shape}")
    win, depth, nf = filters.data.shape
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or xd.shape[2] != depth:
        raise ShapeError(
            f"conv1d input {x.data.shape} does not match filter depth {depth}"
        )
    if padding == "valid" and xd.shape[1] < win:
        raise ShapeError(
            f"conv1d input of length {xd.shape[1]} is shorter than window {win}"
        )
    if bias.data.shape != (nf,):
        raise ShapeError(f"bias shape {bias.data.shape} != ({nf},)")

    same = padding == "same"
    out_data = kernels.conv1d_forward(xd, filters.data, bias.data, same)
    out = Tensor(out_data[0] if squeeze else out_data, dtype=x.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            gd = g[None] if squeeze else g
            gx, gw, gb = kernels.conv1d_backward(xd, filters.data, same, np.ascontiguousarray(gd))
            _accum(x, gx[0] if squeeze else gx)
            _accum(filters, gw)
            _accum(bias, gb)

        tape.append(out, bwd)
    return out


def max_pool_time(x: Tensor) -> Tensor:
    """Per-filter max over the time axis; ties send the gradient to the
    lowest time index."""
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.shape[1] < 1:
        raise ShapeError("max_pool_time needs a non-empty time axis")
    arg = xd.argmax(axis=1)  # (B, f); argmax picks the first maximum
    pooled = np.take_along_axis(xd, arg[:, None, :], axis=1)[:, 0, :]
    out = Tensor(pooled[0] if squeeze else pooled, dtype=x.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            gd = g[None] if squeeze else g
            gx = np.zeros_like(xd)
            np.put_along_axis(gx, arg[:, None, :], gd[:, None, :], axis=1)
            _accum(x, gx[0] if squeeze else gx)

        tape.append(out, bwd)
    return out


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "sigmoid":
        y = 1.0 / (1.0 + np.exp(-x.data))
        dydx = lambda: y * (1.0 - y)
    elif kind == "tanh":
        y = np.tanh(x.data)
        dydx = lambda: 1.0 - y * y
    elif kind == "relu":
        y = np.maximum(x.data, 0)
        dydx = lambda: (x.data > 0).astype(x.data.dtype)
    else:
        raise ValueError(f"unknown activation {kind!r}; choose from {ACTIVATIONS}")
    out = Tensor(y, dtype=x.data.dtype)
    tape = _tape()
    if tape is not None:
        tape.append(out, lambda g: _accum(x, g * dydx()))
    return out


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtracted for overflow safety."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, dtype=x.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            # d softmax: y * (g - sum(g * y))
            dot = (g * y).sum(axis=-1, keepdims=True)
            _accum(x, y * (g - dot))

        tape.append(out, bwd)
    return out


def cross_entropy(dist: Tensor, target_index: int) -> Tensor:
    """-log(dist[target] + eps) for a single probability vector."""
    if dist.data.ndim != 1:
        raise ShapeError(f"cross_entropy needs a vector, got shape {dist.data.shape}")
    k = dist.data.shape[0]
    if not 0 <= target_index < k:
        raise IndexError(f"target index {target_index} out of range for {k} classes")
    p = dist.data[target_index] + EPS_LOG
    out = Tensor(np.asarray(-np.log(p), dtype=dist.data.dtype), dtype=dist.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            gd = np.zeros_like(dist.data)
            gd[target_index] = -g / p
            _accum(dist, gd)

        tape.append(out, bwd)
    return out


def nll_rows(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Batched sparse cross-entropy: -log(probs[..., t] + eps) per row.

    ``targets`` is an integer array shaped like ``probs`` minus its last
    axis; the result has that same shape.
    """
    targets = np.asarray(targets)
    if targets.shape != probs.data.shape[:-1]:
        raise ShapeError(
            f"targets shape {targets.shape} != row shape {probs.data.shape[:-1]}"
        )
    k = probs.data.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise IndexError(f"target index out of range for {k} classes")
    flat = probs.data.reshape(-1, k)
    idx = targets.reshape(-1)
    picked = flat[np.arange(idx.size), idx] + EPS_LOG
    out = Tensor(-np.log(picked).reshape(targets.shape), dtype=probs.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            gp = np.zeros_like(flat)
            gp[np.arange(idx.size), idx] = -g.reshape(-1) / picked
            _accum(probs, gp.reshape(probs.data.shape))

        tape.append(out, bwd)
    return out


def dropout(x: Tensor, rate: float, rng: SeededRng, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by
    1/(1-rate).  Identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    keep *= 1.0 / (1.0 - rate)
    out = Tensor(x.data * keep, dtype=x.data.dtype)
    tape = _tape()
    if tape is not None:
        tape.append(out, lambda g: _accum(x, g * keep))
    return out


def embedding_lookup(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows; the backward pass scatter-adds only into used rows."""
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding index out of range for table with {table.data.shape[0]} rows"
        )
    out = Tensor(table.data[indices], dtype=table.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            dim = table.data.shape[1]
            kernels.scatter_add_rows(
                table.grad,
                indices.reshape(-1).astype(np.int64),
                np.ascontiguousarray(g.reshape(-1, dim)),
            )

        tape.append(out, bwd)
    return out


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              w: Tensor, u: Tensor, b: Tensor):
    """One LSTM cell update: gates from (x, h_prev), then
    c = f*c_prev + i*g and h = o*tanh(c).  Gate weights are packed
    [i | f | o | g] along the last axis of w, u, b."""
    squeeze = x.data.ndim == 1
    xd = x.data[None] if squeeze else x.data
    hd = h_prev.data[None] if squeeze else h_prev.data
    cd = c_prev.data[None] if squeeze else c_prev.data
    h_new, c_new, gates = kernels.lstm_cell_forward(xd, hd, cd, w.data, u.data, b.data)
    out_h = Tensor(h_new[0] if squeeze else h_new, dtype=x.data.dtype)
    out_c = Tensor(c_new[0] if squeeze else c_new, dtype=x.data.dtype)
    tape = _tape()
    if tape is not None:
        state = {"gh": None, "gc": None, "fired": False}

        def run(g_h, g_c):
            gx, ghp, gcp, gw, gu, gb = kernels.lstm_cell_backward(
                xd, hd, cd, w.data, u.data, gates, c_new, g_h, g_c
            )
            _accum(x, gx[0] if squeeze else gx)
            _accum(h_prev, ghp[0] if squeeze else ghp)
            _accum(c_prev, gcp[0] if squeeze else gcp)
            _accum(w, gw)
            _accum(u, gu)
            _accum(b, gb)

        # h and c are two outputs of one fused node; whichever is visited
        # first on the reverse sweep performs the joint backward, reading
        # the sibling's gradient (already final, since it can only be
        # consumed by ops recorded later in the tape).
        def bwd_h(g):
            if state["fired"]:
                return
            state["fired"] = True
            gc = out_c.grad if out_c.grad is not None else np.zeros_like(c_new)
            run(np.ascontiguousarray(g[None] if squeeze else g),
                np.ascontiguousarray(gc[None] if squeeze and gc.ndim == 1 else gc))

        def bwd_c(g):
            if state["fired"]:
                return
            state["fired"] = True
            gh = out_h.grad if out_h.grad is not None else np.zeros_like(h_new)
            run(np.ascontiguousarray(gh[None] if squeeze and gh.ndim == 1 else gh),
                np.ascontiguousarray(g[None] if squeeze else g))

        tape.append(out_h, bwd_h)
        tape.append(out_c, bwd_c)
    return out_h, out_c


def gaussian_sample(mu: Tensor, logvar: Tensor, rng: SeededRng) -> Tensor:
    """Reparameterized draw z = mu + exp(logvar/2) * eps, eps ~ N(0, I);
    the gradient flows into mu and logvar, never into eps."""
    if mu.data.shape != logvar.data.shape:
        raise ShapeError(f"mu {mu.data.shape} and logvar {logvar.data.shape} differ")
    eps = rng.normal(mu.data.shape, dtype=mu.data.dtype)
    std = np.exp(0.5 * logvar.data)
    out = Tensor(mu.data + std * eps, dtype=mu.data.dtype)
    tape = _tape()
    if tape is not None:

        def bwd(g):
            _accum(mu, g)
            _accum(logvar, g * 0.5 * std * eps)

        tape.append(out, bwd)
    return out


def kl_gaussian(mu: Tensor, logvar: Tensor) -> Tensor:
    """Closed-form KL(N(mu, exp(logvar)) || N(0, I)), summed over the last
    axis; a vector input yields a scalar, a batch yields per-row values."""
    if mu.data.shape != logvar.data.shape:
        raise ShapeError(f"mu {mu.data.shape} and logvar {logvar.data.shape} differ")
    ev = np.exp(logvar.data)
    out = Tensor(
        -0.5 * (1.0 + logvar.data - mu.data**2 - ev).sum(axis=-1),
        dtype=mu.data.dtype,
    )
    tape = _tape()
    if tape is not None:

        def bwd(g):
            ge = np.expand_dims(g, -1)
            _accum(mu, ge * mu.data)
            _accum(logvar, ge * 0.5 * (ev - 1.0))

        tape.append(out, bwd)
    return out
