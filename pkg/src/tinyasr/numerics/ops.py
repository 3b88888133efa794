"""Differentiable primitives.

Each function computes its forward value with numpy and, when any input
requires gradients and a tape is active, records a closure mapping the output
gradient back onto the inputs. Closures never mutate gradient arrays in
place; they hand fresh (or aliasable) arrays to ``accumulate``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError
from .tensor import OpRecord, Tensor, accumulate, active_tape


def make_node(data, parents, backprop) -> Tensor:
    """Wrap ``data`` as the single output of an op with the given backward."""
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        tape = active_tape()
        if tape is not None:
            tape._records.append(OpRecord((out,), backprop))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow for large negative inputs
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(gs, grads):
        g = gs[0]
        accumulate(grads, a, _unbroadcast(g, a.data.shape))
        accumulate(grads, b, _unbroadcast(g, b.data.shape))

    return make_node(a.data + b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(gs, grads):
        g = gs[0]
        accumulate(grads, a, _unbroadcast(g * b.data, a.data.shape))
        accumulate(grads, b, _unbroadcast(g * a.data, b.data.shape))

    return make_node(a.data * b.data, (a, b), bwd)


def scale(a: Tensor, factor: float) -> Tensor:
    f = float(factor)

    def bwd(gs, grads):
        accumulate(grads, a, gs[0] * f)

    return make_node(a.data * f, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(gs, grads):
        accumulate(grads, a, np.full(a.data.shape, gs[0]))

    return make_node(np.asarray(a.data.sum()), (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    def bwd(gs, grads):
        g = gs[0]
        accumulate(grads, a, g @ b.data.T)
        accumulate(grads, b, a.data.T @ g)

    return make_node(a.data @ b.data, (a, b), bwd)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map: out[i, j] = sum_k x[i, k] w[k, j] + b[j]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"linear: bias {b.shape} does not match weight {w.shape}")
    data = x.data @ w.data + b.data

    def bwd(gs, grads):
        g = gs[0]
        accumulate(grads, x, g @ w.data.T)
        accumulate(grads, w, x.data.T @ g)
        accumulate(grads, b, g.sum(axis=0))

    return make_node(data, (x, w, b), bwd)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by max subtraction."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(gs, grads):
        g = gs[0]
        dot = (g * y).sum(axis=-1, keepdims=True)
        accumulate(grads, x, (g - dot) * y)

    return make_node(y, (x,), bwd)


def elementwise(x: Tensor, kind: str) -> Tensor:
    """Pointwise nonlinearity, kind in {"tanh", "sigmoid"}."""
    if kind == "tanh":
        y = np.tanh(x.data)
        deriv = 1.0 - y * y
    elif kind == "sigmoid":
        y = _sigmoid(x.data)
        deriv = y * (1.0 - y)
    else:
        raise ContractError(f"unknown elementwise kind {kind!r}")

    def bwd(gs, grads):
        accumulate(grads, x, gs[0] * deriv)

    return make_node(y, (x,), bwd)


def conv1d_frames(a: Tensor, filters: Tensor) -> Tensor:
    """Same-length 1-D convolution of a over each filter row.

    a has shape [L]; filters has shape [num_filters, width]. The input is
    zero-padded symmetrically (one extra zero on the left for even widths) so
    out[l, f] agrees with numpy.convolve(a, filters[f], mode="same").
    """
    if a.ndim != 1 or a.size < 1:
        raise DimensionError(f"conv1d_frames: input must be a non-empty vector, got shape {a.shape}")
    if filters.ndim != 2 or filters.shape[1] < 1:
        raise DimensionError(f"conv1d_frames: filters must be [num_filters, width>=1], got {filters.shape}")
    length = a.size
    width = filters.shape[1]
    pad_right = (width - 1) // 2
    pad_left = width - 1 - pad_right
    padded = np.zeros(length + width - 1, dtype=a.data.dtype)
    padded[pad_left:pad_left + length] = a.data
    windows = np.lib.stride_tricks.sliding_window_view(padded, width)  # [L, width]
    flipped = filters.data[:, ::-1]
    data = windows @ flipped.T

    def bwd(gs, grads):
        g = gs[0]
        if filters.requires_grad:
            accumulate(grads, filters, (g.T @ windows)[:, ::-1])
        if a.requires_grad:
            dwin = g @ flipped
            dpad = np.zeros_like(padded)
            for j in range(width):
                dpad[j:j + length] += dwin[:, j]
            accumulate(grads, a, dpad[pad_left:pad_left + length])

    return make_node(data, (a, filters), bwd)


def transpose(x: Tensor) -> Tensor:
    def bwd(gs, grads):
        accumulate(grads, x, gs[0].T)

    return make_node(x.data.T, (x,), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def bwd(gs, grads):
        accumulate(grads, x, gs[0].reshape(x.data.shape))

    return make_node(x.data.reshape(shape), (x,), bwd)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise DimensionError(f"concat_cols: {a.shape} vs {b.shape}")
    na = a.shape[1]

    def bwd(gs, grads):
        g = gs[0]
        accumulate(grads, a, g[:, :na])
        accumulate(grads, b, g[:, na:])

    return make_node(np.concatenate([a.data, b.data], axis=1), (a, b), bwd)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    def bwd(gs, grads):
        g = np.zeros_like(x.data)
        g[start:stop] = gs[0]
        accumulate(grads, x, g)

    return make_node(x.data[start:stop], (x,), bwd)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    def bwd(gs, grads):
        g = np.zeros_like(x.data)
        g[:, start:stop] = gs[0]
        accumulate(grads, x, g)

    return make_node(x.data[:, start:stop], (x,), bwd)


def subsample_rows(x: Tensor, factor: int) -> Tensor:
    """Keep rows 0, factor, 2*factor, ..."""
    if factor < 1:
        raise ContractError(f"subsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x

    def bwd(gs, grads):
        g = np.zeros_like(x.data)
        g[::factor] = gs[0]
        accumulate(grads, x, g)

    return make_node(x.data[::factor], (x,), bwd)


def stack_rows(rows) -> Tensor:
    """Concatenate [1 x d] rows into [n x d]."""
    rows = list(rows)
    if not rows:
        raise DimensionError("stack_rows needs at least one row")
    data = np.concatenate([r.data for r in rows], axis=0)

    def bwd(gs, grads):
        g = gs[0]
        for i, r in enumerate(rows):
            accumulate(grads, r, g[i:i + 1])

    return make_node(data, tuple(rows), bwd)


def embed(table: Tensor, index: int) -> Tensor:
    """Look up one row of an embedding table, as a [1 x d] tensor."""
    idx = int(index)
    if not 0 <= idx < table.shape[0]:
        raise ContractError(f"embedding index {idx} out of range [0, {table.shape[0]})")

    def bwd(gs, grads):
        g = np.zeros_like(table.data)
        g[idx] = gs[0][0]
        accumulate(grads, table, g)

    return make_node(table.data[idx:idx + 1], (table,), bwd)


def cross_entropy_sum(logits: Tensor, targets) -> Tensor:
    """Sum over rows of -log softmax(logits)[i, targets[i]]."""
    t = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or t.ndim != 1 or t.size != logits.shape[0]:
        raise DimensionError(f"cross_entropy_sum: logits {logits.shape} vs {t.size} targets")
    if t.size and ((t < 0).any() or (t >= logits.shape[1]).any()):
        raise ContractError("cross_entropy_sum: target index out of range")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(t.size)
    data = np.asarray(-logp[rows, t].sum())

    def bwd(gs, grads):
        d = np.exp(logp)
        d[rows, t] -= 1.0
        accumulate(grads, logits, d * gs[0])

    return make_node(data, (logits,), bwd)


def lstm_gates(gates: Tensor, c_prev: Tensor):
    """Apply LSTM gate nonlinearities to pre-activations laid out [i|f|o|g].

    Returns (h, c). Both outputs share one tape record so the backward pass
    handles reuse of the cell state across time steps.
    """
    if gates.ndim != 2 or gates.shape[1] % 4 != 0:
        raise DimensionError(f"lstm_gates: pre-activations must be [n, 4h], got {gates.shape}")
    h_size = gates.shape[1] // 4
    if c_prev.shape != (gates.shape[0], h_size):
        raise DimensionError(f"lstm_gates: cell state {c_prev.shape} does not match gates {gates.shape}")
    raw = gates.data
    i = _sigmoid(raw[:, :h_size])
    f = _sigmoid(raw[:, h_size:2 * h_size])
    o = _sigmoid(raw[:, 2 * h_size:3 * h_size])
    g_in = np.tanh(raw[:, 3 * h_size:])
    c = f * c_prev.data + i * g_in
    tc = np.tanh(c)
    rg = gates.requires_grad or c_prev.requires_grad
    h_out = Tensor(o * tc, requires_grad=rg)
    c_out = Tensor(c, requires_grad=rg)
    if rg:
        tape = active_tape()
        if tape is not None:
            def bwd(gs, grads):
                gh, gc = gs
                if gh is not None:
                    do = gh * tc
                    dc = gh * (o * (1.0 - tc * tc))
                    if gc is not None:
                        dc = dc + gc
                else:
                    do = np.zeros_like(o)
                    dc = gc if gc is not None else np.zeros_like(c)
                dgates = np.concatenate(
                    [
                        (dc * g_in) * i * (1.0 - i),
                        (dc * c_prev.data) * f * (1.0 - f),
                        do * o * (1.0 - o),
                        (dc * i) * (1.0 - g_in * g_in),
                    ],
                    axis=1,
                )
                accumulate(grads, gates, dgates)
                accumulate(grads, c_prev, dc * f)

            tape._records.append(OpRecord((h_out, c_out), bwd))
    return h_out, c_out


def batchnorm_time(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                   running_var: np.ndarray, training: bool, momentum: float = 0.9,
                   eps: float = 1e-5) -> Tensor:
    """Normalize a [T x d] sequence over the time axis, per feature dimension.

    Training mode uses the sequence's own statistics and folds them into the
    running buffers (plain arrays, mutated here); inference mode uses the
    frozen running statistics only.
    """
    if x.ndim != 2:
        raise DimensionError(f"batchnorm_time: expected [T, d], got {x.shape}")
    if training:
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running_mean[:] = momentum * running_mean + (1.0 - momentum) * mean
        running_var[:] = momentum * running_var + (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    data = xhat * gamma.data + beta.data

    def bwd(gs, grads):
        g = gs[0]
        accumulate(grads, gamma, (g * xhat).sum(axis=0))
        accumulate(grads, beta, g.sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            if training:
                dx = inv * (gx - gx.mean(axis=0) - xhat * (gx * xhat).mean(axis=0))
            else:
                dx = gx * inv
            accumulate(grads, x, dx)

    return make_node(data, (x, gamma, beta), bwd)
