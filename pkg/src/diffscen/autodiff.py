"""Minimal dense-tensor math with a reverse-mode tape.

Everything is float64. Tensors are plain numpy buffers plus an optional
gradient buffer; differentiable ops record a backward closure on a Tape,
and ``backward`` replays the tape in reverse. Broadcasting is deliberately
restricted to per-channel vectors against (channels, length) maps, which
is all the network needs.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "add",
    "mul",
    "scale",
    "tanh",
    "sigmoid",
    "swish",
    "broadcast_len",
    "reshape",
    "dense",
    "conv1d_dilated",
    "mse",
    "backward",
    "finite_diff_check",
]


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class Tensor:
    """Dense float64 array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, param: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor initialized with non-finite values")
        self.data = arr
        self.grad: np.ndarray | None = np.zeros_like(arr) if param else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'yes' if self.grad is not None else 'no'})"


class Tape:
    """Ordered record of executed ops; replayed once, in reverse, by backward."""

    __slots__ = ("records",)

    def __init__(self):
        # each record: (out, backward_fn); backward_fn reads out.grad
        self.records: list[tuple[Tensor, object]] = []

    def record(self, out: Tensor, backward_fn) -> None:
        self.records.append((out, backward_fn))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# elementwise


def _finish(tape: Tape | None, data: np.ndarray, bwd) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if tape is not None:
        tape.record(out, bwd)
    return out


def add(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """a + b; b may be a per-channel vector broadcast along length."""
    if a.data.shape == b.data.shape:
        def bwd(out):
            g = out.grad
            _accum(a, g)
            _accum(b, g)
        return _finish(tape, a.data + b.data, bwd)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[0] == b.data.shape[0]:
        def bwd(out):
            g = out.grad
            _accum(a, g)
            _accum(b, g.sum(axis=1))
        return _finish(tape, a.data + b.data[:, None], bwd)
    raise ShapeError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")


def mul(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def bwd(out):
        g = out.grad
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _finish(tape, a.data * b.data, bwd)


def scale(tape: Tape | None, x: Tensor, alpha: float) -> Tensor:
    alpha = float(alpha)

    def bwd(out):
        _accum(x, out.grad * alpha)

    return _finish(tape, x.data * alpha, bwd)


def tanh(tape: Tape | None, x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bwd(out):
        _accum(x, out.grad * (1.0 - y * y))

    return _finish(tape, y, bwd)


def sigmoid(tape: Tape | None, x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    pos = x.data >= 0
    e = np.exp(np.where(pos, -x.data, x.data))
    y = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))

    def bwd(out):
        _accum(x, out.grad * y * (1.0 - y))

    return _finish(tape, y, bwd)


def swish(tape: Tape | None, x: Tensor) -> Tensor:
    """x * sigmoid(x), the embedding-path nonlinearity."""
    return mul(tape, x, sigmoid(tape, x))


def broadcast_len(tape: Tape | None, v: Tensor, length: int) -> Tensor:
    """Tile a per-channel vector (C,) into a constant (C, length) map."""
    if v.data.ndim != 1:
        raise ShapeError(f"broadcast_len: expected 1-d vector, got shape {v.data.shape}")

    def bwd(out):
        _accum(v, out.grad.sum(axis=1))

    return _finish(tape, np.repeat(v.data[:, None], length, axis=1), bwd)


def reshape(tape: Tape | None, x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.data.shape

    def bwd(out):
        _accum(x, out.grad.reshape(old))

    return _finish(tape, x.data.reshape(shape).copy(), bwd)


# ---------------------------------------------------------------------------
# linear maps


def dense(tape: Tape | None, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = w @ x + b for a vector x."""
    if x.data.ndim != 1 or w.data.ndim != 2 or w.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"dense: w {w.data.shape} does not apply to x {x.data.shape}")
    if b.data.shape != (w.data.shape[0],):
        raise ShapeError(f"dense: bias {b.data.shape} does not match output size {w.data.shape[0]}")

    def bwd(out):
        g = out.grad
        _accum(x, w.data.T @ g)
        _accum(w, np.outer(g, x.data))
        _accum(b, g)

    return _finish(tape, w.data @ x.data + b.data, bwd)


def conv1d_dilated(tape: Tape | None, x: Tensor, w: Tensor, b: Tensor, dilation: int) -> Tensor:
    """Length-preserving dilated cross-correlation with symmetric zero padding.

    x: (channels_in, length), w: (channels_out, channels_in, kernel),
    b: (channels_out,). Kernel size must be odd; padding is
    (kernel - 1) / 2 * dilation on each side.
    """
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ShapeError(f"conv1d: x must be 2-d and w 3-d, got {x.data.shape} and {w.data.shape}")
    c_out, c_in, k = w.data.shape
    if x.data.shape[0] != c_in:
        raise ShapeError(f"conv1d: x has {x.data.shape[0]} channels but w expects {c_in}")
    if k % 2 == 0:
        raise ShapeError(f"conv1d: kernel size must be odd, got {k}")
    if b.data.shape != (c_out,):
        raise ShapeError(f"conv1d: bias {b.data.shape} does not match output channels {c_out}")
    if dilation < 1:
        raise ValueError(f"conv1d: dilation must be positive, got {dilation}")

    length = x.data.shape[1]
    pad = (k - 1) // 2 * dilation
    xp = np.zeros((c_in, length + 2 * pad))
    xp[:, pad:pad + length] = x.data

    y = np.repeat(b.data[:, None], length, axis=1)
    for tap in range(k):
        y += w.data[:, :, tap] @ xp[:, tap * dilation:tap * dilation + length]

    def bwd(out):
        g = out.grad
        gxp = np.zeros_like(xp)
        for tap in range(k):
            seg = xp[:, tap * dilation:tap * dilation + length]
            _accum_slice_w(w, tap, g @ seg.T)
            gxp[:, tap * dilation:tap * dilation + length] += w.data[:, :, tap].T @ g
        _accum(x, gxp[:, pad:pad + length])
        _accum(b, g.sum(axis=1))

    return _finish(tape, y, bwd)


def _accum_slice_w(w: Tensor, tap: int, g: np.ndarray) -> None:
    if w.grad is None:
        w.grad = np.zeros_like(w.data)
    w.grad[:, :, tap] += g


# ---------------------------------------------------------------------------
# loss and backward


def mse(tape: Tape | None, pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared elementwise differences (mean, not sum)."""
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"mse: shapes {pred.data.shape} and {target.data.shape} differ")
    diff = pred.data - target.data
    n = diff.size

    def bwd(out):
        g = float(out.grad) * 2.0 / n
        _accum(pred, g * diff)
        _accum(target, -g * diff)

    return _finish(tape, np.float64(np.mean(diff * diff)), bwd)


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate grads of every tensor that fed the scalar loss."""
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for out, bwd in reversed(tape.records):
        if out.grad is not None:
            bwd(out)


def finite_diff_check(f, params, step: float = 1e-5) -> float:
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` maps a fresh Tape to a scalar Tensor and must be deterministic
    (freeze any randomness before calling). Returns the max over all
    parameter coordinates of |analytic - central| / max(|analytic|,
    |central|, 1e-8).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    tape = Tape()
    loss = f(tape)
    if loss.data.shape != ():
        raise ShapeError("finite_diff_check: f must return a scalar")
    backward(loss, tape)
    analytic = [p.grad.copy() for p in params]

    max_rel = 0.0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            up = float(f(Tape()).data)
            flat[i] = saved - step
            down = float(f(Tape()).data)
            flat[i] = saved
            if not (np.isfinite(up) and np.isfinite(down)):
                raise ValueError("finite_diff_check: non-finite evaluation during probing")
            numeric = (up - down) / (2.0 * step)
            rel = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-8)
            if rel > max_rel:
                max_rel = rel
    return max_rel
