"""Differentiable operations.

Every op takes and returns Tensors, computes eagerly with numpy, and records
its adjoint closure on the active tape (see tape.py).  Shapes are handled
generically over leading batch axes; broadcasting support is limited to what
the model needs (trailing-axis alignment and size-1 axes), with gradients
reduced back to the operand shape.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidRate, NearZeroNorm
from .tape import Tensor, accumulate, active_tape, record

NORM_GUARD = 1e-6  # below this, normalization refuses to divide


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    """Reduce gradient g (broadcast shape) back to the operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    if active_tape() is not None:
        sa, sb = a.data.shape, b.data.shape

        def back(g):
            accumulate(a, _unbroadcast(g, sa))
            accumulate(b, _unbroadcast(g, sb))

        record(out, back)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)
    if active_tape() is not None:
        sa, sb = ad.shape, bd.shape

        def back(g):
            accumulate(a, _unbroadcast(g * bd, sa))
            accumulate(b, _unbroadcast(g * ad, sb))

        record(out, back)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a plain (non-differentiated) scalar."""
    out = Tensor(a.data * c)
    if active_tape() is not None:

        def back(g):
            accumulate(a, g * c)

        record(out, back)
    return out


def matmul(x: Tensor, m: Tensor) -> Tensor:
    """x @ m with x of shape (..., n) and m of shape (n, p)."""
    xd, md = x.data, m.data
    n = md.shape[0]
    x2 = xd.reshape(-1, n)
    out = Tensor((x2 @ md).reshape(xd.shape[:-1] + (md.shape[1],)))
    if active_tape() is not None:

        def back(g):
            g2 = g.reshape(-1, md.shape[1])
            accumulate(x, (g2 @ md.T).reshape(xd.shape))
            accumulate(m, x2.T @ g2)

        record(out, back)
    return out


def linear(x: Tensor, w: Tensor) -> Tensor:
    """x @ w.T with x of shape (..., n) and w of shape (p, n) (rows = outputs)."""
    xd, wd = x.data, w.data
    n = wd.shape[1]
    x2 = xd.reshape(-1, n)
    out = Tensor((x2 @ wd.T).reshape(xd.shape[:-1] + (wd.shape[0],)))
    if active_tape() is not None:

        def back(g):
            g2 = g.reshape(-1, wd.shape[0])
            accumulate(x, (g2 @ wd).reshape(xd.shape))
            accumulate(w, g2.T @ x2)

        record(out, back)
    return out


def sum_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    xd = x.data
    out = Tensor(xd.sum(axis=axis, keepdims=keepdims))
    if active_tape() is not None:
        ax = axis % xd.ndim

        def back(g):
            if not keepdims:
                g = np.expand_dims(g, ax)
            accumulate(x, np.broadcast_to(g, xd.shape))

        record(out, back)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    xd = x.data
    out = Tensor(xd.reshape(shape))
    if active_tape() is not None:

        def back(g):
            accumulate(x, g.reshape(xd.shape))

        record(out, back)
    return out


def expand_dims(x: Tensor, axis: int) -> Tensor:
    xd = x.data
    out = Tensor(np.expand_dims(xd, axis))
    if active_tape() is not None:

        def back(g):
            accumulate(x, g.reshape(xd.shape))

        record(out, back)
    return out


def clone(x: Tensor) -> Tensor:
    """Differentiable copy (fresh buffer, gradient passes through)."""
    out = Tensor(x.data.copy())
    if active_tape() is not None:

        def back(g):
            accumulate(x, g)

        record(out, back)
    return out


def gather_rows(table: Tensor, indices) -> Tensor:
    """table[indices] for an integer index array of any shape.

    Output shape is indices.shape + (row_width,).  The adjoint scatter-adds
    into the table rows, so repeated indices accumulate.
    """
    idx = np.asarray(indices)
    td = table.data
    out = Tensor(td[idx])
    if active_tape() is not None:
        flat_idx = idx.reshape(-1)
        width = td.shape[1]

        def back(g):
            if table.grad is None:
                table.grad = np.zeros_like(td)
            np.add.at(table.grad, flat_idx, g.reshape(-1, width))

        record(out, back)
    return out


def slice_step(x: Tensor, t: int) -> Tensor:
    """Select step t from a (..., T, d) stack laid out as x[:, t, :]."""
    xd = x.data
    out = Tensor(xd[:, t, :])
    if active_tape() is not None:

        def back(g):
            if x.grad is None:
                x.grad = np.zeros_like(xd)
            x.grad[:, t, :] += g

        record(out, back)
    return out


def sigmoid(x: Tensor) -> Tensor:
    # tanh form saturates cleanly on both tails without overflow warnings
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    out = Tensor(y)
    if active_tape() is not None:

        def back(g):
            accumulate(x, g * y * (1.0 - y))

        record(out, back)
    return out


def prelu(x: Tensor, slopes: Tensor) -> Tensor:
    """x where x >= 0, slope * x elsewhere; slopes broadcast on the last axis."""
    xd, sd = x.data, slopes.data
    neg = xd < 0
    out = Tensor(np.where(neg, xd * sd, xd))
    if active_tape() is not None:

        def back(g):
            accumulate(x, np.where(neg, g * sd, g))
            accumulate(slopes, _unbroadcast(np.where(neg, g * xd, 0.0), sd.shape))

        record(out, back)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    z = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)
    if active_tape() is not None:

        def back(g):
            accumulate(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))

        record(out, back)
    return out


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Project onto the unit sphere along `axis`.

    Raises NearZeroNorm if any vector's norm is at or below the guard; a
    degenerate memory state should fail loudly rather than silently.
    """
    xd = x.data
    n = np.sqrt((xd * xd).sum(axis=axis, keepdims=True))
    if np.any(n <= NORM_GUARD):
        raise NearZeroNorm(f"norm {float(n.min()):.3e} <= {NORM_GUARD:.0e}")
    y = xd / n
    out = Tensor(y)
    if active_tape() is not None:

        def back(g):
            accumulate(x, (g - y * (g * y).sum(axis=axis, keepdims=True)) / n)

        record(out, back)
    return out


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate); identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout requires an rng")
    xd = x.data
    mask = (rng.random(xd.shape) >= rate).astype(xd.dtype) / (1.0 - rate)
    out = Tensor(xd * mask)
    if active_tape() is not None:

        def back(g):
            accumulate(x, g * mask)

        record(out, back)
    return out


def cross_entropy_logits(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer targets under softmax(logits).

    Fused log-softmax keeps the forward stable and the adjoint cheap:
    d/dlogits = (softmax - onehot) / batch.
    """
    ld = logits.data
    t = np.asarray(targets)
    n = ld.shape[0]
    z = ld - ld.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(n), t].mean()
    out = Tensor(np.asarray(loss, dtype=ld.dtype))
    if active_tape() is not None:

        def back(g):
            p = np.exp(logp)
            p[np.arange(n), t] -= 1.0
            accumulate(logits, p * (g / n))

        record(out, back)
    return out
