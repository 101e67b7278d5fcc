"""Reverse-mode differentiation tape over dense numpy arrays.

The design is define-by-run: every op executed while a Tape is active appends
its output node (with a closure that propagates adjoints to its inputs) to the
tape, so the recording order is already a topological order.  backward() walks
the record in exact reverse, seeds the loss with 1, accumulates adjoints
additively, and frees intermediate gradient buffers as soon as they have been
propagated.  A tape is consumed by backward(); replaying it without a fresh
forward pass raises DoubleBackward.

With no tape active, ops run forward-only (inference mode) at reduced cost.
"""

from __future__ import annotations

import numpy as np

from ..errors import DoubleBackward

_ACTIVE: "Tape | None" = None


class Tensor:
    """A dense array plus an adjoint slot and a backward closure."""

    __slots__ = ("data", "grad", "_back")

    def __init__(self, data):
        self.data = data
        self.grad = None
        self._back = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """A trainable leaf tensor with persistent gradient and optimizer slots.

    `moment1`/`moment2` are allocated lazily by the ADAM step; `steps` counts
    optimizer updates applied to this parameter.
    """

    __slots__ = ("name", "moment1", "moment2", "steps")

    def __init__(self, data, name=""):
        super().__init__(data)
        self.name = name
        self.moment1 = None
        self.moment2 = None
        self.steps = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tape:
    """Ordered record of forward operations, usable as a context manager."""

    __slots__ = ("_nodes", "_spent")

    def __init__(self):
        self._nodes = []
        self._spent = False

    def __enter__(self):
        global _ACTIVE
        if _ACTIVE is not None:
            raise RuntimeError("a tape is already recording")
        _ACTIVE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE
        _ACTIVE = None
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(node) to every recorded node and leaf.

        Gradients accumulate additively, so parameters reused across time
        steps collect contributions from every step.  Intermediate buffers
        are released as soon as their adjoint has been pushed upstream.
        """
        if self._spent:
            raise DoubleBackward("tape already consumed; record a new forward pass")
        self._spent = True
        if loss.data.size != 1:
            raise ValueError("backward requires a scalar loss node")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            if node.grad is None or node._back is None:
                continue
            node._back(node.grad)
            if not isinstance(node, Parameter):
                node.grad = None
            node._back = None
        self._nodes = []


def active_tape():
    return _ACTIVE


def record(out: Tensor, back) -> None:
    """Attach a backward closure to `out` if a tape is recording."""
    if _ACTIVE is not None:
        out._back = back
        _ACTIVE._nodes.append(out)


def accumulate(t: Tensor, g) -> None:
    """Add an adjoint contribution to t.grad (allocating on first use)."""
    if t.grad is None:
        t.grad = np.array(g)
    else:
        t.grad += g


def backward(tape: Tape, loss: Tensor) -> None:
    """Module-level alias for Tape.backward."""
    tape.backward(loss)
