"""Optimizer steps and gradient utilities.

These act in place on Parameter objects whose .grad was populated by a
backward pass.  Optimizer state (first/second moments, step counter) lives on
the parameters themselves.
"""

from __future__ import annotations

import math

import numpy as np

from .tape import Parameter


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return math.sqrt(total)


def clip_global_norm(params, threshold: float = 40.0) -> float:
    """Rescale all gradients so their joint L2 norm is at most `threshold`.

    Returns the pre-clip norm (handy for logging).
    """
    norm = global_grad_norm(params)
    if norm > threshold:
        factor = threshold / norm
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Bias-corrected ADAM update, applied in place."""
    for p in params:
        if p.grad is None:
            continue
        g = p.grad
        if p.moment1 is None:
            p.moment1 = np.zeros_like(p.data)
            p.moment2 = np.zeros_like(p.data)
        p.steps += 1
        t = p.steps
        p.moment1 += (1.0 - beta1) * (g - p.moment1)
        p.moment2 += (1.0 - beta2) * (g * g - p.moment2)
        m_hat = p.moment1 / (1.0 - beta1 ** t)
        v_hat = p.moment2 / (1.0 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def sgd_step(params, lr: float) -> None:
    for p in params:
        if p.grad is not None:
            p.data -= lr * p.grad


def zero_gradients(params) -> None:
    for p in params:
        p.grad = None


def reset_optimizer_state(params) -> None:
    for p in params:
        if isinstance(p, Parameter):
            p.moment1 = None
            p.moment2 = None
            p.steps = 0
