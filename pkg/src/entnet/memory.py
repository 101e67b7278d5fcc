"""The dynamic memory: m slot vectors updated in parallel by gated writes.

Each slot j holds a content vector h_j and a key vector w_j.  For an encoded
input s, a scalar gate per slot opens on content match (s.h_j) plus key match
(s.w_j); the slot then absorbs a candidate vector built from its content, its
key and the input.  Slots never interact with each other inside a step, and
the cell weights are shared across all slots.

Two variants are supported:

* general     - candidate = phi(h U + w V + s W) with trainable d x d kernels
                and phi either a per-unit parametric ReLU or the identity;
                slots are re-normalized onto the unit sphere after each write
                (which is what lets old information decay).
* simplified  - the kernels collapse to h-term 0, key-term 0, input-term
                identity, phi is the identity and the normalization step is
                dropped, so a step is exactly h_j + g_j * s.

All functions are shape-generic: slots may be (m, d) or carry leading batch
axes (..., m, d), and inputs (d,) or (..., d).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import DimensionMismatch
from .numerics import (
    Tensor,
    add,
    clone,
    expand_dims,
    l2_normalize,
    matmul,
    mul,
    prelu,
    sigmoid,
    sum_axis,
)

VARIANTS = ("general", "simplified")
PHI_CHOICES = ("prelu", "identity")


@dataclass
class MemoryConfig:
    """Slot-bank configuration.

    The simplified variant forces phi="identity" and normalize=False (its
    defining reduction); constructing it with anything else is an error.
    """

    slots: int
    dim: int
    variant: str = "general"
    phi: str = "prelu"
    normalize: bool = True
    keys_tied: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.phi not in PHI_CHOICES:
            raise ValueError(f"unknown phi {self.phi!r}")
        if self.variant == "simplified":
            if self.phi != "identity" or self.normalize:
                raise ValueError(
                    "simplified variant requires phi='identity' and normalize=False"
                )

    @classmethod
    def general(cls, slots, dim, phi="prelu", normalize=True, keys_tied=False):
        return cls(slots, dim, "general", phi, normalize, keys_tied)

    @classmethod
    def simplified(cls, slots, dim, keys_tied=False):
        return cls(slots, dim, "simplified", "identity", False, keys_tied)


@dataclass
class CellWeights:
    """Kernels shared by every slot (absent in the simplified variant).

    state_kernel multiplies the slot content, key_kernel the slot key,
    input_kernel the encoded input; slopes are the per-unit negative-side
    slopes of the parametric ReLU (None when phi is the identity).
    """

    state_kernel: Tensor
    key_kernel: Tensor
    input_kernel: Tensor
    slopes: Optional[Tensor] = None


@dataclass
class MemoryState:
    """Slot contents plus their keys; the model's trackable world state."""

    slots: Tensor   # (..., m, d)
    keys: Tensor    # (m, d) or (..., m, d)


def init_state(keys: Tensor) -> MemoryState:
    """Start every slot at its key value (a copy, so slots evolve freely)."""
    if keys.data.ndim < 2:
        raise DimensionMismatch("keys must have shape (..., slots, dim)")
    return MemoryState(slots=clone(keys), keys=keys)


def _check_feature_dim(s: Tensor, state: MemoryState) -> None:
    d = state.slots.data.shape[-1]
    if s.data.shape[-1] != d or state.keys.data.shape[-1] != d:
        raise DimensionMismatch(
            f"input dim {s.data.shape[-1]} vs slot dim {d} "
            f"vs key dim {state.keys.data.shape[-1]}"
        )


def gate(s_gate: Tensor, state: MemoryState) -> Tensor:
    """Per-slot scalar gates in (0,1): sigmoid(s.h_j + s.w_j).

    The content term opens slots whose stored vector matches the input; the
    location term opens slots whose key matches.  Slots are gated
    independently; there is no competition across slots.
    """
    _check_feature_dim(s_gate, state)
    s_e = expand_dims(s_gate, -2)                       # (..., 1, d)
    content = sum_axis(mul(s_e, state.slots), axis=-1)  # (..., m)
    location = sum_axis(mul(s_e, state.keys), axis=-1)
    return sigmoid(add(content, location))


def candidate(s_update: Tensor, state: MemoryState, weights: Optional[CellWeights],
              config: MemoryConfig) -> Tensor:
    """New-content proposal per slot.

    Returns a tensor broadcastable against the slot stack: (..., m, d) in the
    general variant, (..., 1, d) in the simplified variant (where the
    candidate is the input itself, identical for every slot).
    """
    _check_feature_dim(s_update, state)
    if config.variant == "simplified":
        return expand_dims(s_update, -2)
    if weights is None:
        raise DimensionMismatch("general variant requires cell weights")
    pre = add(
        add(matmul(state.slots, weights.state_kernel),
            matmul(state.keys, weights.key_kernel)),
        expand_dims(matmul(s_update, weights.input_kernel), -2),
    )
    if config.phi == "prelu":
        return prelu(pre, weights.slopes)
    return pre


def step(s_gate: Tensor, s_update: Tensor, state: MemoryState,
         weights: Optional[CellWeights], config: MemoryConfig) -> MemoryState:
    """One write: h_j <- h_j + g_j * candidate_j, then optional renorm.

    Keys are returned untouched; they only change through learning.
    """
    g = gate(s_gate, state)
    cand = candidate(s_update, state, weights, config)
    new_slots = add(state.slots, mul(expand_dims(g, -1), cand))
    if config.normalize:
        new_slots = l2_normalize(new_slots, axis=-1)
    return MemoryState(slots=new_slots, keys=state.keys)


def run_story(inputs: Sequence, keys: Tensor, weights: Optional[CellWeights],
              config: MemoryConfig, record: bool = False):
    """Fold a sequence of encoded inputs into a final memory state.

    Each item of `inputs` is either a single encoded vector (used for both
    the gate and the update) or an (s_gate, s_update) pair.  With
    record=True, also returns the list of per-step states (after each write),
    which costs O(T * m * d) memory and is needed for slot inspection and
    backpropagation through time diagnostics.
    """
    state = init_state(keys)
    states = []
    for item in inputs:
        if isinstance(item, tuple):
            s_g, s_u = item
        else:
            s_g = s_u = item
        state = step(s_g, s_u, state, weights, config)
        if record:
            states.append(state)
    if record:
        return state, states
    return state
