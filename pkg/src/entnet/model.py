"""Full story reader: encoder + gated slot bank + query readout.

EntityNetwork owns every trainable parameter in a fixed registration order
(which is also the checkpoint order), builds the forward graph for a batch of
equal-length stories, and exposes loss / prediction entry points.  All the
math lives in the encoding, memory and output modules; this module only wires
them together according to a ModelConfig.

Key-handling modes:

* free keys           - keys are their own (m, d) parameter
* tied keys           - keys alias designated embedding rows (one entity word
                        per slot), so each slot is nameable by its word
* per-sample keys     - keys are gathered per question from that question's
                        candidate words (cloze-style reading), which makes
                        the attention over slots a distribution over the
                        candidates themselves
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import memory as mem
from . import output as out
from .encoding import NULL_INDEX, encode, encode_dual
from .errors import DimensionMismatch, UntiedKeys
from .memory import CellWeights, MemoryConfig
from .numerics import (
    Parameter,
    Tensor,
    cross_entropy_logits,
    gather_rows,
    slice_step,
)
from .output import OutputWeights

INIT_STD = 0.1


@dataclass
class ModelConfig:
    """Everything needed to build (or rebuild) a model, minus the weights."""

    vocab_size: int
    dim: int
    slots: int
    sentence_len: int
    query_len: int
    variant: str = "general"
    phi: str = "prelu"
    normalize: bool = True
    learned_masks: bool = True
    dual_encodings: bool = False
    tied_keys: Optional[tuple[int, ...]] = None
    per_sample_keys: bool = False
    direct_prediction: bool = False
    dropout: float = 0.0
    dtype: str = "float32"

    def __post_init__(self):
        if min(self.vocab_size, self.dim, self.slots,
               self.sentence_len, self.query_len) < 1:
            raise ValueError("sizes must all be at least 1")
        # delegate variant/phi/normalize consistency checks
        self.memory_config()
        if self.tied_keys is not None:
            self.tied_keys = tuple(int(i) for i in self.tied_keys)
            if self.per_sample_keys:
                raise ValueError("tied_keys and per_sample_keys are exclusive")
            if len(self.tied_keys) != self.slots:
                raise ValueError(
                    f"{len(self.tied_keys)} tied keys for {self.slots} slots"
                )
            for i in self.tied_keys:
                if not NULL_INDEX < i < self.vocab_size:
                    raise ValueError(f"tied key index {i} out of vocabulary range")
        if self.direct_prediction and self.tied_keys is None and not self.per_sample_keys:
            raise UntiedKeys(
                "direct prediction needs slot keys tied to candidate embeddings"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def memory_config(self) -> MemoryConfig:
        return MemoryConfig(
            slots=self.slots, dim=self.dim, variant=self.variant,
            phi=self.phi, normalize=self.normalize,
            keys_tied=self.tied_keys is not None or self.per_sample_keys,
        )

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["tied_keys"] = list(self.tied_keys) if self.tied_keys is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("tied_keys") is not None:
            d["tied_keys"] = tuple(d["tied_keys"])
        return cls(**d)


def parameter_count(config: ModelConfig) -> int:
    """Closed-form trainable-scalar count for a config.

    embedding |V|d; masks (story sets + query set) when learned; free keys
    m*d when untied; three d*d cell kernels (+ d slopes under prelu) in the
    general variant; combine d*d + decoder |V|d (+ d slopes) unless the
    answer is read directly off the attention.
    """
    v, d, m = config.vocab_size, config.dim, config.slots
    k, kq = config.sentence_len, config.query_len
    n = v * d
    if config.learned_masks:
        story_sets = 2 if config.dual_encodings else 1
        n += story_sets * k * d + kq * d
    if config.tied_keys is None and not config.per_sample_keys:
        n += m * d
    if config.variant == "general":
        n += 3 * d * d
        if config.phi == "prelu":
            n += d
    if not config.direct_prediction:
        n += d * d + v * d
        if config.phi == "prelu":
            n += d
    return n


class EntityNetwork:
    """Parameter container plus batched forward/loss/predict graph builders."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.params: dict[str, Parameter] = {}
        self.constants: list[Tensor] = []
        dt = np.dtype(config.dtype)

        def gauss(name, shape):
            p = Parameter(rng.normal(0.0, INIT_STD, shape).astype(dt), name=name)
            self.params[name] = p
            return p

        def ones(name, shape):
            p = Parameter(np.ones(shape, dtype=dt), name=name)
            self.params[name] = p
            return p

        v, d, m = config.vocab_size, config.dim, config.slots
        emb = gauss("encoder.embedding", (v, d))
        emb.data[NULL_INDEX] = 0.0

        def mask_set(name, rows):
            if config.learned_masks:
                return ones(name, (rows, d))
            t = Tensor(np.ones((rows, d), dtype=dt))
            self.constants.append(t)
            return t

        if config.dual_encodings:
            self.story_gate_masks = mask_set("encoder.story_gate_masks", config.sentence_len)
            self.story_update_masks = mask_set("encoder.story_update_masks", config.sentence_len)
        else:
            self.story_masks = mask_set("encoder.story_masks", config.sentence_len)
        self.query_masks = mask_set("encoder.query_masks", config.query_len)

        if config.tied_keys is None and not config.per_sample_keys:
            gauss("memory.keys", (m, d))

        if config.variant == "general":
            gauss("memory.state_kernel", (d, d))
            gauss("memory.key_kernel", (d, d))
            gauss("memory.input_kernel", (d, d))
            if config.phi == "prelu":
                ones("memory.slopes", (d,))

        if not config.direct_prediction:
            gauss("output.combine", (d, d))
            gauss("output.decoder", (v, d))
            if config.phi == "prelu":
                ones("output.slopes", (d,))

    # -- parameter access ---------------------------------------------------

    def parameters(self) -> list[Parameter]:
        """Registration order; stable across runs for a fixed config."""
        return list(self.params.values())

    @property
    def embedding(self) -> Parameter:
        return self.params["encoder.embedding"]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_gradients(self) -> None:
        for p in self.parameters():
            p.grad = None
        for t in self.constants:
            t.grad = None

    def pin_null_row(self) -> None:
        """Force the padding embedding row back to exact zero.

        Called after every optimizer update so the null symbol can never
        acquire meaning; its gradient row is also cleared so adaptive
        optimizer moments stay at zero for it.
        """
        self.embedding.data[NULL_INDEX] = 0.0

    def clear_null_grad(self) -> None:
        if self.embedding.grad is not None:
            self.embedding.grad[NULL_INDEX] = 0.0

    # -- weight views -------------------------------------------------------

    def cell_weights(self) -> Optional[CellWeights]:
        if self.config.variant != "general":
            return None
        return CellWeights(
            state_kernel=self.params["memory.state_kernel"],
            key_kernel=self.params["memory.key_kernel"],
            input_kernel=self.params["memory.input_kernel"],
            slopes=self.params.get("memory.slopes"),
        )

    def output_weights(self) -> Optional[OutputWeights]:
        if self.config.direct_prediction:
            return None
        return OutputWeights(
            combine=self.params["output.combine"],
            decoder=self.params["output.decoder"],
            slopes=self.params.get("output.slopes"),
        )

    def keys_tensor(self, candidates: Optional[np.ndarray] = None) -> Tensor:
        """Resolve slot keys for this batch per the key-handling mode."""
        cfg = self.config
        if cfg.per_sample_keys:
            if candidates is None:
                raise DimensionMismatch(
                    "per-sample keys need a (batch, slots) candidate index array"
                )
            cand = np.asarray(candidates)
            if cand.ndim != 2 or cand.shape[1] != cfg.slots:
                raise DimensionMismatch(
                    f"candidates shape {cand.shape} != (batch, {cfg.slots})"
                )
            return gather_rows(self.embedding, cand)
        if cfg.tied_keys is not None:
            return gather_rows(self.embedding, np.asarray(cfg.tied_keys))
        return self.params["memory.keys"]

    # -- forward ------------------------------------------------------------

    def run_batch(self, stories: np.ndarray, candidates=None,
                  training: bool = False, rng=None, record: bool = False):
        """Fold a (batch, T, K) story block into a final memory state.

        With record=True also returns the list of per-step states.
        """
        cfg = self.config
        stories = np.asarray(stories)
        if stories.ndim != 3:
            raise DimensionMismatch(f"stories must be (batch, steps, tokens), got {stories.shape}")
        kw = dict(dropout_rate=cfg.dropout, training=training, rng=rng)
        if cfg.dual_encodings:
            enc_gate, enc_update = encode_dual(
                stories, self.story_gate_masks, self.story_update_masks,
                self.embedding, **kw)
        else:
            enc_gate = enc_update = encode(stories, self.story_masks, self.embedding, **kw)

        state = mem.init_state(self.keys_tensor(candidates))
        weights = self.cell_weights()
        mcfg = self.config.memory_config()
        states = []
        for t in range(stories.shape[1]):
            s_g = slice_step(enc_gate, t)
            s_u = s_g if enc_update is enc_gate else slice_step(enc_update, t)
            state = mem.step(s_g, s_u, state, weights, mcfg)
            if record:
                states.append(state)
        if record:
            return state, states
        return state

    def forward_batch(self, stories, queries, candidates=None,
                      training: bool = False, rng=None) -> Tensor:
        """Answer logits for a batch: (batch, |V|), or (batch, slots) when
        predicting directly from the attention over tied candidates."""
        state = self.run_batch(stories, candidates, training=training, rng=rng)
        queries = np.asarray(queries)
        if queries.ndim != 2:
            raise DimensionMismatch(f"queries must be (batch, tokens), got {queries.shape}")
        q = encode(queries, self.query_masks, self.embedding,
                   dropout_rate=self.config.dropout, training=training, rng=rng)
        if self.config.direct_prediction:
            return out.attention_scores(q, state)
        return out.respond(q, state, self.output_weights(), phi=self.config.phi)

    def loss_batch(self, stories, queries, targets, candidates=None,
                   training: bool = True, rng=None) -> Tensor:
        """Mean cross-entropy of the gold answers (vocabulary indices, or
        candidate positions in direct-prediction mode)."""
        logits = self.forward_batch(stories, queries, candidates,
                                    training=training, rng=rng)
        return cross_entropy_logits(logits, np.asarray(targets))

    def predict_batch(self, stories, queries, candidates=None) -> np.ndarray:
        """Argmax answers, evaluated without recording a tape."""
        logits = self.forward_batch(stories, queries, candidates, training=False)
        return logits.data.argmax(axis=-1)
