"""Recurrent entity network: parallel gated memory cells with learned keys.

The package is organised as a small stack:

- ``numerics``: dense tensors, a reverse-mode tape, activations, optimizers
- ``encoding``: vocabulary, embeddings, multiplicative-mask sentence encoder
- ``memory``: the gated cell bank (general and simplified variants)
- ``output``: attention readout over slots and answer scoring
- ``tasks``: world-model generator/oracle, story-QA parsing, cloze windows
- ``training``: BPTT loop, schedules, multi-seed selection
- ``inspection``: slot-to-word affinity reports
- ``cli``: command-line front end
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .encoding import NULL_INDEX, NULL_TOKEN, Vocabulary, build_vocab, encode, encode_dual, pad_to_length
from .errors import EntNetError
from .inspection import AffinityReport, slot_affinities, slot_nearest_words
from .memory import CellWeights, MemoryConfig, MemoryState, gate, candidate, init_state, run_story, step
from .model import EntityNetwork, ModelConfig, parameter_count
from .output import OutputWeights, attention_weights, predict_from_attention, respond
from .seeding import substream
from .tasks import QASample
from .training import TrainConfig, RunMetrics, evaluate_error, lr_schedule, select_best_seed, train_multi, train_single

__version__ = "0.1.0"

__all__ = [
    "AffinityReport",
    "CellWeights",
    "EntNetError",
    "EntityNetwork",
    "MemoryConfig",
    "MemoryState",
    "ModelConfig",
    "NULL_INDEX",
    "NULL_TOKEN",
    "OutputWeights",
    "QASample",
    "RunMetrics",
    "TrainConfig",
    "Vocabulary",
    "attention_weights",
    "build_vocab",
    "candidate",
    "encode",
    "encode_dual",
    "evaluate_error",
    "gate",
    "init_state",
    "load_checkpoint",
    "lr_schedule",
    "pad_to_length",
    "parameter_count",
    "predict_from_attention",
    "respond",
    "run_story",
    "save_checkpoint",
    "select_best_seed",
    "slot_affinities",
    "slot_nearest_words",
    "step",
    "substream",
    "train_multi",
    "train_single",
    "__version__",
]
