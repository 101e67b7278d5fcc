"""Backpropagation-through-time training with per-task protocol presets.

The loop is plain: encode a minibatch of equal-length stories, unroll the
memory over the statements, read out at the query, take mean cross-entropy,
backpropagate through the whole unrolled graph, clip the global gradient
norm at 40, apply ADAM or SGD with the protocol's schedule, and pin the null
embedding row back to zero.  Stories are bucketed by their exact statement
count, so a batch never mixes lengths and no time masking is needed; an
epoch is still one shuffled pass over every sample.

Three presets cover the task families: world (ADAM 0.003, halved at epochs
100 and 200), babi10k (ADAM 0.01, halved every 25 epochs until 200), and
cbt (SGD 0.001 constant with dropout 0.5).  Model selection across seeds is
by validation error with ties to the lowest seed.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .encoding import Vocabulary, build_vocab, pad_to_length
from .errors import DivergedLoss, EmptyRuns
from .model import EntityNetwork, ModelConfig
from .numerics import (
    Tape,
    adam_step,
    clip_global_norm,
    cross_entropy_logits,
    sgd_step,
)
from .seeding import substream
from .tasks.sample import QASample

OPTIMIZERS = ("adam", "sgd")
SCHEDULES = ("constant", "halve_every_25_epochs", "halve_every_100_epochs",
             "halve_every_10k_updates")
EPOCH_CAP = 200          # schedule decay stops growing past this epoch
EVAL_BATCH = 256
METRICS_HEADER = ["epoch", "split", "loss", "error", "lr", "seed"]


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 0.01
    schedule: str = "halve_every_25_epochs"
    batch_size: int = 32
    clip: float = 40.0
    epochs: int = 200
    patience: Optional[int] = 25
    dropout: float = 0.0
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("lr, batch_size and epochs must be positive")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("need at least one seed")


def world_protocol(seeds=(0, 1, 2, 3, 4), epochs: int = 250) -> TrainConfig:
    return TrainConfig(optimizer="adam", lr=0.003,
                       schedule="halve_every_100_epochs",
                       epochs=epochs, patience=None, seeds=seeds)


def babi10k_protocol(seeds=(0, 1, 2), epochs: int = 200) -> TrainConfig:
    return TrainConfig(optimizer="adam", lr=0.01,
                       schedule="halve_every_25_epochs",
                       epochs=epochs, seeds=seeds)


def cbt_protocol(seeds=(0,), epochs: int = 10) -> TrainConfig:
    return TrainConfig(optimizer="sgd", lr=0.001, schedule="constant",
                       dropout=0.5, epochs=epochs, patience=None, seeds=seeds)


PROTOCOLS = {"world": world_protocol, "babi10k": babi10k_protocol, "cbt": cbt_protocol}


def lr_schedule(config: TrainConfig, epoch: int, updates: int) -> float:
    """Piecewise-constant decay; `epoch` and `updates` count from zero."""
    if config.schedule == "halve_every_25_epochs":
        return config.lr / 2 ** (min(epoch, EPOCH_CAP) // 25)
    if config.schedule == "halve_every_100_epochs":
        return config.lr / 2 ** (epoch // 100)
    if config.schedule == "halve_every_10k_updates":
        return config.lr / 2 ** (updates // 10_000)
    return config.lr


# -- vectorization ----------------------------------------------------------


@dataclass
class Bucket:
    """All samples sharing one story length, stacked for batched forwards."""

    stories: np.ndarray                 # (n, steps, sentence_len) int
    queries: np.ndarray                 # (n, query_len) int
    targets: np.ndarray                 # (n,) int
    candidates: Optional[np.ndarray]    # (n, slots) int, per-sample keys only

    def __len__(self) -> int:
        return self.stories.shape[0]


def build_vocab_from_samples(samples: Sequence[QASample]) -> Vocabulary:
    return build_vocab(seq for s in samples for seq in s.all_token_sequences())


def corpus_lengths(samples: Sequence[QASample]) -> tuple[int, int]:
    """(longest context sentence, longest query) over the corpus."""
    sentence_len = max((len(sent) for s in samples for sent in s.context), default=1)
    query_len = max((len(s.query) for s in samples), default=1)
    return max(sentence_len, 1), max(query_len, 1)


def vectorize(samples: Sequence[QASample], vocab: Vocabulary,
              config: ModelConfig) -> list[Bucket]:
    """Index, pad and group samples by exact story length.

    Targets are vocabulary indices, or candidate positions when the model
    predicts directly over per-sample candidates.
    """
    grouped: dict[int, list] = {}
    for s in samples:
        story = np.array(
            [pad_to_length(vocab.indices(sent), config.sentence_len)
             for sent in s.context],
            dtype=np.int64,
        ).reshape(len(s.context), config.sentence_len)
        query = np.array(pad_to_length(vocab.indices(s.query), config.query_len),
                         dtype=np.int64)
        cand = None
        if config.per_sample_keys:
            if not s.candidates:
                raise ValueError("per-sample keys need candidate lists on every sample")
            cand = np.array(vocab.indices(s.candidates), dtype=np.int64)
        if config.direct_prediction:
            target = s.candidates.index(s.answer)
        else:
            target = vocab.index(s.answer)
        grouped.setdefault(len(s.context), []).append((story, query, target, cand))

    buckets = []
    for steps in sorted(grouped):
        rows = grouped[steps]
        buckets.append(Bucket(
            stories=np.stack([r[0] for r in rows]),
            queries=np.stack([r[1] for r in rows]),
            targets=np.array([r[2] for r in rows], dtype=np.int64),
            candidates=(np.stack([r[3] for r in rows])
                        if rows[0][3] is not None else None),
        ))
    return buckets


def iter_batches(buckets: Sequence[Bucket], batch_size: int,
                 rng: Optional[np.random.Generator] = None):
    """Yield (stories, queries, targets, candidates) slices of one bucket each.

    With an rng, samples are shuffled within buckets and the batch order is
    shuffled across buckets; without one, order is deterministic.
    """
    spans = []
    for b, bucket in enumerate(buckets):
        order = (rng.permutation(len(bucket)) if rng is not None
                 else np.arange(len(bucket)))
        for start in range(0, len(bucket), batch_size):
            spans.append((b, order[start:start + batch_size]))
    if rng is not None:
        spans = [spans[i] for i in rng.permutation(len(spans))]
    for b, idx in spans:
        bucket = buckets[b]
        yield (bucket.stories[idx], bucket.queries[idx], bucket.targets[idx],
               bucket.candidates[idx] if bucket.candidates is not None else None)


# -- metrics ----------------------------------------------------------------


@dataclass
class RunMetrics:
    """One seed's training record."""

    seed: int
    val_error: float = 1.0
    best_epoch: int = -1
    test_error: Optional[float] = None
    epochs: int = 0
    updates: int = 0
    wall_clock: float = 0.0
    history: list[dict] = field(default_factory=list)

    def log(self, epoch: int, split: str, loss: float, error: float, lr: float):
        self.history.append({
            "epoch": epoch, "split": split, "loss": round(float(loss), 6),
            "error": round(float(error), 6), "lr": lr, "seed": self.seed,
        })

    def summary(self) -> dict:
        return {
            "seed": self.seed, "val_error": self.val_error,
            "best_epoch": self.best_epoch, "test_error": self.test_error,
            "epochs": self.epochs, "updates": self.updates,
            "wall_clock_sec": round(self.wall_clock, 2),
        }


def write_metrics_csv(path, runs: Sequence[RunMetrics]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_HEADER)
        writer.writeheader()
        for run in runs:
            for row in run.history:
                writer.writerow(row)


def write_summary_json(path, runs: Sequence[RunMetrics], best: RunMetrics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"best_seed": best.seed, "runs": [r.summary() for r in runs]},
                  fh, indent=1)
        fh.write("\n")


# -- evaluation -------------------------------------------------------------


def evaluate(net: EntityNetwork, buckets: Sequence[Bucket],
             batch_size: int = EVAL_BATCH) -> tuple[float, float]:
    """(mean loss, error rate) without recording gradients."""
    total, wrong, loss_sum = 0, 0, 0.0
    for stories, queries, targets, cands in iter_batches(buckets, batch_size):
        logits = net.forward_batch(stories, queries, cands, training=False)
        loss = cross_entropy_logits(logits, targets)
        n = len(targets)
        total += n
        loss_sum += float(loss.data) * n
        wrong += int((logits.data.argmax(axis=-1) != targets).sum())
    if total == 0:
        return 0.0, 0.0
    return loss_sum / total, wrong / total


def evaluate_error(net: EntityNetwork, buckets: Sequence[Bucket]) -> tuple[float, bool]:
    """Error rate plus the failed flag (strictly more than 5% wrong)."""
    _, error = evaluate(net, buckets)
    return error, error > 0.05


# -- training ---------------------------------------------------------------


def init_model(config: ModelConfig, rng: np.random.Generator) -> EntityNetwork:
    """Fresh model with the standard initialization (the constructor does it)."""
    return EntityNetwork(config, rng)


def train_single(config: ModelConfig, train_buckets: Sequence[Bucket],
                 valid_buckets: Sequence[Bucket], tc: TrainConfig,
                 seed: int) -> tuple[EntityNetwork, RunMetrics]:
    """Train one seed to protocol end or early stop; returns the model
    restored to its best-validation parameters."""
    net = init_model(config, substream(seed, "init"))
    shuffle_rng = substream(seed, "shuffle")
    dropout_rng = substream(seed, "dropout")
    params = net.parameters()
    run = RunMetrics(seed=seed)
    best_params: Optional[dict] = None
    started = time.time()

    for epoch in range(tc.epochs):
        loss_sum, wrong, total = 0.0, 0, 0
        lr = lr_schedule(tc, epoch, run.updates)
        for stories, queries, targets, cands in iter_batches(
                train_buckets, tc.batch_size, shuffle_rng):
            lr = lr_schedule(tc, epoch, run.updates)
            with Tape() as tape:
                logits = net.forward_batch(stories, queries, cands,
                                           training=True, rng=dropout_rng)
                loss = cross_entropy_logits(logits, targets)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise DivergedLoss(
                        f"non-finite loss at epoch {epoch} update {run.updates} "
                        f"(seed {seed}, lr {lr})"
                    )
                tape.backward(loss)
            clip_global_norm(params, tc.clip)
            net.clear_null_grad()
            if tc.optimizer == "adam":
                adam_step(params, lr)
            else:
                sgd_step(params, lr)
            net.pin_null_row()
            net.zero_gradients()
            n = len(targets)
            total += n
            loss_sum += value * n
            wrong += int((logits.data.argmax(axis=-1) != targets).sum())
            run.updates += 1

        run.epochs = epoch + 1
        run.log(epoch, "train", loss_sum / max(total, 1), wrong / max(total, 1), lr)
        val_loss, val_error = evaluate(net, valid_buckets)
        run.log(epoch, "valid", val_loss, val_error, lr)

        if val_error < run.val_error:
            run.val_error = val_error
            run.best_epoch = epoch
            best_params = {p.name: p.data.copy() for p in params}
        if run.val_error == 0.0:
            break    # the best checkpoint cannot be improved on
        if tc.patience is not None and epoch - run.best_epoch >= tc.patience:
            break

    if best_params is not None:
        for p in params:
            p.data = best_params[p.name]
    run.wall_clock = time.time() - started
    return net, run


def train_multi(config: ModelConfig, train_buckets: Sequence[Bucket],
                valid_buckets: Sequence[Bucket], tc: TrainConfig,
                ) -> tuple[EntityNetwork, RunMetrics, list[RunMetrics]]:
    """Independent runs over tc.seeds; returns the validation-best model."""
    nets, runs = [], []
    for seed in tc.seeds:
        net, run = train_single(config, train_buckets, valid_buckets, tc, seed)
        nets.append(net)
        runs.append(run)
        if run.val_error == 0.0:
            break    # later seeds cannot beat a perfect validation run
    best = select_best_seed(runs)
    return nets[runs.index(best)], best, runs


def select_best_seed(runs: Sequence[RunMetrics]) -> RunMetrics:
    """Lowest validation error; ties go to the lowest seed."""
    if not runs:
        raise EmptyRuns("no runs to select from")
    return min(runs, key=lambda r: (r.val_error, r.seed))
