"""Training loop: schedules, protocols, overfitting, determinism, selection."""

import csv
import json

import numpy as np
import pytest

import entnet.training as training
from entnet.errors import DivergedLoss, EmptyRuns
from entnet.model import EntityNetwork, ModelConfig
from entnet.seeding import substream
from entnet.tasks.world import WorldConfig, generate_world_stories, story_to_samples
from entnet.training import (
    RunMetrics,
    TrainConfig,
    babi10k_protocol,
    build_vocab_from_samples,
    cbt_protocol,
    corpus_lengths,
    evaluate,
    evaluate_error,
    init_model,
    iter_batches,
    lr_schedule,
    select_best_seed,
    train_multi,
    train_single,
    vectorize,
    world_protocol,
    write_metrics_csv,
    write_summary_json,
)


def world_fixture(count=30, lines=6, seed=0, dim=12, slots=3):
    rng = substream(seed, "generator")
    stories = generate_world_stories(WorldConfig(lines=lines), count, rng)
    samples = [s for st in stories for s in story_to_samples(st)]
    vocab = build_vocab_from_samples(samples)
    sentence_len, query_len = corpus_lengths(samples)
    config = ModelConfig(vocab_size=len(vocab), dim=dim, slots=slots,
                         sentence_len=sentence_len, query_len=query_len)
    return samples, vocab, config


class TestTrainConfig:
    def test_protocol_presets(self):
        w = world_protocol()
        assert (w.optimizer, w.lr, w.schedule) == ("adam", 0.003, "halve_every_100_epochs")
        assert w.patience is None
        assert len(w.seeds) == 5
        b = babi10k_protocol()
        assert (b.optimizer, b.lr, b.schedule) == ("adam", 0.01, "halve_every_25_epochs")
        assert len(b.seeds) == 3
        c = cbt_protocol()
        assert (c.optimizer, c.lr, c.schedule) == ("sgd", 0.001, "constant")
        assert c.dropout == 0.5

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(optimizer="rmsprop")
        with pytest.raises(ValueError):
            TrainConfig(schedule="linear")
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(seeds=())


class TestLrSchedule:
    def test_halve_every_25_epochs(self):
        tc = TrainConfig(schedule="halve_every_25_epochs", lr=0.01)
        assert lr_schedule(tc, epoch=24, updates=0) == pytest.approx(0.01)
        assert lr_schedule(tc, epoch=25, updates=0) == pytest.approx(0.005)
        assert lr_schedule(tc, epoch=75, updates=0) == pytest.approx(0.00125)

    def test_decay_stops_at_epoch_cap(self):
        tc = TrainConfig(schedule="halve_every_25_epochs", lr=0.01)
        assert lr_schedule(tc, 200, 0) == lr_schedule(tc, 400, 0)

    def test_halve_every_100_epochs(self):
        tc = TrainConfig(schedule="halve_every_100_epochs", lr=0.004)
        assert lr_schedule(tc, epoch=99, updates=0) == pytest.approx(0.004)
        assert lr_schedule(tc, epoch=100, updates=0) == pytest.approx(0.002)
        # epoch cap freezes the decay at two halvings
        assert lr_schedule(tc, 200, 0) == pytest.approx(0.001)
        assert lr_schedule(tc, 500, 0) == pytest.approx(0.001)

    def test_halve_every_10k_updates(self):
        tc = TrainConfig(schedule="halve_every_10k_updates", lr=0.01)
        assert lr_schedule(tc, 0, 9_999) == pytest.approx(0.01)
        assert lr_schedule(tc, 0, 10_000) == pytest.approx(0.005)
        assert lr_schedule(tc, 0, 35_000) == pytest.approx(0.00125)

    def test_constant(self):
        tc = TrainConfig(schedule="constant", lr=0.001)
        assert lr_schedule(tc, 173, 999_999) == pytest.approx(0.001)


class TestVectorize:
    def test_buckets_by_exact_length(self):
        samples, vocab, config = world_fixture()
        rng = substream(1, "generator")
        varied = [s for st in generate_world_stories(
            WorldConfig(), 40, rng, variable_lines=(4, 12))
            for s in story_to_samples(st)]
        vocab = build_vocab_from_samples(samples + varied)
        k, kq = corpus_lengths(samples + varied)
        config = ModelConfig(vocab_size=len(vocab), dim=8, slots=3,
                             sentence_len=k, query_len=kq)
        buckets = vectorize(varied, vocab, config)
        lengths = [b.stories.shape[1] for b in buckets]
        assert lengths == sorted(set(lengths))
        assert sum(len(b) for b in buckets) == len(varied)

    def test_batches_cover_every_sample_once(self):
        samples, vocab, config = world_fixture(count=17)
        buckets = vectorize(samples, vocab, config)
        seen = 0
        for stories, queries, targets, cands in iter_batches(buckets, 8,
                                                             substream(2, "shuffle")):
            assert stories.shape[1:] == (6, config.sentence_len)
            assert cands is None
            seen += len(targets)
        assert seen == len(samples)

    def test_shuffle_changes_order_not_content(self):
        samples, vocab, config = world_fixture(count=20)
        buckets = vectorize(samples, vocab, config)
        a = np.concatenate([t for _, _, t, _ in iter_batches(buckets, 8, substream(3, "shuffle"))])
        b = np.concatenate([t for _, _, t, _ in iter_batches(buckets, 8, substream(4, "shuffle"))])
        plain = np.concatenate([t for _, _, t, _ in iter_batches(buckets, 8)])
        assert sorted(a.tolist()) == sorted(plain.tolist())
        assert not np.array_equal(a, b) or not np.array_equal(a, plain)


class TestTraining:
    def test_overfits_ten_samples(self):
        # memorization check: a wide model must drive 10 points to zero error
        samples, vocab, _ = world_fixture(count=5, lines=6, dim=20, slots=5)
        vocab = build_vocab_from_samples(samples)
        k, kq = corpus_lengths(samples)
        config = ModelConfig(vocab_size=len(vocab), dim=20, slots=5,
                             sentence_len=k, query_len=kq)
        buckets = vectorize(samples, vocab, config)
        tc = TrainConfig(optimizer="adam", lr=0.01, schedule="constant",
                         epochs=500, patience=None, batch_size=32, seeds=(0,))
        net, run = train_single(config, buckets, buckets, tc, seed=0)
        assert run.val_error == 0.0
        assert run.epochs < 500
        _, train_error = evaluate(net, buckets)
        assert train_error == 0.0

    def test_fixed_batch_loss_decreases(self):
        samples, vocab, config = world_fixture(count=16)
        buckets = vectorize(samples, vocab, config)
        stories, queries, targets, cands = next(iter_batches(buckets, 32))
        drops = []
        for seed in (0, 1, 2):
            net = init_model(config, substream(seed, "init"))
            params = net.parameters()
            losses = []
            for _ in range(50):
                from entnet.numerics import Tape, adam_step, clip_global_norm, cross_entropy_logits
                with Tape() as tape:
                    logits = net.forward_batch(stories, queries, cands, training=True)
                    loss = cross_entropy_logits(logits, targets)
                    tape.backward(loss)
                losses.append(float(loss.data))
                clip_global_norm(params, 40.0)
                net.clear_null_grad()
                adam_step(params, 0.01)
                net.pin_null_row()
                net.zero_gradients()
            drops.append(losses[0] - losses[-1])
        assert np.mean(drops) > 0

    def test_null_row_stays_zero_through_training(self):
        samples, vocab, config = world_fixture(count=10)
        buckets = vectorize(samples, vocab, config)
        tc = TrainConfig(epochs=3, patience=None, seeds=(0,))
        net, _ = train_single(config, buckets, buckets, tc, seed=0)
        np.testing.assert_array_equal(net.embedding.data[0], 0.0)

    def test_bitwise_reproducible(self):
        samples, vocab, config = world_fixture(count=12)
        buckets = vectorize(samples, vocab, config)
        tc = TrainConfig(epochs=2, patience=None, seeds=(0,))
        a, _ = train_single(config, buckets, buckets, tc, seed=5)
        b, _ = train_single(config, buckets, buckets, tc, seed=5)
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_different_seeds_differ(self):
        samples, vocab, config = world_fixture(count=12)
        buckets = vectorize(samples, vocab, config)
        tc = TrainConfig(epochs=1, patience=None, seeds=(0,))
        a, _ = train_single(config, buckets, buckets, tc, seed=0)
        b, _ = train_single(config, buckets, buckets, tc, seed=1)
        assert any(not np.array_equal(pa.data, pb.data)
                   for pa, pb in zip(a.parameters(), b.parameters()))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_diverged_loss_aborts(self, monkeypatch):
        samples, vocab, config = world_fixture(count=8)
        buckets = vectorize(samples, vocab, config)

        def poisoned(cfg, rng):
            net = EntityNetwork(cfg, rng)
            net.embedding.data[1:] = np.inf
            return net

        monkeypatch.setattr(training, "init_model", poisoned)
        tc = TrainConfig(epochs=1, patience=None, seeds=(0,))
        with pytest.raises(DivergedLoss):
            train_single(config, buckets, buckets, tc, seed=0)

    def test_patience_stops_early(self):
        samples, vocab, config = world_fixture(count=10)
        buckets = vectorize(samples, vocab, config)
        tc = TrainConfig(lr=1e-7, epochs=50, patience=2, seeds=(0,))
        _, run = train_single(config, buckets, buckets, tc, seed=0)
        assert run.epochs <= 4

    def test_train_multi_returns_best(self):
        samples, vocab, config = world_fixture(count=10)
        buckets = vectorize(samples, vocab, config)
        tc = TrainConfig(epochs=2, patience=None, seeds=(0, 1))
        net, best, runs = train_multi(config, buckets, buckets, tc)
        assert len(runs) == 2
        assert best.val_error == min(r.val_error for r in runs)


class TestEvaluation:
    def test_perfect_model_not_failed(self):
        samples, vocab, _ = world_fixture(count=5, lines=6, dim=20, slots=5)
        vocab = build_vocab_from_samples(samples)
        k, kq = corpus_lengths(samples)
        config = ModelConfig(vocab_size=len(vocab), dim=20, slots=5,
                             sentence_len=k, query_len=kq)
        buckets = vectorize(samples, vocab, config)
        tc = TrainConfig(optimizer="adam", lr=0.01, schedule="constant",
                         epochs=500, patience=None, seeds=(0,))
        net, _ = train_single(config, buckets, buckets, tc, seed=0)
        error, failed = evaluate_error(net, buckets)
        assert error == 0.0
        assert not failed

    def test_failed_flag_is_strictly_above_five_percent(self, monkeypatch):
        monkeypatch.setattr(training, "evaluate", lambda *a, **k: (0.0, 0.05))
        error, failed = evaluate_error(None, [])
        assert error == 0.05
        assert not failed
        monkeypatch.setattr(training, "evaluate", lambda *a, **k: (0.0, 0.0501))
        _, failed = evaluate_error(None, [])
        assert failed

    def test_half_wrong_is_failed(self, monkeypatch):
        monkeypatch.setattr(training, "evaluate", lambda *a, **k: (1.0, 0.5))
        error, failed = evaluate_error(None, [])
        assert error == 0.5
        assert failed


class TestSelectBestSeed:
    def run(self, seed, val):
        return RunMetrics(seed=seed, val_error=val)

    def test_single_run(self):
        only = self.run(3, 0.2)
        assert select_best_seed([only]) is only

    def test_lowest_validation_error(self):
        runs = [self.run(0, 0.1), self.run(1, 0.02), self.run(2, 0.3)]
        assert select_best_seed(runs) is runs[1]

    def test_tie_goes_to_lowest_seed(self):
        runs = [self.run(4, 0.1), self.run(2, 0.1)]
        assert select_best_seed(runs) is runs[1]

    def test_empty_raises(self):
        with pytest.raises(EmptyRuns):
            select_best_seed([])


class TestMetricsArtifacts:
    def test_csv_layout(self, tmp_path):
        run = RunMetrics(seed=7)
        run.log(0, "train", 1.5, 0.9, 0.01)
        run.log(0, "valid", 1.4, 0.8, 0.01)
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, [run])
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0].keys()) == ["epoch", "split", "loss", "error", "lr", "seed"]
        assert rows[1]["split"] == "valid"
        assert rows[1]["seed"] == "7"

    def test_summary_json(self, tmp_path):
        runs = [RunMetrics(seed=0, val_error=0.3), RunMetrics(seed=1, val_error=0.1)]
        path = tmp_path / "summary.json"
        write_summary_json(path, runs, runs[1])
        with open(path) as fh:
            data = json.load(fh)
        assert data["best_seed"] == 1
        assert len(data["runs"]) == 2
