"""Command-line entry point: generate, train, eval, inspect, gradcheck.

Every run is reproducible: all randomness flows from --seed through labeled
sub-streams, the fully resolved configuration is copied into the output
directory, and artifacts (datasets, checkpoints, metrics CSV, summaries) are
plain files.  A flat `key = value` config file can supply any flag's value;
explicit command-line flags win over the file.  Relative --out paths are
placed under $ENTNET_OUT_ROOT when that variable is set.

Exit codes: 0 success, 1 user error (bad flags, malformed files), 2
internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Optional, Sequence

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import EntNetError
from .gradcheck import CheckCase, case_config, default_cases, run_checks
from .inspection import report_for_sample
from .model import ModelConfig
from .seeding import substream
from .tasks import babi, babi_synth, cbt, world
from .training import (
    PROTOCOLS,
    SCHEDULES,
    TrainConfig,
    build_vocab_from_samples,
    corpus_lengths,
    evaluate,
    train_multi,
    vectorize,
    write_metrics_csv,
    write_summary_json,
)

OUT_ROOT_VAR = "ENTNET_OUT_ROOT"


class UserError(EntNetError):
    """Bad invocation or bad input files; exits with status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError(message)


# -- config file ------------------------------------------------------------


def load_flat_config(path: str) -> dict[str, str]:
    """Read `key = value` lines; '#' starts a comment, blanks are skipped."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UserError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _find_subparser(parser: argparse.ArgumentParser, command) -> argparse.ArgumentParser:
    """Parser owning the chosen subcommand's flags (root if none matches)."""
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            sub = action.choices.get(command)
            if sub is not None:
                return sub
    return parser


def apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse argv; values from --config fill in unset flags, coerced by each
    flag's declared type.  Explicit flags override the file."""
    pre, _ = parser.parse_known_args(argv)
    config_path = getattr(pre, "config", None)
    if config_path:
        raw = load_flat_config(config_path)
        # defaults must land on the subparser: it parses into a fresh
        # namespace, so root-level set_defaults would be ignored
        target = _find_subparser(parser, getattr(pre, "command", None))
        actions = {a.dest: a for a in target._actions}
        defaults = {}
        for key, text in raw.items():
            action = actions.get(key)
            if action is None:
                raise UserError(f"{config_path}: unknown option {key!r}")
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                defaults[key] = text.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                defaults[key] = action.type(text)
            else:
                defaults[key] = text
        target.set_defaults(**defaults)
    return parser.parse_args(argv)


def resolve_out(path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    root = os.environ.get(OUT_ROOT_VAR)
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    os.makedirs(path, exist_ok=True)
    return path


def write_resolved_config(outdir: str, args: argparse.Namespace) -> None:
    skip = {"config", "func"}
    lines = []
    for key in sorted(vars(args)):
        if key in skip:
            continue
        value = getattr(args, key)
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    with open(os.path.join(outdir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip() != "")
    except ValueError:
        raise UserError(f"expected comma-separated integers, got {text!r}") from None


def _parse_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise UserError(f"expected LO:HI, got {text!r}") from None


# -- data loading -----------------------------------------------------------


def load_samples(task: str, path: str, task_id: Optional[int] = None,
                 window: int = cbt.DEFAULT_WINDOW):
    if task == "world":
        return [s for st in world.read_world_file(path) for s in world.story_to_samples(st)]
    if task == "babi":
        return babi.load_babi_samples(path, task_id=task_id)
    if task == "cbt":
        return cbt.samples_from_file(path, window=window)
    raise UserError(f"unknown task {task!r}")


# -- subcommands ------------------------------------------------------------


def cmd_generate(args) -> int:
    outdir = resolve_out(args.out)
    write_resolved_config(outdir, args)
    rng = substream(args.seed, "generator")
    splits = list(zip(("train", "valid", "test"), args.splits))
    if args.task == "world":
        cfg = world.WorldConfig(width=args.width, height=args.height,
                                lines=args.lines, max_move=args.max_move)
        for name, count in splits:
            stories = world.generate_world_stories(
                cfg, count, rng, variable_lines=args.variable_lines)
            header = (f"world-model dataset split={name} count={count} seed={args.seed} "
                      f"width={cfg.width} height={cfg.height} agents={cfg.agents} "
                      f"lines={cfg.lines} max_move={cfg.max_move} "
                      f"variable_lines={args.variable_lines}")
            path = os.path.join(outdir, f"{name}.txt")
            world.write_world_file(path, stories, header=header)
            print(f"wrote {len(stories)} stories to {path}")
        return 0
    if args.task in ("babi1", "babi2"):
        task_id = int(args.task[-1])
        for name, count in splits:
            stories = babi_synth.generate_stories(task_id, count, rng)
            path = os.path.join(outdir, f"qa{task_id}_{name}.txt")
            babi_synth.write_stories(path, stories)
            print(f"wrote {len(stories)} stories to {path}")
        return 0
    raise UserError(f"no generator for task {args.task!r}")


def _model_config_from_args(args, vocab_size, sentence_len, query_len,
                            tied_indices) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size, dim=args.dim, slots=args.slots,
        sentence_len=sentence_len, query_len=query_len,
        variant=args.variant, phi=args.phi,
        normalize=not args.no_normalize,
        learned_masks=not args.bow,
        dual_encodings=args.dual_encodings,
        tied_keys=tied_indices,
        per_sample_keys=args.per_sample_keys,
        direct_prediction=args.direct_prediction,
        dropout=args.dropout,
    )


def cmd_train(args) -> int:
    outdir = resolve_out(args.out)
    task = args.task

    if task == "cbt":
        # cloze preset: simplified cell, per-candidate keys, direct readout
        for flag, value in (("variant", "simplified"), ("phi", "identity")):
            if getattr(args, flag) == TRAIN_DEFAULTS[flag]:
                setattr(args, flag, value)
        args.no_normalize = True
        args.per_sample_keys = True
        args.direct_prediction = True
        args.dual_encodings = True
        args.slots = cbt.CANDIDATES_PER_QUESTION

    train_samples = load_samples(task, args.train, args.task_id, args.window)
    valid_samples = load_samples(task, args.valid, args.task_id, args.window)
    test_samples = (load_samples(task, args.test, args.task_id, args.window)
                    if args.test else [])
    if not train_samples or not valid_samples:
        raise UserError("empty training or validation data")

    vocab = build_vocab_from_samples(train_samples + valid_samples + test_samples)
    sentence_len, query_len = corpus_lengths(
        train_samples + valid_samples + test_samples)

    tied_indices = None
    if args.tie_entities:
        words = [w.strip() for w in args.tie_entities.split(",") if w.strip()]
        tied_indices = tuple(vocab.index(w) for w in words)
        args.slots = len(tied_indices)

    protocol = PROTOCOLS.get(args.protocol)
    if protocol is None:
        raise UserError(f"unknown protocol {args.protocol!r}")
    base = protocol()

    def pick(flag, preset):
        return preset if flag is None else flag

    patience = base.patience if args.patience is None else (
        None if args.patience < 0 else args.patience)
    tc = TrainConfig(optimizer=pick(args.optimizer, base.optimizer),
                     lr=pick(args.lr, base.lr),
                     schedule=pick(args.schedule, base.schedule),
                     batch_size=pick(args.batch_size, base.batch_size),
                     clip=pick(args.clip, base.clip),
                     epochs=pick(args.epochs, base.epochs),
                     patience=patience,
                     dropout=pick(args.dropout, base.dropout),
                     seeds=pick(args.seeds, base.seeds))
    args.dropout = tc.dropout
    args.seeds = tc.seeds
    args.epochs = tc.epochs
    args.patience = tc.patience
    args.optimizer = tc.optimizer
    args.lr = tc.lr
    args.schedule = tc.schedule
    args.batch_size = tc.batch_size
    args.clip = tc.clip
    config = _model_config_from_args(args, len(vocab), sentence_len, query_len,
                                     tied_indices)
    write_resolved_config(outdir, args)

    train_buckets = vectorize(train_samples, vocab, config)
    valid_buckets = vectorize(valid_samples, vocab, config)

    started = time.time()
    net, best, runs = train_multi(config, train_buckets, valid_buckets, tc)
    elapsed = time.time() - started

    if test_samples:
        test_buckets = vectorize(test_samples, vocab, config)
        _, best.test_error = evaluate(net, test_buckets)

    ckpt_path = os.path.join(outdir, "best.ckpt")
    save_checkpoint(ckpt_path, net, vocab)
    write_metrics_csv(os.path.join(outdir, "metrics.csv"), runs)
    write_summary_json(os.path.join(outdir, "summary.json"), runs, best)

    print(f"best seed {best.seed}: val error {best.val_error:.4f}"
          + (f", test error {best.test_error:.4f}" if best.test_error is not None else "")
          + f" ({elapsed:.0f}s total, checkpoint {ckpt_path})")
    return 0


def cmd_eval(args) -> int:
    net, vocab = load_checkpoint(args.checkpoint)
    if vocab is None:
        raise UserError("checkpoint has no vocabulary; cannot encode data")
    rows = []
    for path in args.data:
        samples = load_samples(args.task, path, args.task_id, args.window)
        buckets = vectorize(samples, vocab, net.config)
        loss, error = evaluate(net, buckets)
        rows.append({"data": path, "samples": len(samples),
                     "loss": round(loss, 6), "error": round(error, 6),
                     "failed": error > 0.05})
    width = max(len(r["data"]) for r in rows)
    print(f"{'data':<{width}}  {'samples':>7}  {'loss':>8}  {'error':>7}  failed")
    for r in rows:
        print(f"{r['data']:<{width}}  {r['samples']:>7}  {r['loss']:>8.4f}  "
              f"{r['error']:>7.4f}  {'yes' if r['failed'] else 'no'}")
    if args.out:
        outdir = resolve_out(args.out)
        write_resolved_config(outdir, args)
        with open(os.path.join(outdir, "eval.json"), "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1)
            fh.write("\n")
    return 0


def cmd_inspect(args) -> int:
    net, vocab = load_checkpoint(args.checkpoint)
    if vocab is None:
        raise UserError("checkpoint has no vocabulary; cannot encode data")
    samples = load_samples(args.task, args.data, args.task_id, args.window)
    if not 0 <= args.index < len(samples):
        raise UserError(f"--index {args.index} out of range (0..{len(samples) - 1})")
    report = report_for_sample(net, vocab, samples[args.index], k=args.k)
    print(report.to_json() if args.json else report.to_text())
    if args.out:
        outdir = resolve_out(args.out)
        write_resolved_config(outdir, args)
        with open(os.path.join(outdir, "affinities.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return 0


def cmd_gradcheck(args) -> int:
    if args.d or args.m or args.steps:
        d, m, steps = args.d or 8, args.m or 3, args.steps or 4
        normalize = args.variant == "general" and not args.no_normalize
        cases = [CheckCase(
            f"{args.variant}-{args.phi}-d{d}-m{m}-T{steps}",
            case_config(d, m, variant=args.variant, phi=args.phi,
                        normalize=normalize), steps)]
    else:
        cases = default_cases()
    results = run_checks(cases, step=args.step)
    worst = 0.0
    for r in results:
        print(f"{'pass' if r.passed else 'FAIL'}  {r.label:<36} "
              f"max relative error {r.max_rel_error:.3e}")
        worst = max(worst, r.max_rel_error)
    print(f"overall max relative error {worst:.3e} over {len(results)} configurations")
    return 0 if worst < 1e-4 else 1


# -- parser -----------------------------------------------------------------

TRAIN_DEFAULTS = {"variant": "general", "phi": "prelu"}


def build_parser() -> _Parser:
    parser = _Parser(prog="entnet",
                     description="Gated slot-memory story reader: data, training, inspection.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic dataset splits")
    g.add_argument("--config", help="flat key = value file; flags override it")
    g.add_argument("--task", required=True, choices=["world", "babi1", "babi2"])
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--splits", type=_parse_ints, default=(10000, 1000, 1000),
                   help="train,valid,test story counts")
    g.add_argument("--lines", type=int, default=10, help="statement lines per world story")
    g.add_argument("--variable-lines", type=_parse_range, default=None,
                   metavar="LO:HI", help="draw per-story line counts uniformly")
    g.add_argument("--width", type=int, default=10)
    g.add_argument("--height", type=int, default=10)
    g.add_argument("--max-move", type=int, default=5)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train with a task protocol preset")
    t.add_argument("--config", help="flat key = value file; flags override it")
    t.add_argument("--task", required=True, choices=["world", "babi", "cbt"])
    t.add_argument("--task-id", type=int, default=None, help="story-task number (context cap)")
    t.add_argument("--train", required=True, help="training data file")
    t.add_argument("--valid", required=True, help="validation data file")
    t.add_argument("--test", default=None, help="test data file (optional)")
    t.add_argument("--out", required=True)
    t.add_argument("--protocol", default="babi10k", choices=sorted(PROTOCOLS))
    t.add_argument("--seeds", type=_parse_ints, default=None,
                   help="comma-separated run seeds (default: protocol's)")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--patience", type=int, default=None,
                   help="early-stop patience in epochs; negative disables")
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--clip", type=float, default=None)
    t.add_argument("--optimizer", default=None, choices=["adam", "sgd"])
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--schedule", default=None, choices=list(SCHEDULES))
    t.add_argument("--dim", type=int, default=100)
    t.add_argument("--slots", type=int, default=20)
    t.add_argument("--variant", default="general", choices=["general", "simplified"])
    t.add_argument("--phi", default="prelu", choices=["prelu", "identity"])
    t.add_argument("--no-normalize", action="store_true")
    t.add_argument("--bow", action="store_true", help="freeze encoder masks at 1")
    t.add_argument("--dual-encodings", action="store_true")
    t.add_argument("--per-sample-keys", action="store_true")
    t.add_argument("--direct-prediction", action="store_true")
    t.add_argument("--tie-entities", default=None,
                   help="comma-separated words whose embeddings become the slot keys")
    t.add_argument("--dropout", type=float, default=None)
    t.add_argument("--window", type=int, default=cbt.DEFAULT_WINDOW)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="error report for a checkpoint")
    e.add_argument("--config", help="flat key = value file; flags override it")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--task", required=True, choices=["world", "babi", "cbt"])
    e.add_argument("--task-id", type=int, default=None)
    e.add_argument("--data", nargs="+", required=True)
    e.add_argument("--window", type=int, default=cbt.DEFAULT_WINDOW)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="slot-to-word affinity report")
    i.add_argument("--config", help="flat key = value file; flags override it")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--task", required=True, choices=["world", "babi", "cbt"])
    i.add_argument("--task-id", type=int, default=None)
    i.add_argument("--data", required=True)
    i.add_argument("--index", type=int, default=0, help="sample index to inspect")
    i.add_argument("--k", type=int, default=2)
    i.add_argument("--json", action="store_true")
    i.add_argument("--window", type=int, default=cbt.DEFAULT_WINDOW)
    i.add_argument("--out", default=None)
    i.set_defaults(func=cmd_inspect)

    c = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    c.add_argument("--config", help="flat key = value file; flags override it")
    c.add_argument("--d", type=int, default=None)
    c.add_argument("--m", type=int, default=None)
    c.add_argument("--steps", "--T", type=int, default=None, dest="steps")
    c.add_argument("--variant", default="general", choices=["general", "simplified"])
    c.add_argument("--phi", default="prelu", choices=["prelu", "identity"])
    c.add_argument("--no-normalize", action="store_true")
    c.add_argument("--step", type=float, default=1e-5)
    c.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = apply_config_file(parser, argv)
        return args.func(args)
    except (UserError, EntNetError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
