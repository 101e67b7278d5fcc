"""Finite-difference verification of the analytic gradients.

For a deterministic random batch, every parameter element is perturbed both
ways and the central difference of the loss is compared against the tape's
gradient.  The comparison metric per parameter tensor is

    ||g_analytic - g_fd||_2 / max(||g_analytic||_2, ||g_fd||_2, floor)

so a mismatch anywhere in a tensor cannot hide behind large entries
elsewhere.  Checks run in 64-bit; the default suite covers slot counts,
dimensions, story lengths, both variants, both nonlinearities, and every
key-handling and encoder mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import EntityNetwork, ModelConfig
from .numerics import Tape
from .seeding import substream

DEFAULT_STEP = 1e-5
NORM_FLOOR = 1e-12


@dataclass
class CheckCase:
    """One gradcheck configuration: a model config plus data shape."""

    label: str
    config: ModelConfig
    steps: int
    batch: int = 3
    seed: int = 0


@dataclass
class CheckResult:
    label: str
    max_rel_error: float
    per_param: dict

    @property
    def passed(self) -> bool:
        return self.max_rel_error < 1e-4


def case_config(d, m, variant="general", phi="prelu", normalize=True,
                  **kw) -> ModelConfig:
    base = dict(
        vocab_size=12, dim=d, slots=m, sentence_len=3, query_len=2,
        variant=variant, phi=phi, normalize=normalize, dtype="float64",
    )
    base.update(kw)
    return ModelConfig(**base)


def default_cases() -> list[CheckCase]:
    """Twenty deterministic configurations spanning the model's modes."""
    cases = []
    # full (d, m, T) grid under the general variant with prelu
    for d in (4, 8):
        for m in (2, 3):
            for steps in (1, 4):
                cases.append(CheckCase(
                    f"general-prelu-d{d}-m{m}-T{steps}",
                    case_config(d, m), steps))
    # general variant with identity nonlinearity
    for d, m, steps in [(4, 2, 1), (4, 3, 4), (8, 2, 4), (8, 3, 1)]:
        cases.append(CheckCase(
            f"general-identity-d{d}-m{m}-T{steps}",
            case_config(d, m, phi="identity"), steps))
    # simplified variant (identity, unnormalized by definition)
    for d, m, steps in [(4, 2, 4), (4, 3, 1), (8, 2, 1), (8, 3, 4)]:
        cases.append(CheckCase(
            f"simplified-d{d}-m{m}-T{steps}",
            case_config(d, m, variant="simplified", phi="identity",
                          normalize=False), steps))
    # coverage of the remaining modes
    cases.append(CheckCase(
        "general-unnormalized-d4-m2-T4",
        case_config(4, 2, normalize=False), 4))
    cases.append(CheckCase(
        "general-tied-keys-d8-m3-T4",
        case_config(8, 3, tied_keys=(1, 2, 3)), 4))
    cases.append(CheckCase(
        "general-bow-masks-d8-m2-T4",
        case_config(8, 2, learned_masks=False), 4))
    cases.append(CheckCase(
        "simplified-direct-dual-d4-m2-T4",
        case_config(4, 2, variant="simplified", phi="identity",
                      normalize=False, per_sample_keys=True,
                      direct_prediction=True, dual_encodings=True), 4))
    return cases


def _make_batch(case: CheckCase):
    cfg = case.config
    rng = substream(case.seed, f"gradcheck-data-{case.label}")
    stories = rng.integers(0, cfg.vocab_size,
                           size=(case.batch, case.steps, cfg.sentence_len))
    queries = rng.integers(0, cfg.vocab_size, size=(case.batch, cfg.query_len))
    candidates = None
    if cfg.per_sample_keys:
        # distinct non-null rows per sample so keys are well defined
        candidates = np.stack([
            rng.choice(np.arange(1, cfg.vocab_size), size=cfg.slots, replace=False)
            for _ in range(case.batch)
        ])
        targets = rng.integers(0, cfg.slots, size=case.batch)
    else:
        targets = rng.integers(1, cfg.vocab_size, size=case.batch)
    return stories, queries, targets, candidates


def check_case(case: CheckCase, step: float = DEFAULT_STEP) -> CheckResult:
    """Compare tape gradients with central differences for one case."""
    net = EntityNetwork(case.config, substream(case.seed, f"gradcheck-init-{case.label}"))
    stories, queries, targets, candidates = _make_batch(case)

    with Tape() as tape:
        loss = net.loss_batch(stories, queries, targets, candidates, training=False)
        tape.backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in net.params.items()
    }
    net.zero_gradients()

    def loss_value() -> float:
        return float(net.loss_batch(stories, queries, targets, candidates,
                                    training=False).data)

    per_param = {}
    worst = 0.0
    for name, p in net.params.items():
        flat = p.data.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_value()
            flat[i] = orig - step
            lo = loss_value()
            flat[i] = orig
            fd[i] = (hi - lo) / (2.0 * step)
        ga = analytic[name].reshape(-1)
        denom = max(np.linalg.norm(ga), np.linalg.norm(fd), NORM_FLOOR)
        rel = float(np.linalg.norm(ga - fd) / denom)
        per_param[name] = rel
        worst = max(worst, rel)
    return CheckResult(label=case.label, max_rel_error=worst, per_param=per_param)


def run_checks(cases: Optional[list[CheckCase]] = None,
               step: float = DEFAULT_STEP) -> list[CheckResult]:
    return [check_case(c, step=step) for c in (cases or default_cases())]
