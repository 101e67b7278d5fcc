"""Versioned checkpoint container.

A checkpoint is a zip archive:

    manifest.json       format_version, model config, parameter names+shapes
    vocab.txt           token<TAB>index lines (optional)
    params/<name>.f32   raw little-endian float32, row-major

Parameter names are the model's dot-paths (e.g. ``memory.state_kernel``); the
manifest lists them in registration order and the loader verifies both the
set of names and every shape.  Values are stored as 32-bit floats regardless
of the in-memory dtype, so a 64-bit model loses precision on a round trip
(64-bit is only used for derivative verification, never for deliverable
models).
"""

from __future__ import annotations

import json
import zipfile
from typing import Optional, Tuple

import numpy as np

from .encoding import Vocabulary
from .errors import EntNetError
from .model import EntityNetwork, ModelConfig

FORMAT_VERSION = 1


class BadCheckpoint(EntNetError):
    """The container is missing entries or disagrees with its manifest."""


def save_checkpoint(path, model: EntityNetwork, vocab: Optional[Vocabulary] = None) -> None:
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "parameters": [
            {"name": p.name, "shape": list(p.data.shape)}
            for p in model.parameters()
        ],
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1))
        if vocab is not None:
            zf.writestr("vocab.txt", "\n".join(vocab.to_lines()) + "\n")
        for p in model.parameters():
            raw = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
            zf.writestr(f"params/{p.name}.f32", raw)


def load_checkpoint(path) -> Tuple[EntityNetwork, Optional[Vocabulary]]:
    """Rebuild the model (and vocabulary, if present) from a container."""
    try:
        return _load(path)
    except (zipfile.BadZipFile, json.JSONDecodeError, KeyError) as exc:
        raise BadCheckpoint(f"unreadable checkpoint {path}: {exc}") from exc


def _load(path) -> Tuple[EntityNetwork, Optional[Vocabulary]]:
    with zipfile.ZipFile(path, "r") as zf:
        names = set(zf.namelist())
        if "manifest.json" not in names:
            raise BadCheckpoint("no manifest.json in container")
        manifest = json.loads(zf.read("manifest.json"))
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise BadCheckpoint(f"unsupported format_version {version!r}")

        config = ModelConfig.from_dict(manifest["config"])
        model = EntityNetwork(config, np.random.default_rng(0))

        listed = {e["name"]: tuple(e["shape"]) for e in manifest["parameters"]}
        built = {p.name: p.data.shape for p in model.parameters()}
        if listed != built:
            raise BadCheckpoint(
                f"manifest parameters {sorted(listed)} do not match "
                f"config-derived parameters {sorted(built)}"
            )
        for p in model.parameters():
            entry = f"params/{p.name}.f32"
            if entry not in names:
                raise BadCheckpoint(f"missing {entry}")
            flat = np.frombuffer(zf.read(entry), dtype="<f4")
            if flat.size != p.data.size:
                raise BadCheckpoint(
                    f"{entry}: {flat.size} values for shape {p.data.shape}"
                )
            p.data = flat.reshape(p.data.shape).astype(config.dtype)

        vocab = None
        if "vocab.txt" in names:
            lines = zf.read("vocab.txt").decode("utf-8").splitlines()
            vocab = Vocabulary.from_lines(lines)
    return model, vocab
