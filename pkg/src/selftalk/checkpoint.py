"""JSON model checkpoints.

One document per model: format version, model kind, config, vocabulary
word list(s) and all parameters in lexicographic name order. Floats are
written with Python's shortest round-trip representation, so reloading
is bit-exact and rewriting an untouched model is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .kernel import ParamStore

FORMAT_VERSION = 1


def write_checkpoint(path, model: str, config: dict, vocab_words, store: ParamStore, extra: dict | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "model": model,
        "config": config,
        "vocab": list(vocab_words),
    }
    if extra:
        doc.update(extra)
    doc["params"] = {
        name: {"shape": list(value.shape), "data": value.ravel().tolist()}
        for name, value in store.items()
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def read_checkpoint(path, expected_model: str | None = None) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {doc.get('format_version')!r} in {path}")
    if expected_model is not None and doc.get("model") != expected_model:
        raise CheckpointError(f"expected a {expected_model!r} checkpoint, found {doc.get('model')!r} in {path}")
    return doc


def params_from_doc(doc: dict) -> ParamStore:
    store = ParamStore()
    for name, entry in doc["params"].items():
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        store.add(name, arr)
    return store


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
