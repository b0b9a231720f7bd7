"""Checkpoint files, seeded substreams, and content hashing.

Checkpoints are .npz archives: a JSON metadata entry (format version, model
kind, config echo, vocabulary hash) plus one array per parameter.  Loading
verifies kind and config unless forced.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def substream(seed: int, name: str) -> np.random.Generator:
    """Named, reproducible child stream of the global seed."""
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


def save_checkpoint(path, kind, config, states, vocab_hash=None, extra=None):
    """states: dict of name -> state_dict (e.g. {"g": ..., "d1": ...})."""
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "vocab_hash": vocab_hash,
        "extra": extra or {},
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for prefix, state in states.items():
        for name, value in state.items():
            arrays[f"{prefix}/{name}"] = value
    np.savez_compressed(path, **arrays)


def load_checkpoint(path, kind=None, config=None, vocab_hash=None, force=False):
    """Returns (meta, {prefix: state_dict}); verifies kind/config/vocab."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        states: dict[str, dict] = {}
        for key in data.files:
            if key == "__meta__":
                continue
            prefix, name = key.split("/", 1)
            states.setdefault(prefix, {})[name] = data[key]
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {meta.get('format_version')}")
    if kind is not None and meta["kind"] != kind:
        raise ValueError(f"checkpoint kind mismatch: expected {kind}, found {meta['kind']}")
    if not force:
        if config is not None and meta["config"] != config:
            raise ValueError(
                "checkpoint config mismatch (use force to override): "
                f"saved={meta['config']} requested={config}"
            )
        if vocab_hash is not None and meta.get("vocab_hash") not in (None, vocab_hash):
            raise ValueError("checkpoint was built with a different vocabulary")
    return meta, states


def save_vocabulary(path, vocab):
    Path(path).write_text(canonical_json(vocab.to_json()), encoding="utf-8")


def load_vocabulary(path):
    from fairchat.text import Vocabulary

    return Vocabulary.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
