"""Self-describing JSON checkpoint container.

One file holds the config, the run seed, every parameter tensor with its
name and shape, and a sha256 content hash. The format is plain text so
checkpoints diff cleanly and byte-identical runs produce byte-identical
files. Format is versioned; loaders reject unknown versions.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .errors import ConfigurationError

FORMAT = "automixer-checkpoint-v1"


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class Checkpoint:
    def __init__(self, kind, config, seed, params, metadata=None):
        self.kind = kind                  # "pretrain" | "finetune"
        self.config = dict(config)
        self.seed = seed
        self.params = dict(params)        # name -> float64 ndarray
        self.metadata = dict(metadata or {})

    @classmethod
    def from_parameters(cls, kind, config, seed, parameters, metadata=None):
        params = {}
        for i, p in enumerate(parameters):
            name = p.name or f"param_{i}"
            if name in params:
                raise ConfigurationError(f"duplicate parameter name {name!r}")
            params[name] = np.array(p.data, copy=True)
        return cls(kind, config, seed, params, metadata)

    def content_hash(self):
        body = {
            "kind": self.kind,
            "config": self.config,
            "seed": self.seed,
            "metadata": self.metadata,
            "params": {k: self.params[k].tolist() for k in sorted(self.params)},
        }
        return hashlib.sha256(_canonical(body).encode()).hexdigest()

    def save(self, path):
        doc = {
            "format": FORMAT,
            "kind": self.kind,
            "config": self.config,
            "seed": self.seed,
            "metadata": self.metadata,
            "params": {
                name: {"shape": list(arr.shape), "data": arr.tolist()}
                for name, arr in sorted(self.params.items())
            },
            "hash": self.content_hash(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != FORMAT:
            raise ConfigurationError(
                f"{path}: unknown checkpoint format {doc.get('format')!r}")
        params = {
            name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in doc["params"].items()
        }
        ckpt = cls(doc["kind"], doc["config"], doc["seed"], params, doc["metadata"])
        if ckpt.content_hash() != doc["hash"]:
            raise ConfigurationError(f"{path}: content hash mismatch (corrupt file)")
        return ckpt

    def load_into(self, parameters, *, subset=False, prefix=None):
        """Copy stored arrays into matching live tensors by name.

        With ``subset=True`` live tensors missing from the checkpoint are
        left untouched (used when a classification model takes only the
        encoder from a pretrain checkpoint). ``prefix`` restricts loading
        to names starting with it.
        """
        for p in parameters:
            name = p.name
            if prefix is not None and not (name or "").startswith(prefix):
                continue
            if name not in self.params:
                if subset:
                    continue
                raise ConfigurationError(f"checkpoint missing parameter {name!r}")
            stored = self.params[name]
            if stored.shape != p.data.shape:
                raise ConfigurationError(
                    f"checkpoint parameter {name!r} has shape {stored.shape}, "
                    f"model expects {p.data.shape}")
            p.data = np.array(stored, copy=True)
