"""Run configuration: sectioned key=value files covering every hyperparameter.

Unknown keys are rejected. Derived sizes are cross-checked when given
explicitly (hf = fs*pl, ef = fs*hf). See configs/default.ini for a fully
commented example.
"""

from __future__ import annotations

import configparser
import os

from .errors import ConfigurationError
from .training import default_config

_SCHEMA = {
    "data": {
        "source": str,              # "synthetic" | "files"
        "data_path": str,
        "schema_path": str,
        "length": int,
        "n_kpi": int,
        "n_causal_events": int,
        "n_noise_events": int,
        "event_rate": float,
        "latent_rank": int,
        "noise_level": float,
        "impulse_magnitude": float,
    },
    "model": {
        "sl": int, "fl": int, "pl": int, "nl": int, "fs": int,
        "hf": int, "ef": int, "do": float, "cr": float,
        "cell": str, "cc": bool, "use_autoencoder": bool,
    },
    "train": {
        "task": str, "mode": str, "b": int, "lr": float,
        "epochs_max": int, "patience": int, "clip_norm": float,
        "seeds": str,               # comma-separated ints
    },
    "report": {
        "k": int, "hit_threshold": float, "incident_table": str,
        "kpi_weights": str,         # name:weight comma list
    },
    "sweep": {
        "cr_list": str,             # comma-separated ratios
        "variant": str,
    },
    "benchmark": {
        "variants": str,            # comma-separated variant names
    },
}

_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(section, key, raw):
    kind = _SCHEMA[section][key]
    try:
        if kind is bool:
            return _BOOL[raw.strip().lower()]
        return kind(raw)
    except (ValueError, KeyError):
        raise ConfigurationError(
            f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


class RunConfig:
    """Typed view over a parsed config file."""

    def __init__(self, values):
        self.values = values        # {section: {key: typed value}}

    @classmethod
    def load(cls, path):
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        values = {}
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigurationError(f"{path}: unknown section [{section}]")
            values[section] = {}
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigurationError(
                        f"{path}: unknown key {key!r} in section [{section}]")
                values[section][key] = _convert(section, key, raw)
        config = cls(values)
        config.validate()
        return config

    def get(self, section, key, default=None):
        return self.values.get(section, {}).get(key, default)

    def validate(self):
        pl = self.get("model", "pl", 8)
        fs = self.get("model", "fs", 2)
        hf = self.get("model", "hf")
        ef = self.get("model", "ef")
        if hf is not None and hf != fs * pl:
            raise ConfigurationError(f"hf={hf} inconsistent with fs*pl={fs * pl}")
        if ef is not None:
            expected = fs * (hf if hf is not None else fs * pl)
            if ef != expected:
                raise ConfigurationError(f"ef={ef} inconsistent with fs*hf={expected}")
        sl = self.get("model", "sl", 24)
        if sl % pl != 0:
            raise ConfigurationError(f"sl={sl} not divisible by pl={pl}")
        mode = self.get("train", "mode", "PT")
        if mode not in ("PT", "NPT"):
            raise ConfigurationError(f"train mode must be PT or NPT, got {mode!r}")

    def model_config(self, **overrides):
        m = self.values.get("model", {})
        t = self.values.get("train", {})
        kwargs = {
            "sl": m.get("sl", 24), "fl": m.get("fl", 24),
            "pl": m.get("pl", 8), "nl": m.get("nl", 8), "fs": m.get("fs", 2),
            "dropout": m.get("do", 0.4), "cell_kind": m.get("cell", "gru"),
            "cr": m.get("cr", 0.6), "reconcile": m.get("cc", False),
            "use_autoencoder": m.get("use_autoencoder", True),
            "task": t.get("task", "kpi-forecast"),
        }
        kwargs.update(overrides)
        return default_config(**kwargs)

    def seeds(self, override=None):
        if override is not None:
            return [int(override)]
        raw = self.get("train", "seeds", "0")
        try:
            return [int(s) for s in str(raw).split(",") if s.strip() != ""]
        except ValueError:
            raise ConfigurationError(f"bad seeds list {raw!r}") from None

    def train_kwargs(self):
        t = self.values.get("train", {})
        return {
            "batch_size": t.get("b", 8),
            "lr": t.get("lr", 1e-3),
            "epochs_max": t.get("epochs_max", 100),
            "patience": t.get("patience", 10),
            "clip_norm": t.get("clip_norm", 5.0),
        }

    def kpi_weights(self):
        raw = self.get("report", "kpi_weights")
        if not raw:
            return {}
        weights = {}
        for item in raw.split(","):
            if not item.strip():
                continue
            try:
                name, value = item.split(":")
                weights[name.strip()] = float(value)
            except ValueError:
                raise ConfigurationError(
                    f"bad kpi_weights entry {item!r} (want name:weight)") from None
        return weights
