"""Two-phase training: self-supervised autoencoder pretraining, then
end-to-end finetuning per downstream task, with a no-pretrain (NPT)
ablation mode and validation-based early stopping.

A run is fully determined by (seed, spec, data). Four independent RNG
streams are spawned from the seed: autoencoder init, backbone/head init,
batch shuffling, dropout. PT and NPT runs therefore consume randomness
identically and differ only in the autoencoder weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autoencoder import ChannelAutoEncoder, compressed_channels
from .checkpoint import Checkpoint
from .data import GuardedFrame, chronological_split, event_labels, fit_apply_normalizer, \
    make_windows
from .errors import ConfigurationError, TrainingDiverged
from .model import build_model

TASKS = ("kpi-forecast", "event-forecast", "event-classify")


def default_config(**overrides):
    """AutoMixerConfig defaults; every key can be overridden."""
    config = {
        "sl": 24, "fl": 24, "pl": 8, "nl": 8, "fs": 2, "dropout": 0.4,
        "cell_kind": "gru", "cr": 0.6, "use_autoencoder": True,
        "reconcile": False, "task": "kpi-forecast",
    }
    unknown = set(overrides) - set(config)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    config.update(overrides)
    return config


@dataclass
class TrainSpec:
    phase: str                      # "pretrain" | "finetune"
    config: dict
    task: str = "kpi-forecast"
    mode: str = "PT"                # "PT" | "NPT"
    epochs_max: int = 100
    patience: int = 10
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    clip_norm: float = 5.0
    log_path: str = None
    verbose: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}")


class EarlyStop:
    """Validation-based stopping: reset on strict improvement (>= 1e-6)."""

    def __init__(self, patience=10, min_delta=1e-6):
        self.patience = patience
        self.min_delta = min_delta
        self.best_val_loss = np.inf
        self.best_epoch = 0
        self.epochs_since_improve = 0

    def update(self, epoch, val_loss):
        """Returns 'continue' or 'stop'."""
        if not np.isfinite(val_loss):
            return "stop"
        if val_loss < self.best_val_loss - self.min_delta:
            self.best_val_loss = val_loss
            self.best_epoch = epoch
            self.epochs_since_improve = 0
            return "continue"
        self.epochs_since_improve += 1
        if self.epochs_since_improve >= self.patience:
            return "stop"
        return "continue"


@dataclass
class PreparedDataset:
    """Split, normalized dataset with the test split behind a guard."""
    schema: object
    normalizer: object
    train: object                  # normalized frames
    val: object
    test: object                   # GuardedFrame; unlock only for evaluation
    raw_train: object
    raw_val: object
    raw_test: object               # GuardedFrame
    sl: int = 24
    fl: int = 24


def prepare_dataset(frame, sl=24, fl=24, ratios=(0.6, 0.2, 0.2)):
    raw_train, raw_val, raw_test = chronological_split(
        frame, ratios, min_window=sl + fl)
    train, val, test, normalizer = fit_apply_normalizer(raw_train, raw_val, raw_test)
    return PreparedDataset(
        schema=frame.schema, normalizer=normalizer,
        train=train, val=val, test=GuardedFrame(test),
        raw_train=raw_train, raw_val=raw_val, raw_test=GuardedFrame(raw_test),
        sl=sl, fl=fl)


def _spawn_rngs(seed):
    children = np.random.SeedSequence(seed).spawn(4)
    return {name: np.random.default_rng(ss)
            for name, ss in zip(("ae_init", "model_init", "shuffle", "dropout"),
                                children)}


def history_windows(values, sl, stride=1):
    """Stacked (N, sl, C) history-only windows for reconstruction training."""
    values = np.asarray(values)
    n = values.shape[0]
    if n < sl:
        return np.zeros((0, sl, values.shape[1]))
    starts = range(0, n - sl + 1, stride)
    return np.stack([values[s:s + sl] for s in starts])


def _minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _log_epoch(spec, record):
    line = json.dumps(record, sort_keys=True)
    if spec.verbose:
        print(line)
    if spec.log_path:
        with open(spec.log_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def _snapshot(params):
    return [np.array(p.data, copy=True) for p in params]


def _restore(params, snapshot):
    for p, arr in zip(params, snapshot):
        p.data = np.array(arr, copy=True)


def pretrain(dataset, spec):
    """Train the channel autoencoder on reconstruction; return best-val checkpoint."""
    config = spec.config
    channels = len(dataset.schema)
    c_prime = compressed_channels(channels, config["cr"])  # raises before training
    rngs = _spawn_rngs(spec.seed)
    ae = ChannelAutoEncoder(config["cell_kind"], channels, c_prime, rngs["ae_init"])
    params = ae.parameters()
    optimizer = ad.Adam(params, lr=spec.lr)

    train_x = history_windows(dataset.train.values, dataset.sl, stride=1)
    val_x = history_windows(dataset.val.values, dataset.sl, stride=dataset.sl)
    if len(train_x) == 0 or len(val_x) == 0:
        raise ConfigurationError("dataset too short for the configured context length")

    stopper = EarlyStop(patience=spec.patience)
    best = _snapshot(params)
    for epoch in range(1, spec.epochs_max + 1):
        train_losses = []
        for idx in _minibatches(len(train_x), spec.batch_size, rngs["shuffle"]):
            optimizer.zero_grad()
            loss = ae.reconstruction_loss(train_x[idx])
            ad.backward(loss)
            ad.clip_grad_norm(params, spec.clip_norm)
            optimizer.step()
            train_losses.append(loss.item())
        with ad.no_grad():
            val_loss = ae.reconstruction_loss(val_x).item()
        _log_epoch(spec, {"phase": "pretrain", "epoch": epoch,
                          "train_loss": float(np.mean(train_losses)),
                          "val_loss": val_loss})
        decision = stopper.update(epoch, val_loss)
        if epoch == stopper.best_epoch:
            best = _snapshot(params)
        if decision == "stop":
            break
    _restore(params, best)

    metadata = {
        "phase": "pretrain", "cell_kind": config["cell_kind"],
        "channels": channels, "compressed": c_prime, "cr": config["cr"],
        "sl": dataset.sl, "fl": dataset.fl,
        "best_epoch": stopper.best_epoch,
        "best_val_loss": float(stopper.best_val_loss)
        if np.isfinite(stopper.best_val_loss) else None,
    }
    return Checkpoint.from_parameters("pretrain", config, spec.seed, params, metadata)


def check_pretrain_compat(ckpt, config, channels):
    """Raise listing every mismatched field between checkpoint and finetune config."""
    expected = {
        "channels": channels,
        "compressed": compressed_channels(channels, config["cr"]),
        "cell_kind": config["cell_kind"],
    }
    mismatches = [
        f"{key}: checkpoint={ckpt.metadata.get(key)!r} vs run={value!r}"
        for key, value in expected.items()
        if ckpt.metadata.get(key) != value
    ]
    if mismatches:
        raise ConfigurationError(
            "incompatible pretrain checkpoint: " + "; ".join(mismatches))


def _forecast_batches(dataset, which, stride):
    frame = dataset.train if which == "train" else dataset.val
    windows = make_windows(frame, dataset.sl, dataset.fl, stride=stride)
    xs = np.stack([w.x for w in windows]) if windows else None
    ys = np.stack([w.y for w in windows]) if windows else None
    return xs, ys, windows


def _classify_targets(dataset, which, windows):
    raw = dataset.raw_train if which == "train" else dataset.raw_val
    labels = [event_labels(raw.values[w.origin + dataset.sl:
                                      w.origin + dataset.sl + dataset.fl],
                           dataset.schema)
              for w in windows]
    return np.stack(labels)


def finetune(dataset, spec, pretrain_ckpt=None):
    """End-to-end task training; PT loads autoencoder weights from a checkpoint."""
    config = dict(spec.config)
    config["task"] = spec.task
    channels = len(dataset.schema)
    n_labels = len(dataset.schema.event_mask) or None
    if spec.mode == "PT":
        if not config.get("use_autoencoder", True):
            raise ConfigurationError("PT mode requires the autoencoder variant")
        if pretrain_ckpt is None:
            raise ConfigurationError("PT mode requires a pretrain checkpoint")
        check_pretrain_compat(pretrain_ckpt, config, channels)
    elif spec.mode != "NPT":
        raise ConfigurationError(f"unknown training mode {spec.mode!r}")

    rngs = _spawn_rngs(spec.seed)
    model = build_model(channels, config, rngs["model_init"],
                        rng_ae=rngs["ae_init"], n_labels=n_labels)
    if spec.mode == "PT" and pretrain_ckpt is not None:
        pretrain_ckpt.load_into(model.autoencoder.parameters(), subset=True)
    params = model.parameters()
    optimizer = ad.Adam(params, lr=spec.lr)

    classify = spec.task == "event-classify"
    train_x, train_y, train_windows = _forecast_batches(dataset, "train", stride=1)
    val_x, val_y, val_windows = _forecast_batches(dataset, "val", stride=dataset.fl)
    if train_x is None or val_x is None:
        raise ConfigurationError("dataset too short for the configured window sizes")
    if classify:
        train_y = _classify_targets(dataset, "train", train_windows)
        val_y = _classify_targets(dataset, "val", val_windows)

    def batch_loss(xb, yb, training):
        rng = rngs["dropout"] if training else None
        if classify:
            logits = model.classify(xb, training=training, rng=rng)
            return ad.loss_bce_logits(logits, yb)
        pred = model.forecast(xb, training=training, rng=rng)
        return ad.loss_mse(pred, yb)

    stopper = EarlyStop(patience=spec.patience)
    best = _snapshot(params)
    for epoch in range(1, spec.epochs_max + 1):
        train_losses = []
        for idx in _minibatches(len(train_x), spec.batch_size, rngs["shuffle"]):
            optimizer.zero_grad()
            loss = batch_loss(train_x[idx], train_y[idx], training=True)
            ad.backward(loss)
            ad.clip_grad_norm(params, spec.clip_norm)
            optimizer.step()
            train_losses.append(loss.item())
        with ad.no_grad():
            val_loss = batch_loss(val_x, val_y, training=False).item()
        _log_epoch(spec, {"phase": "finetune", "task": spec.task, "mode": spec.mode,
                          "epoch": epoch,
                          "train_loss": float(np.mean(train_losses)),
                          "val_loss": val_loss})
        decision = stopper.update(epoch, val_loss)
        if epoch == stopper.best_epoch:
            best = _snapshot(params)
        if decision == "stop":
            break
    _restore(params, best)

    metadata = {
        "phase": "finetune", "task": spec.task, "mode": spec.mode,
        "cell_kind": config["cell_kind"], "channels": channels,
        "cr": config.get("cr"),
        "compressed": model.autoencoder.compressed if model.autoencoder else None,
        "use_autoencoder": config.get("use_autoencoder", True),
        "reconcile": config.get("reconcile", False),
        "sl": dataset.sl, "fl": dataset.fl, "n_labels": n_labels,
        "best_epoch": stopper.best_epoch,
        "best_val_loss": float(stopper.best_val_loss)
        if np.isfinite(stopper.best_val_loss) else None,
        "pretrain_hash": pretrain_ckpt.content_hash() if pretrain_ckpt else None,
    }
    ckpt = Checkpoint.from_parameters("finetune", config, spec.seed, params, metadata)
    return ckpt, model


def model_from_checkpoint(ckpt, channels):
    """Rebuild a finetuned model and load its parameters from a checkpoint."""
    if ckpt.kind != "finetune":
        raise ConfigurationError(f"expected a finetune checkpoint, got {ckpt.kind!r}")
    if ckpt.metadata.get("channels") != channels:
        raise ConfigurationError(
            f"checkpoint trained on {ckpt.metadata.get('channels')} channels, "
            f"dataset has {channels}")
    rngs = _spawn_rngs(ckpt.seed)
    model = build_model(channels, ckpt.config, rngs["model_init"],
                        rng_ae=rngs["ae_init"],
                        n_labels=ckpt.metadata.get("n_labels"))
    ckpt.load_into(model.parameters())
    return model
