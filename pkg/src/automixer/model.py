"""Task heads and the assembled forecasting/classification models.

Forecast path: encode -> backbone -> per-channel head (n*hf -> H) ->
optional channel reconciliation -> pretrained decoder back to C channels.
Classification path: encode -> backbone -> pooled features -> logits over
event labels; the decoder is never instantiated.

A "raw-channel" model (no autoencoder) gives the plain mixer baseline:
the backbone runs on all C channels and the head output is the forecast
directly, with reconciliation as the -CC variant.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .autoencoder import ChannelAutoEncoder, compressed_channels
from .backbone import BackboneConfig, MixerBackbone, _affine_init
from .errors import ConfigurationError, SchemaError


class ForecastHead:
    """Shared per-channel affine map from flattened patch features to H steps."""

    def __init__(self, n, hf, horizon, rng):
        self.n = n
        self.hf = hf
        self.horizon = horizon
        self.w, self.b = _affine_init(rng, n * hf, horizon, "head.forecast")

    def parameters(self):
        return [self.w, self.b]

    def forward(self, z_prime):
        """(C', n, hf) -> (H, C'); batched (B, C', n, hf) -> (B, H, C')."""
        if z_prime.data.ndim == 3:
            channels = z_prime.shape[0]
            flat = ad.reshape(z_prime, (channels, self.n * self.hf))
            y = ad.add(ad.matmul(flat, self.w), self.b)    # (C', H)
            return ad.permute(y, (1, 0))
        batch, channels = z_prime.shape[0], z_prime.shape[1]
        flat = ad.reshape(z_prime, (batch, channels, self.n * self.hf))
        y = ad.add(ad.matmul(flat, self.w), self.b)        # (B, C', H)
        return ad.permute(y, (0, 2, 1))


class ReconciliationHead:
    """Residual cross-channel MLP applied per time step (the CC variant)."""

    def __init__(self, channels, ef, rng):
        self.channels = channels
        self.w1, self.b1 = _affine_init(rng, channels, ef, "head.reconcile1")
        self.w2, self.b2 = _affine_init(rng, ef, channels, "head.reconcile2")

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, y):
        """(H, C') -> (H, C'), channel axis last; batched alike."""
        h = ad.gelu(ad.add(ad.matmul(y, self.w1), self.b1))
        h = ad.add(ad.matmul(h, self.w2), self.b2)
        return ad.add(y, h)


class ClassificationHead:
    """Mean-pool z' over channels and patches, then affine hf -> E logits."""

    def __init__(self, hf, n_labels, rng):
        if n_labels < 1:
            raise ConfigurationError("classification head needs at least one label")
        self.n_labels = n_labels
        self.w, self.b = _affine_init(rng, hf, n_labels, "head.classify")

    def parameters(self):
        return [self.w, self.b]

    def forward(self, z_prime):
        """(C', n, hf) -> (E,); batched (B, C', n, hf) -> (B, E)."""
        axes = (0, 1) if z_prime.data.ndim == 3 else (1, 2)
        pooled = ad.mean_axis(z_prime, axes)
        return ad.add(_affine_any(pooled, self.w), self.b)


def _affine_any(x, w):
    """matmul that also accepts a 1-d left operand."""
    if x.data.ndim == 1:
        xr = ad.reshape(x, (1, x.shape[0]))
        return ad.reshape(ad.matmul(xr, w), (w.shape[1],))
    return ad.matmul(x, w)


class AutoMixerModel:
    """Assembled model for one task: forecast or event classification."""

    def __init__(self, channels, context_length, horizon, backbone_config,
                 rng_backbone, *, autoencoder=None, reconcile=False,
                 task="forecast", n_labels=None, rng_reconcile=None):
        self.channels = channels
        self.context_length = context_length
        self.horizon = horizon
        self.autoencoder = autoencoder
        self.task = task
        width = autoencoder.compressed if autoencoder is not None else channels
        self.width = width
        self.backbone = MixerBackbone(context_length, backbone_config, rng_backbone)
        if task == "forecast":
            self.head = ForecastHead(self.backbone.n, backbone_config.hf, horizon,
                                     rng_backbone)
            self.reconciliation = (
                ReconciliationHead(width, backbone_config.ef,
                                   rng_reconcile or rng_backbone)
                if reconcile else None)
        elif task == "classify":
            if n_labels is None:
                raise ConfigurationError("classification task requires n_labels")
            self.head = ClassificationHead(backbone_config.hf, n_labels, rng_backbone)
            self.reconciliation = None
        else:
            raise ConfigurationError(f"unknown task {task!r}")

    def parameters(self):
        params = []
        if self.autoencoder is not None:
            if self.task == "classify":
                params.extend(self.autoencoder.encoder_cell.parameters())
            else:
                params.extend(self.autoencoder.parameters())
        params.extend(self.backbone.parameters())
        params.extend(self.head.parameters())
        if self.reconciliation is not None:
            params.extend(self.reconciliation.parameters())
        return params

    def _compress(self, x):
        if x.shape[-1] != self.channels:
            raise SchemaError(
                f"model expects {self.channels} channels, got {x.shape[-1]}")
        if self.autoencoder is not None:
            return self.autoencoder.encode(x)
        return x

    def forecast(self, x, training=False, rng=None):
        """x (T, C) -> y-hat (H, C); batched (B, T, C) -> (B, H, C)."""
        if self.task != "forecast":
            raise ConfigurationError("model was built for classification")
        x = ad._as_tensor(x)
        z = self._compress(x)
        z_prime = self.backbone.forward(z, training=training, rng=rng)
        y = self.head.forward(z_prime)                  # (..., H, width)
        if self.reconciliation is not None:
            y = self.reconciliation.forward(y)
        if self.autoencoder is not None:
            y = self.autoencoder.decode(y)              # back to C channels
        return y

    def classify(self, x, training=False, rng=None):
        """x (T, C) -> logits (E,); batched (B, T, C) -> (B, E)."""
        if self.task != "classify":
            raise ConfigurationError("model was built for forecasting")
        x = ad._as_tensor(x)
        z = self._compress(x)
        z_prime = self.backbone.forward(z, training=training, rng=rng)
        return self.head.forward(z_prime)


def build_model(channels, config, rng_backbone, rng_ae=None, *, n_labels=None):
    """Construct a model from an AutoMixerConfig-style mapping.

    ``config`` needs: sl, fl, pl, nl, fs, dropout, cell_kind, cr,
    use_autoencoder, reconcile, task.
    """
    backbone_config = BackboneConfig(pl=config["pl"], nl=config["nl"],
                                     fs=config["fs"], dropout=config["dropout"])
    ae = None
    task = "classify" if config.get("task") == "event-classify" else "forecast"
    if config.get("use_autoencoder", True):
        c_prime = compressed_channels(channels, config["cr"])
        if rng_ae is None:
            raise ConfigurationError("autoencoder variant requires rng_ae")
        ae = ChannelAutoEncoder(config["cell_kind"], channels, c_prime, rng_ae,
                                encoder_only=(task == "classify"))
    return AutoMixerModel(
        channels, config["sl"], config["fl"], backbone_config, rng_backbone,
        autoencoder=ae, reconcile=config.get("reconcile", False),
        task=task, n_labels=n_labels)
