"""Channel-independent patched MLP-Mixer backbone.

The compressed series z (T x C') is cut into non-overlapping patches per
channel, embedded, and passed through a stack of gated mixer layers. All
weights are shared across channels, so the parameter count is independent
of C' and the backbone is equivariant under channel permutation. Output
is (C' x n x hf) with n = T / pl patches; batched inputs add a leading
batch axis throughout.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError


class BackboneConfig:
    """Mixer hyperparameters; hf and ef derive from the feature scalar."""

    def __init__(self, pl=8, nl=8, fs=2, dropout=0.4, hf=None, ef=None):
        self.pl = pl
        self.nl = nl
        self.fs = fs
        self.dropout = dropout
        self.hf = hf if hf is not None else fs * pl
        self.ef = ef if ef is not None else fs * self.hf
        if hf is not None and fs is not None and hf != fs * pl:
            raise ConfigurationError(f"hf={hf} inconsistent with fs*pl={fs * pl}")
        if ef is not None and ef != fs * self.hf:
            raise ConfigurationError(f"ef={ef} inconsistent with fs*hf={fs * self.hf}")


def patchify(z, pl):
    """(T, C') -> (C', n, pl) non-overlapping patches; batched: (B, T, C') -> (B, C', n, pl)."""
    t_axis = z.data.ndim - 2
    seq_len = z.shape[t_axis]
    if seq_len % pl != 0:
        raise ConfigurationError(
            f"context length {seq_len} is not divisible by patch length {pl}")
    n = seq_len // pl
    if z.data.ndim == 2:
        channels = z.shape[1]
        zc = ad.permute(z, (1, 0))                      # (C', T)
        return ad.reshape(zc, (channels, n, pl))
    batch, channels = z.shape[0], z.shape[2]
    zc = ad.permute(z, (0, 2, 1))                       # (B, C', T)
    return ad.reshape(zc, (batch, channels, n, pl))


def unpatchify(p):
    """Inverse of patchify; restores (T, C') or (B, T, C') exactly."""
    if p.data.ndim == 3:
        channels, n, pl = p.shape
        flat = ad.reshape(p, (channels, n * pl))
        return ad.permute(flat, (1, 0))
    batch, channels, n, pl = p.shape
    flat = ad.reshape(p, (batch, channels, n * pl))
    return ad.permute(flat, (0, 2, 1))


def _affine_init(rng, fan_in, fan_out, name):
    bound = 1.0 / np.sqrt(fan_in)
    w = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)),
               requires_grad=True, name=f"{name}.w")
    b = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b")
    return w, b


class MixerLayer:
    """One gated mixer layer: patch-mixing block then feature-mixing block.

    Block 1: layernorm over hf, transpose to put the patch axis last,
    MLP n->ef->n with gelu and dropout, transpose back, residual add.
    Block 2: layernorm over hf, MLP hf->ef->hf with gelu and dropout,
    elementwise gate sigmoid(affine(u)), residual add.
    """

    def __init__(self, n, hf, ef, dropout, rng, name="mixer"):
        self.n = n
        self.hf = hf
        self.ef = ef
        self.dropout = dropout
        self.patch_w1, self.patch_b1 = _affine_init(rng, n, ef, f"{name}.patch1")
        self.patch_w2, self.patch_b2 = _affine_init(rng, ef, n, f"{name}.patch2")
        self.feat_w1, self.feat_b1 = _affine_init(rng, hf, ef, f"{name}.feat1")
        self.feat_w2, self.feat_b2 = _affine_init(rng, ef, hf, f"{name}.feat2")
        self.gate_w, self.gate_b = _affine_init(rng, hf, hf, f"{name}.gate")
        self.norm1_g = Tensor(np.ones(hf), requires_grad=True, name=f"{name}.norm1.g")
        self.norm1_b = Tensor(np.zeros(hf), requires_grad=True, name=f"{name}.norm1.b")
        self.norm2_g = Tensor(np.ones(hf), requires_grad=True, name=f"{name}.norm2.g")
        self.norm2_b = Tensor(np.zeros(hf), requires_grad=True, name=f"{name}.norm2.b")

    def parameters(self):
        return [self.patch_w1, self.patch_b1, self.patch_w2, self.patch_b2,
                self.feat_w1, self.feat_b1, self.feat_w2, self.feat_b2,
                self.gate_w, self.gate_b,
                self.norm1_g, self.norm1_b, self.norm2_g, self.norm2_b]

    def forward(self, u, training=False, rng=None):
        ndim = u.data.ndim  # 3 (C', n, hf) or 4 (B, C', n, hf)
        swap = (0, 2, 1) if ndim == 3 else (0, 1, 3, 2)

        # patch-mixing block
        v = ad.normalize_layer(u, self.norm1_g, self.norm1_b)
        v = ad.permute(v, swap)                          # patch axis last
        v = ad.gelu(ad.add(ad.matmul(v, self.patch_w1), self.patch_b1))
        v = ad.dropout(v, self.dropout, training, rng)
        v = ad.add(ad.matmul(v, self.patch_w2), self.patch_b2)
        v = ad.dropout(v, self.dropout, training, rng)
        u = ad.add(u, ad.permute(v, swap))

        # gated feature-mixing block
        w = ad.normalize_layer(u, self.norm2_g, self.norm2_b)
        w = ad.gelu(ad.add(ad.matmul(w, self.feat_w1), self.feat_b1))
        w = ad.dropout(w, self.dropout, training, rng)
        w = ad.add(ad.matmul(w, self.feat_w2), self.feat_b2)
        w = ad.dropout(w, self.dropout, training, rng)
        gate = ad.sigmoid(ad.add(ad.matmul(u, self.gate_w), self.gate_b))
        return ad.add(u, ad.mul(w, gate))


class MixerBackbone:
    """patchify -> patch embedding -> nl gated mixer layers."""

    def __init__(self, context_length, config, rng):
        if context_length % config.pl != 0:
            raise ConfigurationError(
                f"context length {context_length} not divisible by pl={config.pl}")
        self.config = config
        self.n = context_length // config.pl
        self.embed_w, self.embed_b = _affine_init(rng, config.pl, config.hf, "backbone.embed")
        self.layers = [
            MixerLayer(self.n, config.hf, config.ef, config.dropout, rng,
                       name=f"backbone.layer{i}")
            for i in range(config.nl)
        ]

    def parameters(self):
        params = [self.embed_w, self.embed_b]
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def forward(self, z, training=False, rng=None):
        """(T, C') -> (C', n, hf); batched (B, T, C') -> (B, C', n, hf)."""
        p = patchify(z, self.config.pl)
        u = ad.add(ad.matmul(p, self.embed_w), self.embed_b)
        for layer in self.layers:
            u = layer.forward(u, training=training, rng=rng)
        return u
