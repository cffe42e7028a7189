"""Sequence-invariant channel compression with recurrent autoencoders.

The encoder runs a GRU or LSTM cell over the input sequence and emits the
full hidden-state sequence, so the compressed series keeps per-timestep
temporal resolution: x (T x C) -> z (T x C'). The decoder runs its own
cell over z and applies a per-timestep affine projection C' -> C. One
parameter set handles any sequence length, which lets the same decoder
reconstruct T-length inputs during pretraining and decode H-length
forecasts during finetuning.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError, SchemaError

GRU_GATES = ("r", "z", "n")  # reset, update, candidate
LSTM_GATES = ("i", "f", "o", "g")  # input, forget, output, cell candidate


def compressed_channels(c, cr):
    """Number of channels kept after removing a ``cr`` fraction (floor 2)."""
    if c < 3:
        raise ConfigurationError(f"channel compression needs C >= 3, got C={c}")
    if not 0.0 < cr < 1.0:
        raise ConfigurationError(f"compression ratio must be in (0, 1), got {cr}")
    c_prime = max(2, int(np.floor((1.0 - cr) * c + 0.5)))
    if c_prime >= c:
        raise ConfigurationError(
            f"compression infeasible: cr={cr} on C={c} channels keeps "
            f"C'={c_prime} >= C (too few channels to compress)"
        )
    return c_prime


class RecurrentCell:
    """Single GRU or LSTM cell with standard gate formulations."""

    def __init__(self, kind, input_dim, hidden_dim, rng, name=""):
        if kind not in ("gru", "lstm"):
            raise ConfigurationError(f"unknown cell kind {kind!r}")
        self.kind = kind
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.weights = {}
        bound = 1.0 / np.sqrt(hidden_dim)
        for gate in GRU_GATES if kind == "gru" else LSTM_GATES:
            self.weights[f"W_{gate}"] = Tensor(
                rng.uniform(-bound, bound, (input_dim, hidden_dim)),
                requires_grad=True, name=f"{name}W_{gate}")
            self.weights[f"U_{gate}"] = Tensor(
                rng.uniform(-bound, bound, (hidden_dim, hidden_dim)),
                requires_grad=True, name=f"{name}U_{gate}")
            self.weights[f"b_{gate}"] = Tensor(
                np.zeros(hidden_dim), requires_grad=True, name=f"{name}b_{gate}")

    def parameters(self):
        return list(self.weights.values())

    def initial_state(self, batch):
        h = Tensor(np.zeros((batch, self.hidden_dim)))
        if self.kind == "lstm":
            return h, Tensor(np.zeros((batch, self.hidden_dim)))
        return h

    def _gate(self, gate, x_t, h):
        w = self.weights
        return ad.add(ad.add(ad.matmul(x_t, w[f"W_{gate}"]),
                             ad.matmul(h, w[f"U_{gate}"])), w[f"b_{gate}"])

    def step(self, x_t, state):
        """One recurrence step on a (batch, input_dim) slice."""
        if x_t.shape[-1] != self.input_dim:
            raise DimensionError(
                f"cell expects input dim {self.input_dim}, got {x_t.shape[-1]}")
        if self.kind == "gru":
            h = state
            r = ad.sigmoid(self._gate("r", x_t, h))
            z = ad.sigmoid(self._gate("z", x_t, h))
            w = self.weights
            n = ad.tanh(ad.add(ad.add(ad.matmul(x_t, w["W_n"]),
                                      ad.matmul(ad.mul(r, h), w["U_n"])), w["b_n"]))
            one_minus_z = ad.sub(Tensor(np.ones(z.shape)), z)
            return ad.add(ad.mul(one_minus_z, n), ad.mul(z, h))
        h, c = state
        i = ad.sigmoid(self._gate("i", x_t, h))
        f = ad.sigmoid(self._gate("f", x_t, h))
        o = ad.sigmoid(self._gate("o", x_t, h))
        g = ad.tanh(self._gate("g", x_t, h))
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def run(self, x):
        """Consume x (batch, T, input_dim); return stacked hidden states (batch, T, hidden)."""
        batch, seq_len = x.shape[0], x.shape[1]
        state = self.initial_state(batch)
        outputs = []
        for t in range(seq_len):
            state = self.step(ad.take_row(x, t, axis=1), state)
            outputs.append(state[0] if self.kind == "lstm" else state)
        return ad.stack(outputs, axis=1)


class ChannelAutoEncoder:
    """Encoder g: T x C -> T x C' and decoder h: T x C' -> T x C."""

    def __init__(self, kind, channels, compressed, rng, encoder_only=False):
        if not 1 <= compressed < channels:
            raise ConfigurationError(
                f"need 1 <= C' < C, got C'={compressed}, C={channels}")
        self.kind = kind
        self.channels = channels
        self.compressed = compressed
        self.encoder_cell = RecurrentCell(kind, channels, compressed, rng, name="ae.enc.")
        if encoder_only:
            self.decoder_cell = None
            self.proj_w = None
            self.proj_b = None
        else:
            self.decoder_cell = RecurrentCell(kind, compressed, compressed, rng,
                                              name="ae.dec.")
            bound = 1.0 / np.sqrt(compressed)
            self.proj_w = Tensor(rng.uniform(-bound, bound, (compressed, channels)),
                                 requires_grad=True, name="ae.proj_w")
            self.proj_b = Tensor(np.zeros(channels), requires_grad=True, name="ae.proj_b")

    def parameters(self):
        params = self.encoder_cell.parameters()
        if self.decoder_cell is not None:
            params = params + self.decoder_cell.parameters() + [self.proj_w, self.proj_b]
        return params

    def _ensure_batched(self, x, expected, label):
        if x.shape[-1] != expected:
            raise SchemaError(
                f"{label}: expected {expected} channels, got {x.shape[-1]}")
        if x.data.ndim == 2:
            return ad.reshape(x, (1,) + x.shape), True
        if x.data.ndim == 3:
            return x, False
        raise DimensionError(f"{label}: expected 2-d or 3-d input, got {x.shape}")

    def encode(self, x):
        """Compress channels: (T, C) -> (T, C'), batched variant (B, T, C) -> (B, T, C')."""
        xb, squeeze = self._ensure_batched(x, self.channels, "encode")
        z = self.encoder_cell.run(xb)
        return ad.reshape(z, z.shape[1:]) if squeeze else z

    def decode(self, z):
        """Reconstruct channels: (T, C') -> (T, C); works for any sequence length."""
        if self.decoder_cell is None:
            raise ConfigurationError("autoencoder was built encoder-only")
        zb, squeeze = self._ensure_batched(z, self.compressed, "decode")
        h = self.decoder_cell.run(zb)
        out = ad.add(ad.matmul(h, self.proj_w), self.proj_b)
        return ad.reshape(out, out.shape[1:]) if squeeze else out

    def reconstruction_loss(self, x):
        x = ad._as_tensor(x)
        return ad.loss_mse(self.decode(self.encode(x)), x)
