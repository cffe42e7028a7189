"""Channel compression in isolation: pretrain the recurrent autoencoder on
series with known low-rank structure and watch reconstruction error fall to
the noise floor once the bottleneck is at least as wide as the latent rank.

Run: python3 demos/02_channel_compression.py   (a few minutes)
"""

import numpy as np

from automixer.autoencoder import compressed_channels
from automixer.synth import synth_lowrank
from automixer.training import TrainSpec, default_config, prepare_dataset, pretrain

CHANNELS, RANK = 8, 3

frame, _ = synth_lowrank(channels=CHANNELS, rank=RANK, length=1500, seed=0,
                         noise=0.05)
dataset = prepare_dataset(frame)

print(f"{CHANNELS} channels generated from {RANK} latent factors + 5% noise")
print(f"{'cr':>6} {'C_prime':>8} {'val recon MSE':>14}")
for cr in (0.75, 0.625):
    c_prime = compressed_channels(CHANNELS, cr)
    config = default_config(cr=cr, nl=3, dropout=0.0)
    spec = TrainSpec(phase="pretrain", config=config, seed=0,
                     epochs_max=150, patience=15, batch_size=64)
    ckpt = pretrain(dataset, spec)
    print(f"{cr:>6.3f} {c_prime:>8} {ckpt.metadata['best_val_loss']:>14.4f}")

print("\nbottlenecks narrower than the latent rank cannot reach the noise floor")
