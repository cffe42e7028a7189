"""Channel-compressed pretrain/finetune forecasting for BizITObs data.

Library layout:
  autodiff     - float64 tensors, tape-based reverse mode, Adam
  autoencoder  - GRU/LSTM channel-compression autoencoder
  backbone     - patched gated MLP-Mixer backbone
  model        - task heads and assembled models
  data         - ingestion, splitting, normalization, windowing
  synth        - synthetic BizITObs generator with known causal structure
  training     - pretrain/finetune workflows, early stopping, checkpoints
  evaluation   - metrics, baselines, benchmark/sweep/ablation harness
  report       - static actionable-insight report (JSON + HTML)
  cli          - command-line pipeline driver
"""

from .autodiff import Adam, Tensor, backward, no_grad
from .autoencoder import ChannelAutoEncoder, RecurrentCell, compressed_channels
from .backbone import BackboneConfig, MixerBackbone, patchify, unpatchify
from .checkpoint import Checkpoint
from .data import (BizITObsFrame, Channel, ChannelSchema, Normalizer,
                   chronological_split, event_labels, fit_apply_normalizer,
                   load_frame, make_windows)
from .evaluation import (baseline_persistence, mse_masked, pcc_masked,
                         run_benchmark, subset_accuracy, sweep_cr)
from .model import AutoMixerModel, build_model
from .synth import SynthSpec, synth_generate, synth_lowrank
from .training import (EarlyStop, TrainSpec, default_config, finetune,
                       model_from_checkpoint, prepare_dataset, pretrain)

__version__ = "0.1.0"
