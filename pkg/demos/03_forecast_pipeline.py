"""The full library pipeline on synthetic BizITObs data: generate, split,
pretrain the autoencoder, finetune the forecaster end to end, and compare
against the persistence baseline on the held-out test split.

Run: python3 demos/03_forecast_pipeline.py   (a few minutes)
"""

from automixer.evaluation import evaluate_forecast, evaluate_persistence, \
    _fresh_eval_dataset
from automixer.synth import SynthSpec, synth_generate
from automixer.training import TrainSpec, default_config, finetune, \
    prepare_dataset, pretrain

# 4 business KPIs, 3 events that actually move them, 20 pure-noise events
spec = SynthSpec(n_kpi=4, n_causal_events=3, n_noise_events=20, length=2000)
frame, schema, truth = synth_generate(spec, seed=0)
print(f"data: {len(frame)} rows x {frame.channels} channels, "
      f"{len(truth.links)} causal links")

dataset = prepare_dataset(frame)
config = default_config(nl=3, dropout=0.3, cr=0.6)

print("pretraining the channel autoencoder ...")
pre_spec = TrainSpec(phase="pretrain", config=config, seed=0,
                     epochs_max=10, patience=5, batch_size=32)
pre_ckpt = pretrain(dataset, pre_spec)
print(f"  best reconstruction val loss {pre_ckpt.metadata['best_val_loss']:.4f} "
      f"(epoch {pre_ckpt.metadata['best_epoch']})")

print("finetuning the forecaster ...")
ft_spec = TrainSpec(phase="finetune", config=config, mode="PT", seed=0,
                    epochs_max=10, patience=5, batch_size=32)
ckpt, model = finetune(dataset, ft_spec, pretrain_ckpt=pre_ckpt)
print(f"  best forecast val loss {ckpt.metadata['best_val_loss']:.4f}")

report = evaluate_forecast(model, dataset, seed=0)
baseline = evaluate_persistence(_fresh_eval_dataset(dataset))
print(f"\ntest KPI MSE   model {report.kpi_mse:.4f}  "
      f"persistence {baseline.kpi_mse:.4f}")
print(f"test KPI PCC   model {report.kpi_pcc:.4f}  "
      f"persistence {baseline.kpi_pcc:.4f}")
