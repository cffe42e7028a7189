"""Benchmark a few model variants on one dataset, then turn the winning
model's forecasts into the static business-insight report.

Run: python3 demos/04_benchmark_and_report.py   (several minutes)
"""

import tempfile

from automixer.evaluation import run_benchmark, _fresh_eval_dataset
from automixer.report import Incident, build_report, emit_report
from automixer.synth import SynthSpec, synth_generate
from automixer.training import TrainSpec, default_config, finetune, \
    prepare_dataset, pretrain

spec = SynthSpec(n_kpi=3, n_causal_events=2, n_noise_events=8, length=1200)
frame, schema, _ = synth_generate(spec, seed=1)
dataset = prepare_dataset(frame)
config = default_config(nl=3, dropout=0.3, cr=0.5)

table = run_benchmark(
    dataset,
    variants=("automixer_gru", "tsmixer", "persistence"),
    seeds=(0, 1), base_config=config,
    epochs_max=5, patience=5, batch_size=64)
print(table.render())

# train one model for the report
ds = _fresh_eval_dataset(dataset)
pre = pretrain(ds, TrainSpec(phase="pretrain", config=config, seed=0,
                             epochs_max=5, patience=5, batch_size=64))
_, model = finetune(ds, TrainSpec(phase="finetune", config=config, mode="PT",
                                  seed=0, epochs_max=5, patience=5,
                                  batch_size=64), pretrain_ckpt=pre)

test = ds.test.unlock()
raw_test = ds.raw_test.unlock()
kpi_mask = schema.kpi_mask
kpi_names = [schema.names[i] for i in kpi_mask]
pred = ds.normalizer.invert(model.forecast(test.values[-24:]).data)

incidents = [Incident("kpi_0", 2.0, 45.0, 12000.0),
             Incident("kpi_1", 1.0, 10.0, 800.0)]
report = build_report(
    kpi_names, pred[:, kpi_mask], raw_test.values[-24:][:, kpi_mask],
    ds.normalizer.std[kpi_mask],
    incidents=incidents, weights={"kpi_0": 3.0}, k=3,
    generated_at=f"t+{test.timestamps[-1]:.0f}")

out_dir = tempfile.mkdtemp(prefix="automixer-report-")
json_path, html_path = emit_report(report, out_dir)
print(f"\ntop KPI to watch: {report['forecast_view'][0]['kpi']} "
      f"(priority {report['forecast_view'][0]['priority_score']})")
print(f"report written to {json_path} and {html_path}")
