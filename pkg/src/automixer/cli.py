"""Command-line entry point.

Commands: generate, pretrain, finetune, evaluate, benchmark, sweep,
ablate, report. Each reads a sectioned key=value config (--config),
takes --seed and --out overrides, and writes a manifest.json beside its
artifacts with the config snapshot, seed, and content hashes of inputs
and outputs.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
failure. Each failure prints one machine-parsable line on stderr:
``automixer-error kind=<kind> reason=<message>``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .checkpoint import Checkpoint
from .config import RunConfig
from .data import load_frame
from .errors import ConfigurationError, DataError, TrainingDiverged
from .evaluation import (ablate_pretraining, evaluate_classification,
                         evaluate_forecast, render_sweep, run_benchmark, sweep_cr,
                         BENCHMARK_VARIANTS)
from .report import build_report, emit_report, load_incident_table
from .synth import SynthSpec, synth_generate
from .training import (TrainSpec, finetune, model_from_checkpoint, prepare_dataset,
                       pretrain)

COMMANDS = ("generate", "pretrain", "finetune", "evaluate", "benchmark",
            "sweep", "ablate", "report")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir, command, config, seed, inputs, outputs):
    manifest = {
        "command": command,
        "config": config.values if isinstance(config, RunConfig) else config,
        "seed": seed,
        "inputs": {os.path.basename(p): _sha256(p) for p in inputs},
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def _load_dataset(config, args):
    data_path = args.data or config.get("data", "data_path")
    schema_path = args.schema or config.get("data", "schema_path")
    if not data_path or not schema_path:
        raise ConfigurationError("data_path and schema_path required "
                                 "([data] section or --data/--schema)")
    frame = load_frame(data_path, schema_path)
    sl = config.get("model", "sl", 24)
    fl = config.get("model", "fl", 24)
    return prepare_dataset(frame, sl=sl, fl=fl), [data_path, schema_path]


def _synth_spec(config):
    d = config.values.get("data", {})
    return SynthSpec(
        n_kpi=d.get("n_kpi", 4),
        n_causal_events=d.get("n_causal_events", 3),
        n_noise_events=d.get("n_noise_events", 20),
        length=d.get("length", 2000),
        event_rate=d.get("event_rate", 0.02),
        latent_rank=d.get("latent_rank", 0),
        noise_level=d.get("noise_level", 0.3),
        impulse_magnitude=d.get("impulse_magnitude", 2.0),
    )


def cmd_generate(config, args, out_dir):
    seed = config.seeds(args.seed)[0]
    frame, schema, truth = synth_generate(_synth_spec(config), seed)
    data_path = os.path.join(out_dir, "data.csv")
    schema_path = os.path.join(out_dir, "schema.csv")
    truth_path = os.path.join(out_dir, "groundtruth.csv")
    frame.save(data_path)
    schema.save(schema_path)
    truth.save(truth_path)
    _write_manifest(out_dir, "generate", config, seed, [],
                    [data_path, schema_path, truth_path])
    print(f"generated {len(frame)} rows x {frame.channels} channels -> {data_path}")
    return 0


def cmd_pretrain(config, args, out_dir):
    seed = config.seeds(args.seed)[0]
    dataset, inputs = _load_dataset(config, args)
    log_path = os.path.join(out_dir, "pretrain_log.jsonl")
    open(log_path, "w").close()
    spec = TrainSpec(phase="pretrain", config=config.model_config(), seed=seed,
                     log_path=log_path, verbose=True, **config.train_kwargs())
    ckpt = pretrain(dataset, spec)
    ckpt_path = os.path.join(out_dir, "pretrain_checkpoint.json")
    ckpt.save(ckpt_path)
    _write_manifest(out_dir, "pretrain", config, seed, inputs, [ckpt_path, log_path])
    print(f"pretrain checkpoint -> {ckpt_path} "
          f"(best val loss {ckpt.metadata['best_val_loss']})")
    return 0


def cmd_finetune(config, args, out_dir):
    seed = config.seeds(args.seed)[0]
    dataset, inputs = _load_dataset(config, args)
    mode = config.get("train", "mode", "PT")
    task = config.get("train", "task", "kpi-forecast")
    pre_ckpt = None
    if mode == "PT":
        pre_path = args.pretrained or os.path.join(out_dir, "pretrain_checkpoint.json")
        if not os.path.exists(pre_path):
            raise ConfigurationError(f"pretrain checkpoint not found: {pre_path}")
        pre_ckpt = Checkpoint.load(pre_path)
        inputs = inputs + [pre_path]
    log_path = os.path.join(out_dir, "finetune_log.jsonl")
    open(log_path, "w").close()
    spec = TrainSpec(phase="finetune", config=config.model_config(), task=task,
                     mode=mode, seed=seed, log_path=log_path, verbose=True,
                     **config.train_kwargs())
    ckpt, _model = finetune(dataset, spec, pretrain_ckpt=pre_ckpt)
    ckpt_path = os.path.join(out_dir, "finetune_checkpoint.json")
    ckpt.save(ckpt_path)
    _write_manifest(out_dir, "finetune", config, seed, inputs, [ckpt_path, log_path])
    print(f"finetune checkpoint -> {ckpt_path} "
          f"(best val loss {ckpt.metadata['best_val_loss']})")
    return 0


def _load_finetuned(config, args, out_dir, dataset):
    ckpt_path = args.checkpoint or os.path.join(out_dir, "finetune_checkpoint.json")
    if not os.path.exists(ckpt_path):
        raise ConfigurationError(f"finetune checkpoint not found: {ckpt_path}")
    ckpt = Checkpoint.load(ckpt_path)
    model = model_from_checkpoint(ckpt, len(dataset.schema))
    return ckpt, model, ckpt_path


def cmd_evaluate(config, args, out_dir):
    dataset, inputs = _load_dataset(config, args)
    ckpt, model, ckpt_path = _load_finetuned(config, args, out_dir, dataset)
    if ckpt.metadata.get("task") == "event-classify":
        report = evaluate_classification(model, dataset, seed=ckpt.seed,
                                         config_hash=ckpt.content_hash())
    else:
        report = evaluate_forecast(model, dataset, seed=ckpt.seed,
                                   config_hash=ckpt.content_hash())
    metrics_path = os.path.join(out_dir, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    _write_manifest(out_dir, "evaluate", config, ckpt.seed,
                    inputs + [ckpt_path], [metrics_path])
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_benchmark(config, args, out_dir):
    dataset, inputs = _load_dataset(config, args)
    seeds = config.seeds(args.seed)
    raw = config.get("benchmark", "variants")
    variants = ([v.strip() for v in raw.split(",") if v.strip()]
                if raw else BENCHMARK_VARIANTS)
    table = run_benchmark(dataset, variants=variants, seeds=seeds,
                          base_config=config.model_config(),
                          **config.train_kwargs())
    text_path = os.path.join(out_dir, "benchmark.txt")
    records_path = os.path.join(out_dir, "benchmark_records.jsonl")
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(table.render() + "\n")
    table.save_records(records_path)
    _write_manifest(out_dir, "benchmark", config, seeds, inputs,
                    [text_path, records_path])
    print(table.render())
    return 0


def cmd_sweep(config, args, out_dir):
    dataset, inputs = _load_dataset(config, args)
    seed = config.seeds(args.seed)[0]
    raw = config.get("sweep", "cr_list", "0.2,0.4,0.6,0.8")
    cr_list = [float(v) for v in raw.split(",") if v.strip()]
    variant = config.get("sweep", "variant", "automixer_gru_cc")
    sweep = sweep_cr(dataset, cr_list, variant=variant, seed=seed,
                     base_config=config.model_config(), **config.train_kwargs())
    sweep_path = os.path.join(out_dir, "sweep.json")
    with open(sweep_path, "w", encoding="utf-8") as fh:
        json.dump(sweep, fh, sort_keys=True, indent=1)
        fh.write("\n")
    _write_manifest(out_dir, "sweep", config, seed, inputs, [sweep_path])
    print(render_sweep(sweep))
    return 0


def cmd_ablate(config, args, out_dir):
    dataset, inputs = _load_dataset(config, args)
    seeds = config.seeds(args.seed)
    variant = config.get("sweep", "variant", "automixer_gru_cc")
    result = ablate_pretraining(dataset, variant=variant, seeds=seeds,
                                base_config=config.model_config(),
                                **config.train_kwargs())
    path = os.path.join(out_dir, "ablation.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result, fh, sort_keys=True, indent=1)
        fh.write("\n")
    _write_manifest(out_dir, "ablate", config, seeds, inputs, [path])
    print(f"PT median MSE {result['pt_median']:.4f} vs NPT {result['npt_median']:.4f} "
          f"({result['improvement_pct']:.1f}% improvement)")
    return 0


def cmd_report(config, args, out_dir):
    dataset, inputs = _load_dataset(config, args)
    ckpt, model, ckpt_path = _load_finetuned(config, args, out_dir, dataset)
    schema = dataset.schema
    kpi_mask = schema.kpi_mask
    kpi_names = [schema.names[i] for i in kpi_mask]

    test = dataset.test.unlock()
    raw_test = dataset.raw_test.unlock()
    sl, fl = dataset.sl, dataset.fl
    norm = dataset.normalizer

    from . import autodiff as ad
    with ad.no_grad():
        # forecast view: predict beyond the end of the data
        x_next = test.values[-sl:]
        pred_next = norm.invert(model.forecast(x_next).data)
        # past view: the last fully realized window
        x_prev = test.values[-(sl + fl):-fl]
        pred_prev = model.forecast(x_prev).data
    actual_prev = test.values[-fl:]

    incidents = []
    table_path = config.get("report", "incident_table")
    if table_path:
        incidents = load_incident_table(table_path)
        inputs = inputs + [table_path]
    past = [{"kpi": kpi_names[j], "forecast": pred_prev[:, ch],
             "actual": actual_prev[:, ch]}
            for j, ch in enumerate(kpi_mask)]
    report = build_report(
        kpi_names,
        pred_next[:, kpi_mask],
        raw_test.values[-sl:][:, kpi_mask],
        norm.std[kpi_mask],
        incidents=incidents,
        weights=config.kpi_weights(),
        k=config.get("report", "k", 3),
        past=past,
        hit_threshold=config.get("report", "hit_threshold", 0.25),
        generated_at=f"t+{test.timestamps[-1]:.0f}",
    )
    json_path, html_path = emit_report(report, out_dir)
    _write_manifest(out_dir, "report", config, ckpt.seed,
                    inputs + [ckpt_path], [json_path, html_path])
    print(f"report -> {json_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="automixer",
        description="Channel-compressed pretrain/finetune forecasting pipeline")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to run config file")
    parser.add_argument("--seed", type=int, default=None, help="override run seed(s)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--data", default=None, help="override data file path")
    parser.add_argument("--schema", default=None, help="override schema file path")
    parser.add_argument("--pretrained", default=None,
                        help="pretrain checkpoint path (finetune)")
    parser.add_argument("--checkpoint", default=None,
                        help="finetune checkpoint path (evaluate / report)")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = RunConfig.load(args.config)
        os.makedirs(args.out, exist_ok=True)
        handler = globals()[f"cmd_{args.command}"]
        return handler(config, args, args.out)
    except ConfigurationError as exc:
        print(f"automixer-error kind=configuration reason={exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"automixer-error kind=data reason={exc}", file=sys.stderr)
        return 3
    except TrainingDiverged as exc:
        print(f"automixer-error kind=training reason={exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
