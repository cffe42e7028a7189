"""Metrics, naive baselines, and the benchmark / ablation harness.

Conventions fixed here:
  * all metrics are computed on normalized data over non-overlapping test
    windows (stride = forecast length), so no test point is double-counted;
  * PCC is computed per channel over the concatenation of all test-window
    predictions, then averaged over the masked channels;
  * table cells aggregate seeds by the median;
  * classification accuracy is subset (exact-match) accuracy at a 0.5
    probability threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .data import GuardedFrame, event_labels, make_windows
from .errors import ConfigurationError, UsageError
from .training import TrainSpec, default_config, finetune, pretrain

BENCHMARK_VARIANTS = (
    "automixer_gru", "automixer_gru_cc", "automixer_lstm", "automixer_lstm_cc",
    "tsmixer", "tsmixer_cc", "persistence",
)


# ---------------------------------------------------------------------------
# Metrics


def mse_masked(pred, actual, mask):
    """Mean over masked channels of per-channel MSE across windows and steps.

    ``pred``/``actual``: (n_windows, H, C) or (H, C).
    """
    pred, actual = np.asarray(pred), np.asarray(actual)
    if pred.shape != actual.shape:
        raise UsageError(f"shape mismatch {pred.shape} vs {actual.shape}")
    mask = list(mask)
    if not mask:
        raise UsageError("mse_masked: empty channel mask")
    diff = (pred - actual)[..., mask]
    leading = tuple(range(diff.ndim - 1))
    return float((diff ** 2).mean(axis=leading).mean())


def pcc_masked(pred, actual, mask, warn=None):
    """Per-channel Pearson correlation over concatenated windows, averaged.

    Constant actual channels are excluded with a warning callback; if all
    are excluded the metric is undefined.
    """
    pred, actual = np.asarray(pred), np.asarray(actual)
    if pred.shape != actual.shape:
        raise UsageError(f"shape mismatch {pred.shape} vs {actual.shape}")
    mask = list(mask)
    if not mask:
        raise UsageError("pcc_masked: empty channel mask")
    p = pred[..., mask].reshape(-1, len(mask))
    a = actual[..., mask].reshape(-1, len(mask))
    values = []
    for j, ch in enumerate(mask):
        a_j = a[:, j]
        p_j = p[:, j]
        sa = a_j.std()
        sp = p_j.std()
        if sa == 0:
            if warn:
                warn(f"channel {ch} constant in actuals; excluded from PCC")
            continue
        if sp == 0:
            values.append(0.0)   # constant prediction carries no correlation
            continue
        cov = np.mean((a_j - a_j.mean()) * (p_j - p_j.mean()))
        values.append(float(cov / (sa * sp)))
    if not values:
        raise UsageError("pcc_masked: all masked channels constant; PCC undefined")
    return float(np.mean(values))


def subset_accuracy(pred_labels, true_labels):
    """Fraction of windows whose whole predicted label vector matches exactly."""
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise UsageError(
            f"label shape mismatch {pred_labels.shape} vs {true_labels.shape}")
    return float(np.mean(np.all(pred_labels == true_labels, axis=-1)))


def baseline_persistence(x, horizon):
    """Repeat the last observed row ``horizon`` times."""
    x = np.asarray(x)
    return np.repeat(x[-1:], horizon, axis=0)


# ---------------------------------------------------------------------------
# Test-set evaluation


@dataclass
class MetricReport:
    per_channel_mse: list
    kpi_mse: float
    kpi_pcc: float
    window_count: int
    config_hash: str
    seed: int
    event_mse: float = None
    subset_acc: float = None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "per_channel_mse": [float(v) for v in self.per_channel_mse],
            "kpi_mse": self.kpi_mse, "kpi_pcc": self.kpi_pcc,
            "event_mse": self.event_mse, "subset_acc": self.subset_acc,
            "window_count": self.window_count,
            "config_hash": self.config_hash, "seed": self.seed,
            **self.extras,
        }


def _test_windows(dataset):
    test = dataset.test.unlock()
    windows = make_windows(test, dataset.sl, dataset.fl, stride=dataset.fl)
    if not windows:
        raise ConfigurationError("test split too short for one evaluation window")
    xs = np.stack([w.x for w in windows])
    ys = np.stack([w.y for w in windows])
    return xs, ys, windows


def _batched_forward(fn, xs, chunk=256):
    outs = []
    with ad.no_grad():
        for start in range(0, len(xs), chunk):
            outs.append(fn(xs[start:start + chunk]).data)
    return np.concatenate(outs, axis=0)


def evaluate_forecast(model, dataset, seed=0, config_hash=""):
    """Forecast metrics on the non-overlapping test windows."""
    xs, ys, _ = _test_windows(dataset)
    preds = _batched_forward(lambda xb: model.forecast(xb, training=False), xs)
    schema = dataset.schema
    per_channel = ((preds - ys) ** 2).mean(axis=(0, 1))
    report = MetricReport(
        per_channel_mse=list(per_channel),
        kpi_mse=mse_masked(preds, ys, schema.kpi_mask) if schema.kpi_mask else None,
        kpi_pcc=pcc_masked(preds, ys, schema.kpi_mask) if schema.kpi_mask else None,
        window_count=len(xs), config_hash=config_hash, seed=seed)
    if schema.event_mask:
        report.event_mse = mse_masked(preds, ys, schema.event_mask)
    return report


def evaluate_persistence(dataset, seed=0):
    xs, ys, _ = _test_windows(dataset)
    preds = np.stack([baseline_persistence(x, dataset.fl) for x in xs])
    schema = dataset.schema
    report = MetricReport(
        per_channel_mse=list(((preds - ys) ** 2).mean(axis=(0, 1))),
        kpi_mse=mse_masked(preds, ys, schema.kpi_mask) if schema.kpi_mask else None,
        kpi_pcc=pcc_masked(preds, ys, schema.kpi_mask) if schema.kpi_mask else None,
        window_count=len(xs), config_hash="persistence", seed=seed)
    if schema.event_mask:
        report.event_mse = mse_masked(preds, ys, schema.event_mask)
    return report


def evaluate_classification(model, dataset, seed=0, config_hash="", threshold=0.5):
    """Subset accuracy of event-occurrence prediction on test windows."""
    xs, _, windows = _test_windows(dataset)
    raw_test = dataset.raw_test.unlock()
    truth = np.stack([
        event_labels(raw_test.values[w.origin + dataset.sl:
                                     w.origin + dataset.sl + dataset.fl],
                     dataset.schema)
        for w in windows])
    logits = _batched_forward(lambda xb: model.classify(xb, training=False), xs)
    probs = 1.0 / (1.0 + np.exp(-logits))
    preds = (probs >= threshold).astype(np.float64)
    acc = subset_accuracy(preds, truth)
    zeros_acc = subset_accuracy(np.zeros_like(truth), truth)
    return MetricReport(
        per_channel_mse=[], kpi_mse=None, kpi_pcc=None,
        window_count=len(xs), config_hash=config_hash, seed=seed,
        subset_acc=acc, extras={"all_zeros_subset_acc": zeros_acc})


# ---------------------------------------------------------------------------
# Harness


def variant_config(name, base_config):
    """Translate a benchmark variant name into config overrides."""
    if name not in BENCHMARK_VARIANTS:
        raise ConfigurationError(f"unknown variant {name!r}")
    config = dict(base_config)
    if name == "persistence":
        return config
    parts = name.split("_")
    if parts[0] == "automixer":
        config["use_autoencoder"] = True
        config["cell_kind"] = parts[1]
        config["reconcile"] = parts[-1] == "cc"
    else:  # tsmixer
        config["use_autoencoder"] = False
        config["reconcile"] = parts[-1] == "cc"
    return config


@dataclass
class BenchCell:
    variant: str
    metric: str
    value: float
    rank: str = ""        # "best" | "second" | ""
    failed: bool = False
    error: str = ""


@dataclass
class BenchTable:
    title: str
    cells: list = field(default_factory=list)
    reports: list = field(default_factory=list)   # raw per-seed records

    def value(self, variant, metric):
        for cell in self.cells:
            if cell.variant == variant and cell.metric == metric:
                return None if cell.failed else cell.value
        return None

    def mark_ranks(self):
        """Best/second-best markers per metric column, re-derivable from values."""
        metrics = sorted({c.metric for c in self.cells})
        for metric in metrics:
            cells = [c for c in self.cells if c.metric == metric and not c.failed]
            higher_better = metric in ("pcc", "subset_acc")
            cells.sort(key=lambda c: c.value, reverse=higher_better)
            for c in cells:
                c.rank = ""
            if cells:
                cells[0].rank = "best"
            if len(cells) > 1:
                cells[1].rank = "second"

    def render(self):
        lines = [self.title, "=" * len(self.title)]
        metrics = sorted({c.metric for c in self.cells})
        variants = []
        for c in self.cells:
            if c.variant not in variants:
                variants.append(c.variant)
        header = f"{'variant':<22}" + "".join(f"{m:>14}" for m in metrics)
        lines.append(header)
        for v in variants:
            row = f"{v:<22}"
            for m in metrics:
                cell = next((c for c in self.cells
                             if c.variant == v and c.metric == m), None)
                if cell is None:
                    row += f"{'-':>14}"
                elif cell.failed:
                    row += f"{'failed':>14}"
                else:
                    marker = {"best": "*", "second": "+"}.get(cell.rank, "")
                    row += f"{cell.value:>13.4f}{marker or ' '}"
            lines.append(row)
        lines.append("(* best, + second-best per column)")
        return "\n".join(lines)

    def records(self):
        recs = []
        for c in self.cells:
            recs.append({"table": self.title, "variant": c.variant,
                         "metric": c.metric,
                         "value": None if c.failed else c.value,
                         "rank": c.rank, "failed": c.failed, "error": c.error})
        return recs

    def save_records(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records() + [r for r in self.reports]:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _train_variant(dataset, variant, base_config, seed, train_kwargs,
                   pretrain_cache=None):
    """Pretrain (if needed) and finetune one variant; returns (report, ckpt)."""
    config = variant_config(variant, base_config)
    if variant == "persistence":
        return evaluate_persistence(dataset, seed=seed), None
    pre_ckpt = None
    mode = "NPT"
    if config.get("use_autoencoder", True):
        mode = "PT"
        key = (config["cell_kind"], config["cr"], seed)
        if pretrain_cache is not None and key in pretrain_cache:
            pre_ckpt = pretrain_cache[key]
        else:
            pre_spec = TrainSpec(phase="pretrain", config=config, seed=seed,
                                 **train_kwargs)
            pre_ckpt = pretrain(dataset, pre_spec)
            if pretrain_cache is not None:
                pretrain_cache[key] = pre_ckpt
    spec = TrainSpec(phase="finetune", config=config, task="kpi-forecast",
                     mode=mode, seed=seed, **train_kwargs)
    ckpt, model = finetune(dataset, spec, pretrain_ckpt=pre_ckpt)
    report = evaluate_forecast(model, dataset, seed=seed,
                               config_hash=ckpt.content_hash())
    return report, ckpt


def _fresh_eval_dataset(dataset):
    # guards are single-use; re-arm them for each evaluation pass
    return replace(dataset,
                   test=GuardedFrame(dataset.test._frame),
                   raw_test=GuardedFrame(dataset.raw_test._frame))


def run_benchmark(dataset, variants=BENCHMARK_VARIANTS, seeds=(0, 1, 2),
                  base_config=None, **train_kwargs):
    """Median-over-seeds comparison of model variants on one dataset."""
    if not seeds:
        raise ConfigurationError("run_benchmark requires at least one seed")
    base_config = base_config or default_config()
    table = BenchTable(title="Biz-KPI forecasting benchmark")
    pretrain_cache = {}
    for variant in variants:
        per_seed = {"mse": [], "pcc": []}
        for seed in seeds:
            try:
                eval_ds = _fresh_eval_dataset(dataset)
                report, _ = _train_variant(eval_ds, variant, base_config, seed,
                                           train_kwargs, pretrain_cache)
            except Exception as exc:  # failed run -> failed cell, table continues
                table.cells.append(BenchCell(variant, "mse", float("nan"),
                                             failed=True, error=str(exc)))
                table.cells.append(BenchCell(variant, "pcc", float("nan"),
                                             failed=True, error=str(exc)))
                per_seed = None
                break
            per_seed["mse"].append(report.kpi_mse)
            per_seed["pcc"].append(report.kpi_pcc)
            table.reports.append({"table": table.title, "variant": variant,
                                  **report.to_dict()})
        if per_seed is not None:
            table.cells.append(BenchCell(variant, "mse",
                                         float(np.median(per_seed["mse"]))))
            table.cells.append(BenchCell(variant, "pcc",
                                         float(np.median(per_seed["pcc"]))))
    table.mark_ranks()
    return table


def sweep_cr(dataset, cr_list, variant="automixer_gru_cc", seed=0,
             base_config=None, **train_kwargs):
    """Test MSE across compression ratios; infeasible ratios render as '-'.

    Best cr is selected on validation loss and reported on test.
    """
    from .autoencoder import compressed_channels
    base_config = base_config or default_config()
    channels = len(dataset.schema)
    rows = []
    feasible = []
    for cr in cr_list:
        config = dict(base_config, cr=cr)
        try:
            compressed_channels(channels, cr)
        except ConfigurationError as exc:
            rows.append({"cr": cr, "feasible": False, "val_loss": None,
                         "test_mse": None, "note": str(exc)})
            continue
        eval_ds = _fresh_eval_dataset(dataset)
        report, ckpt = _train_variant(eval_ds, variant, config, seed,
                                      train_kwargs, pretrain_cache={})
        rows.append({"cr": cr, "feasible": True,
                     "val_loss": ckpt.metadata["best_val_loss"],
                     "test_mse": report.kpi_mse, "note": ""})
        feasible.append(rows[-1])
    if not feasible:
        raise ConfigurationError("all compression ratios infeasible for this dataset")
    best = min(feasible, key=lambda r: r["val_loss"])
    return {"variant": variant, "rows": rows, "selected_cr": best["cr"],
            "selected_test_mse": best["test_mse"]}


def render_sweep(sweep):
    lines = [f"compression-ratio sweep ({sweep['variant']})",
             f"{'cr':>6}{'val_loss':>12}{'test_mse':>12}"]
    for row in sweep["rows"]:
        if not row["feasible"]:
            lines.append(f"{row['cr']:>6.2f}{'-':>12}{'-':>12}")
        else:
            sel = " <- selected" if row["cr"] == sweep["selected_cr"] else ""
            lines.append(
                f"{row['cr']:>6.2f}{row['val_loss']:>12.4f}"
                f"{row['test_mse']:>12.4f}{sel}")
    return "\n".join(lines)


def ablate_pretraining(dataset, variant="automixer_gru_cc", seeds=(0, 1, 2),
                       base_config=None, **train_kwargs):
    """Paired PT/NPT finetuning runs per seed; reports both MSEs and % gain."""
    base_config = base_config or default_config()
    config = variant_config(variant, base_config)
    if not config.get("use_autoencoder", True):
        raise ConfigurationError("pretraining ablation needs an autoencoder variant")
    rows = []
    for seed in seeds:
        pre_spec = TrainSpec(phase="pretrain", config=config, seed=seed,
                             **train_kwargs)
        pre_ckpt = pretrain(dataset, pre_spec)
        results = {}
        for mode in ("PT", "NPT"):
            spec = TrainSpec(phase="finetune", config=config, task="kpi-forecast",
                             mode=mode, seed=seed, **train_kwargs)
            ckpt, model = finetune(
                dataset, spec, pretrain_ckpt=pre_ckpt if mode == "PT" else None)
            report = evaluate_forecast(model, _fresh_eval_dataset(dataset),
                                       seed=seed, config_hash=ckpt.content_hash())
            results[mode] = report.kpi_mse
        rows.append({"seed": seed, "pt_mse": results["PT"], "npt_mse": results["NPT"]})
    pt = float(np.median([r["pt_mse"] for r in rows]))
    npt = float(np.median([r["npt_mse"] for r in rows]))
    improvement = 100.0 * (npt - pt) / npt if npt else 0.0
    return {"variant": variant, "rows": rows, "pt_median": pt,
            "npt_median": npt, "improvement_pct": improvement}
