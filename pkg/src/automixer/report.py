"""Static actionable-insight report: report.json plus a self-contained HTML view.

Forecast view: top-k KPIs ranked by priority score, where the deviation
score is the maximum absolute forecast deviation from the trailing
history mean in training-std units and priority = deviation * per-KPI
weight. Downtime and revenue estimates come from the historical incident
with the nearest deviation magnitude for that KPI. Past view: previous
period forecasts against realized values, hit = window MSE (normalized
units) below a configurable threshold, with saved/lost estimates from the
matched incident.

The JSON is byte-stable: keys sorted, floats fixed at 6 significant
digits, ties broken by KPI name. The HTML page is a pure view of the
JSON (every number in the page appears in the JSON).
"""

from __future__ import annotations

import csv
import html
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class Incident:
    kpi: str
    deviation: float
    downtime_minutes: float
    revenue_loss: float


def load_incident_table(path):
    """CSV with header kpi,deviation,downtime_minutes,revenue_loss."""
    incidents = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"kpi", "deviation", "downtime_minutes", "revenue_loss"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataError(f"{path}: incident table needs columns {sorted(required)}")
        for rowno, row in enumerate(reader, start=2):
            try:
                incidents.append(Incident(
                    row["kpi"], float(row["deviation"]),
                    float(row["downtime_minutes"]), float(row["revenue_loss"])))
            except ValueError:
                raise DataError(f"{path}: row {rowno}: non-numeric value") from None
    return incidents


def nearest_incident(incidents, kpi, deviation):
    """Incident for this KPI with deviation magnitude closest to the score."""
    candidates = [inc for inc in incidents if inc.kpi == kpi]
    if not candidates:
        return None
    return min(candidates, key=lambda inc: (abs(inc.deviation - deviation), inc.deviation))


def _sig6(value):
    if value is None:
        return None
    return float(f"{float(value):.6g}")


def build_report(kpi_names, forecasts, history, kpi_std, *, incidents=None,
                 weights=None, k=3, past=None, hit_threshold=0.25,
                 generated_at=None):
    """Assemble the report structure.

    forecasts/history: raw-unit arrays of shape (H, K) and (T, K) with K
    KPI channels in ``kpi_names`` order; kpi_std: per-KPI training-split
    standard deviations used to express deviations in std units.
    ``past``: optional list of dicts with keys kpi, forecast, actual
    (normalized-unit arrays) for the previous period.
    """
    forecasts = np.asarray(forecasts, dtype=np.float64)
    history = np.asarray(history, dtype=np.float64)
    kpi_std = np.asarray(kpi_std, dtype=np.float64)
    weights = dict(weights or {})
    incidents = incidents or []

    entries = []
    for j, name in enumerate(kpi_names):
        trail_mean = history[:, j].mean()
        deviation = float(np.max(np.abs(forecasts[:, j] - trail_mean)) / kpi_std[j])
        weight = float(weights.get(name, 1.0))
        priority = deviation * weight
        entry = {
            "kpi": name,
            "forecast": [_sig6(v) for v in forecasts[:, j]],
            "deviation_score": _sig6(deviation),
            "weight": _sig6(weight),
            "priority_score": _sig6(priority),
            "estimated_downtime_minutes": None,
            "estimated_revenue_loss": None,
            "matched_incident": None,
        }
        match = nearest_incident(incidents, name, deviation)
        if match is not None:
            entry["estimated_downtime_minutes"] = _sig6(match.downtime_minutes)
            entry["estimated_revenue_loss"] = _sig6(match.revenue_loss)
            entry["matched_incident"] = {
                "kpi": match.kpi, "deviation": _sig6(match.deviation),
                "downtime_minutes": _sig6(match.downtime_minutes),
                "revenue_loss": _sig6(match.revenue_loss)}
        entries.append(entry)
    # descending priority, stable name-ordered tie-break
    entries.sort(key=lambda e: (-e["priority_score"], e["kpi"]))
    forecast_view = entries[:k]

    past_view = []
    for item in past or []:
        fc = np.asarray(item["forecast"], dtype=np.float64)
        actual = np.asarray(item["actual"], dtype=np.float64)
        window_mse = float(np.mean((fc - actual) ** 2))
        hit = window_mse < hit_threshold
        deviation = float(np.max(np.abs(actual - actual.mean())))
        match = nearest_incident(incidents, item["kpi"], deviation)
        record = {
            "kpi": item["kpi"],
            "window_mse": _sig6(window_mse),
            "hit": bool(hit),
            "downtime_minutes_saved" if hit else "downtime_minutes_incurred":
                _sig6(match.downtime_minutes) if match else None,
            "revenue_saved" if hit else "revenue_lost":
                _sig6(match.revenue_loss) if match else None,
            "matched_incident": {
                "kpi": match.kpi, "deviation": _sig6(match.deviation),
                "downtime_minutes": _sig6(match.downtime_minutes),
                "revenue_loss": _sig6(match.revenue_loss)} if match else None,
        }
        past_view.append(record)
    past_view.sort(key=lambda e: (-(e["window_mse"] or 0), e["kpi"]))
    past_view = past_view[:k]

    report = {
        "generated_at": generated_at,
        "k": k,
        "hit_threshold": _sig6(hit_threshold),
        "forecast_view": forecast_view,
        "past_view": past_view,
    }
    if not incidents:
        report["notice"] = "incident table empty: downtime/revenue estimates omitted"
    return report


def render_html(report):
    """Self-contained static page; a pure view of the JSON content."""
    def fmt(v):
        return "n/a" if v is None else html.escape(f"{v:g}" if isinstance(v, float) else str(v))

    rows_fc = "".join(
        "<tr><td>{kpi}</td><td>{dev}</td><td>{prio}</td><td>{down}</td>"
        "<td>{rev}</td></tr>".format(
            kpi=fmt(e["kpi"]), dev=fmt(e["deviation_score"]),
            prio=fmt(e["priority_score"]),
            down=fmt(e["estimated_downtime_minutes"]),
            rev=fmt(e["estimated_revenue_loss"]))
        for e in report["forecast_view"])
    rows_past = "".join(
        "<tr><td>{kpi}</td><td>{mse}</td><td>{hit}</td><td>{impact}</td></tr>".format(
            kpi=fmt(e["kpi"]), mse=fmt(e["window_mse"]),
            hit="hit" if e["hit"] else "miss",
            impact=fmt(e.get("revenue_saved", e.get("revenue_lost"))))
        for e in report["past_view"])
    notice = f"<p class='notice'>{fmt(report['notice'])}</p>" if "notice" in report else ""
    return f"""<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Business insight report</title>
<style>
body {{ font-family: sans-serif; margin: 2em; }}
table {{ border-collapse: collapse; margin-bottom: 2em; }}
td, th {{ border: 1px solid #999; padding: 0.4em 0.8em; text-align: right; }}
th {{ background: #eee; }}
td:first-child {{ text-align: left; }}
.notice {{ color: #a40; }}
</style></head><body>
<h1>Business insight report</h1>
<p>generated at: {fmt(report["generated_at"])} | top-k: {fmt(report["k"])}</p>
{notice}
<h2>Forecast view (next period)</h2>
<table><tr><th>KPI</th><th>deviation</th><th>priority</th>
<th>est. downtime (min)</th><th>est. revenue loss</th></tr>{rows_fc}</table>
<h2>Past view (previous period)</h2>
<table><tr><th>KPI</th><th>window MSE</th><th>hit/miss</th>
<th>revenue impact</th></tr>{rows_past}</table>
</body></html>
"""


def emit_report(report, out_dir):
    """Write report.json and report.html under ``out_dir``; returns both paths."""
    import os
    json_path = os.path.join(out_dir, "report.json")
    html_path = os.path.join(out_dir, "report.html")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(html_path, "w", encoding="utf-8") as fh:
        fh.write(render_html(report))
    return json_path, html_path
