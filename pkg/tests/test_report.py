import json
import re

import numpy as np
import pytest

from automixer.errors import DataError
from automixer.report import (Incident, build_report, emit_report,
                              load_incident_table, nearest_incident,
                              render_html)


def incident_csv(tmp_path, rows):
    path = tmp_path / "incidents.csv"
    lines = ["kpi,deviation,downtime_minutes,revenue_loss"]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestIncidentTable:
    def test_load(self, tmp_path):
        path = incident_csv(tmp_path, [("latency", 2.5, 30, 1000.0),
                                       ("orders", 1.0, 5, 250.0)])
        incidents = load_incident_table(path)
        assert len(incidents) == 2
        assert incidents[0] == Incident("latency", 2.5, 30.0, 1000.0)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("kpi,deviation\nlatency,2.5\n")
        with pytest.raises(DataError, match="columns"):
            load_incident_table(path)

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("kpi,deviation,downtime_minutes,revenue_loss\n"
                        "latency,high,30,100\n")
        with pytest.raises(DataError, match="row 2"):
            load_incident_table(path)


class TestNearestIncident:
    def test_brute_force_matching(self):
        rng = np.random.default_rng(0)
        incidents = [Incident("a", float(d), float(d * 10), float(d * 100))
                     for d in rng.uniform(0, 5, 20)]
        for _ in range(50):
            target = float(rng.uniform(0, 5))
            got = nearest_incident(incidents, "a", target)
            want = min(incidents, key=lambda i: (abs(i.deviation - target),
                                                 i.deviation))
            assert got is want

    def test_other_kpi_ignored(self):
        incidents = [Incident("a", 1.0, 1, 1), Incident("b", 0.9, 2, 2)]
        assert nearest_incident(incidents, "a", 0.9).kpi == "a"

    def test_no_match(self):
        assert nearest_incident([], "a", 1.0) is None


def sample_inputs(seed=0, n_kpi=4):
    rng = np.random.default_rng(seed)
    names = [f"kpi_{i}" for i in range(n_kpi)]
    history = rng.normal(10, 2, (48, n_kpi))
    forecasts = rng.normal(10, 2, (24, n_kpi))
    std = history.std(axis=0)
    return names, forecasts, history, std


class TestBuildReport:
    def test_top_k_by_priority(self):
        names, forecasts, history, std = sample_inputs()
        weights = {"kpi_2": 100.0}
        report = build_report(names, forecasts, history, std,
                              weights=weights, k=2)
        assert len(report["forecast_view"]) == 2
        assert report["forecast_view"][0]["kpi"] == "kpi_2"
        prios = [e["priority_score"] for e in report["forecast_view"]]
        assert prios == sorted(prios, reverse=True)

    def test_deviation_score_oracle(self):
        names, forecasts, history, std = sample_inputs(1)
        report = build_report(names, forecasts, history, std, k=4)
        by_name = {e["kpi"]: e for e in report["forecast_view"]}
        j = 1
        want = np.max(np.abs(forecasts[:, j] - history[:, j].mean())) / std[j]
        assert by_name["kpi_1"]["deviation_score"] == float(f"{want:.6g}")

    def test_zero_deviation_ties_break_by_name(self):
        names = ["zeta", "alpha", "mid"]
        history = np.full((48, 3), 5.0)
        forecasts = np.full((24, 3), 5.0)
        report = build_report(names, forecasts, history, np.ones(3), k=3)
        assert [e["kpi"] for e in report["forecast_view"]] == \
            ["alpha", "mid", "zeta"]

    def test_incident_estimates_attached(self):
        names, forecasts, history, std = sample_inputs(3)
        incidents = [Incident("kpi_0", 0.5, 30.0, 1000.0),
                     Incident("kpi_0", 5.0, 120.0, 9000.0)]
        report = build_report(names, forecasts, history, std,
                              incidents=incidents, k=4)
        entry = next(e for e in report["forecast_view"] if e["kpi"] == "kpi_0")
        assert entry["estimated_downtime_minutes"] in (30.0, 120.0)
        assert entry["matched_incident"]["kpi"] == "kpi_0"
        assert "notice" not in report

    def test_empty_incident_table_notice(self):
        names, forecasts, history, std = sample_inputs(4)
        report = build_report(names, forecasts, history, std)
        assert "incident table empty" in report["notice"]
        assert all(e["estimated_revenue_loss"] is None
                   for e in report["forecast_view"])

    def test_past_view_hit_and_miss(self):
        names, forecasts, history, std = sample_inputs(5)
        incidents = [Incident("kpi_0", 1.0, 60.0, 5000.0)]
        past = [
            {"kpi": "kpi_0", "forecast": np.zeros(24), "actual": np.zeros(24)},
            {"kpi": "kpi_0", "forecast": np.zeros(24),
             "actual": np.full(24, 3.0)},
        ]
        report = build_report(names, forecasts, history, std,
                              incidents=incidents, past=past,
                              hit_threshold=0.25)
        hits = {e["hit"]: e for e in report["past_view"]}
        assert hits[True]["window_mse"] == 0.0
        assert "downtime_minutes_saved" in hits[True]
        assert hits[False]["window_mse"] == 9.0
        assert "revenue_lost" in hits[False]

    def test_byte_identical_rerun(self, tmp_path):
        names, forecasts, history, std = sample_inputs(6)
        incidents = [Incident("kpi_1", 2.0, 15.0, 100.0)]
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        out_a.mkdir()
        out_b.mkdir()
        for out in (out_a, out_b):
            report = build_report(names, forecasts, history, std,
                                  incidents=incidents, generated_at="t+100")
            emit_report(report, out)
        assert (out_a / "report.json").read_bytes() == \
            (out_b / "report.json").read_bytes()
        assert (out_a / "report.html").read_bytes() == \
            (out_b / "report.html").read_bytes()

    def test_six_significant_digits(self):
        names, forecasts, history, std = sample_inputs(7)
        report = build_report(names, forecasts, history, std, k=4)
        for entry in report["forecast_view"]:
            v = entry["deviation_score"]
            assert v == float(f"{v:.6g}")


class TestHtmlView:
    def test_every_number_in_html_appears_in_json(self):
        names, forecasts, history, std = sample_inputs(8)
        incidents = [Incident("kpi_0", 1.5, 45.0, 2000.0)]
        past = [{"kpi": "kpi_0", "forecast": np.zeros(4),
                 "actual": np.full(4, 0.1)}]
        report = build_report(names, forecasts, history, std,
                              incidents=incidents, past=past,
                              generated_at="t+42")
        page = render_html(report)
        json_blob = json.dumps(report)
        numbers = re.findall(r"<td>(-?\d[\d.e+-]*)</td>", page)
        assert numbers
        for num in numbers:
            assert f"{float(num):.6g}" in json_blob or num in json_blob, num

    def test_escapes_markup(self):
        report = build_report(["<script>"], np.ones((2, 1)), np.ones((4, 1)),
                              np.ones(1), k=1)
        assert "<script>" not in render_html(report).replace("&lt;script&gt;", "")
