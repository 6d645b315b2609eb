import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from noisytext.bench import (
    NoiseSetting, Report, ReportRow, aggregate, delta_table, derive_seed,
    emit_report, format_delta, format_row, parse_report_csv, parse_spec,
    report_csv, run_experiment, spec_hash,
)
from noisytext.errors import ConfigError


def tiny_spec(**kw):
    raw = {
        "methods": ["WN"],
        "noise": [{"kind": "uniform", "level": 0.4}],
        "trials": 2,
        "base_seed": 0,
        "synthetic": {"k": 2, "vocab_size": 40, "keywords_per_class": 4,
                      "doc_length": 8, "signal_rate": 0.8, "n_docs": 200,
                      "seed": 1},
        "n_test": 60,
        "model": {"arch": "bow_linear", "k": 2, "vocab_size": 43},
        "train_overrides": {"epochs": 2, "learning_rate": 0.01},
    }
    raw.update(kw)
    return parse_spec(raw)


class TestAggregate:
    def test_fixed_trials(self):
        mean, std = aggregate([90, 91, 92, 93, 94])
        assert mean == pytest.approx(92.00)
        assert std == pytest.approx(1.58, abs=0.005)

    def test_single_trial_zero_std(self):
        mean, std = aggregate([87.5])
        assert (mean, std) == (87.5, 0.0)

    @given(st.lists(st.floats(0, 100), min_size=2, max_size=10))
    def test_matches_direct_recomputation(self, accs):
        mean, std = aggregate(accs)
        assert mean == pytest.approx(np.mean(accs))
        assert std == pytest.approx(np.std(accs, ddof=1))


class TestFormatRow:
    def test_reference_fixture(self):
        assert format_row(92.40, 0.25) == "92.40±0.25"

    def test_zeros(self):
        assert format_row(0, 0) == "0.00±0.00"

    def test_half_up_rounding(self):
        assert format_row(85.494, 0.756) == "85.49±0.76"
        assert format_row(85.495, 0.755) == "85.50±0.76"


class TestFormatDelta:
    def test_up(self):
        assert format_delta(2.13) == "2.13↑"

    def test_down(self):
        assert format_delta(-1.0) == "1.00↓"

    def test_zero_no_arrow(self):
        assert format_delta(0.0) == "0.00"


class TestDeltaTable:
    def report(self, orig, tapt):
        rows = [ReportRow("WN", "uniform@0.4", False, orig, 0.5, 5, (1,)),
                ReportRow("WN", "uniform@0.4", True, tapt, 0.5, 5, (2,))]
        return Report(rows, {})

    def test_table1_fixture(self):
        rows = delta_table(self.report(85.49, 87.62))
        assert rows[0]["rendered"] == "85.49 | 2.13↑"

    def test_zero_delta(self):
        rows = delta_table(self.report(50.0, 50.0))
        assert rows[0]["rendered"].endswith("| 0.00")

    def test_negative_delta(self):
        rows = delta_table(self.report(50.0, 49.0))
        assert rows[0]["rendered"].endswith("| 1.00↓")

    def test_antisymmetric(self):
        a = delta_table(self.report(60.0, 63.5))[0]["delta"]
        b = delta_table(self.report(63.5, 60.0))[0]["delta"]
        assert a == pytest.approx(-b)

    def test_unmatched_cells_error(self):
        rows = [ReportRow("WN", "uniform@0.4", False, 80.0, 0.5, 5, (1,))]
        with pytest.raises(ConfigError, match="unmatched"):
            delta_table(Report(rows, {}))


class TestDeriveSeed:
    def test_stable(self):
        assert derive_seed(0, "WN", "uniform@0.4", False, 0) == \
            derive_seed(0, "WN", "uniform@0.4", False, 0)

    def test_cell_independent(self):
        a = derive_seed(0, "WN", "uniform@0.4", False, 0)
        b = derive_seed(0, "CT", "uniform@0.4", False, 0)
        c = derive_seed(0, "WN", "uniform@0.6", False, 0)
        assert len({a, b, c}) == 3


class TestRunExperiment:
    def test_report_shape_and_determinism(self):
        spec = tiny_spec()
        r1 = run_experiment(spec)
        r2 = run_experiment(spec)
        assert len(r1.rows) == 1
        assert report_csv(r1) == report_csv(r2)  # timestamp lives elsewhere
        assert r1.provenance["timestamp"] != "" and "spec_hash" in r1.provenance

    def test_single_trial_std_zero(self):
        spec = tiny_spec(trials=1)
        report = run_experiment(spec)
        assert report.rows[0].std == 0.0

    def test_mean_std_match_per_trial_provenance(self):
        spec = tiny_spec(trials=3)
        report = run_experiment(spec)
        row = report.rows[0]
        accs = report.provenance["per_trial_accuracy"][
            f"{row.method}|{row.noise}|{int(row.tapt)}"]
        mean, std = aggregate(accs)
        assert (row.mean, row.std) == (mean, std)

    def test_cell_independence(self):
        full = run_experiment(tiny_spec(methods=["WN", "NV"]))
        only_wn = run_experiment(tiny_spec(methods=["WN"]))
        wn_full = [r for r in full.rows if r.method == "WN"][0]
        assert wn_full.mean == only_wn.rows[0].mean
        assert wn_full.seeds == only_wn.rows[0].seeds

    def test_tapt_both_produces_pairs(self):
        spec = tiny_spec(tapt="both",
                         model={"arch": "embed_mlp", "k": 2, "vocab_size": 43,
                                "embed_dim": 8, "hidden_dim": 8})
        report = run_experiment(spec)
        assert len(report.rows) == 2
        assert delta_table(report)  # does not raise

    def test_all_methods_run(self):
        spec = tiny_spec(methods=["NV", "WN", "CT", "NMat", "NMwR", "LS"],
                         trials=1)
        report = run_experiment(spec)
        assert {r.method for r in report.rows} == \
            {"NV", "WN", "CT", "NMat", "NMwR", "LS"}

    def test_bad_method_rejected(self):
        with pytest.raises(ConfigError, match="unknown method"):
            tiny_spec(methods=["XX"])

    def test_report_json_round_trip(self):
        report = run_experiment(tiny_spec())
        back = Report.from_json(report.to_json())
        assert back.rows == report.rows

    def test_spec_hash_stable(self):
        assert spec_hash(tiny_spec()) == spec_hash(tiny_spec())
        assert spec_hash(tiny_spec()) != spec_hash(tiny_spec(trials=3))


class TestEmitReport:
    def test_empty_report_header_only(self, tmp_path):
        p = tmp_path / "r.csv"
        emit_report(Report([], {}), "csv", p)
        assert p.read_text().strip() == "method,noise,tapt,mean,std,trials,seeds"

    def test_two_cells_seven_columns(self, tmp_path):
        rows = [ReportRow("WN", "clean", False, 90.0, 1.0, 2, (1, 2)),
                ReportRow("LS", "clean", False, 91.0, 0.5, 2, (3, 4))]
        p = tmp_path / "r.csv"
        emit_report(Report(rows, {}), "csv", p)
        lines = p.read_text().strip().splitlines()
        assert len(lines) == 3
        assert all(len(l.split(",")) == 7 for l in lines)

    def test_csv_round_trip(self, tmp_path):
        rows = [ReportRow("WN", "uniform@0.4", True, 90.123, 1.567, 2, (1, 2))]
        p = tmp_path / "r.csv"
        emit_report(Report(rows, {}), "csv", p)
        assert parse_report_csv(p.read_text()) == rows

    def test_markdown_layout(self, tmp_path):
        rows = [ReportRow("WN", "uniform@0.4", False, 90.0, 1.0, 2, (1,)),
                ReportRow("WN", "uniform@0.6", False, 85.0, 2.0, 2, (1,))]
        p = tmp_path / "r.md"
        emit_report(Report(rows, {}), "markdown", p)
        text = p.read_text()
        assert "| Method | uniform@0.4 | uniform@0.6 |" in text
        assert "| WN | 90.00±1.00 | 85.00±2.00 |" in text

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ConfigError):
            emit_report(Report([], {}), "xml", tmp_path / "r.xml")


class TestNoiseSetting:
    def test_ids(self):
        assert NoiseSetting("uniform", 0.4).id == "uniform@0.4"
        assert NoiseSetting("none").id == "clean"
        assert NoiseSetting("rules", rules_path="/x/rules.json").id == \
            "rules:rules.json"
