"""End-to-end command-line behavior: artifacts, exit codes, reproducibility."""

import json

import numpy as np
import pytest

from robustval.cli import main
from robustval.estimators import SampleLedger


def run(argv):
    return main(argv)


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def fast_trainer():
    return ["--epochs", "30"]


class TestMargin:
    def test_loo_margin_equals_tau(self, tmp_path):
        out = tmp_path / "m.json"
        assert run(["robustness", "margin", "--spec", "loo", "--n", "8",
                    "--tau", "0.3", "--out", str(out)]) == 0
        payload = read_json(out)
        assert payload["result"]["margin"] == pytest.approx(0.3, rel=1e-12)
        assert payload["command"] == "robustness margin"

    def test_meta_sidecar_written(self, tmp_path):
        out = tmp_path / "m.json"
        run(["robustness", "margin", "--out", str(out)])
        meta = read_json(tmp_path / "m.json.meta.json")
        assert "written_at" in meta

    def test_rerun_payload_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["robustness", "margin", "--spec", "shapley", "--n", "9", "--tau", "0.2"]
        run(argv + ["--out", str(a)])
        run(argv + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_invalid_tau_exits_2_without_artifact(self, tmp_path):
        out = tmp_path / "m.json"
        assert run(["robustness", "margin", "--tau", "-0.5", "--out", str(out)]) == 2
        assert not out.exists()

    def test_config_file_merging_with_flag_precedence(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"n": 4, "tau": 0.5, "spec": "banzhaf"}))
        out = tmp_path / "m.json"
        assert run(["robustness", "margin", "--config", str(config),
                    "--tau", "0.25", "--out", str(out)]) == 0
        payload = read_json(out)
        assert payload["config"]["n"] == 4          # from the file
        assert payload["config"]["tau"] == 0.25     # flag wins
        # banzhaf margin tau * 2^(n/2 - 1) with n=4 -> 2 tau
        assert payload["result"]["margin"] == pytest.approx(0.5, rel=1e-12)

    def test_unknown_config_key_exits_2(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"taus": 0.5}))
        out = tmp_path / "m.json"
        assert run(["robustness", "margin", "--config", str(config),
                    "--out", str(out)]) == 2
        assert not out.exists()

    def test_missing_config_file_exits_2(self, tmp_path):
        assert run(["robustness", "margin", "--config",
                    str(tmp_path / "absent.json")]) == 2


class TestLipschitz:
    def test_banzhaf_example(self, tmp_path):
        out = tmp_path / "l.json"
        assert run(["robustness", "lipschitz", "--spec", "banzhaf", "--n", "6",
                    "--out", str(out)]) == 0
        result = read_json(out)["result"]
        assert result["closed_form"] == pytest.approx(0.25, rel=1e-12)
        assert result["numeric_operator_norm"] == pytest.approx(0.25, rel=1e-9)

    def test_no_numeric_flag_skips_matrix(self, tmp_path):
        out = tmp_path / "l.json"
        run(["robustness", "lipschitz", "--spec", "loo", "--n", "5",
             "--no-numeric", "--out", str(out)])
        assert "numeric_operator_norm" not in read_json(out)["result"]

    def test_large_n_defaults_to_closed_form_only(self, tmp_path):
        out = tmp_path / "l.json"
        assert run(["robustness", "lipschitz", "--spec", "shapley", "--n", "40",
                    "--out", str(out)]) == 0
        payload = read_json(out)
        assert payload["config"]["numeric"] is False
        assert "numeric_operator_norm" not in payload["result"]


class TestFliptest:
    def test_threshold_matches_margin_within_tolerance(self, tmp_path):
        out = tmp_path / "f.json"
        assert run(["robustness", "fliptest", "--spec", "banzhaf", "--n", "5",
                    "--tau", "0.1", "--pair", "0,2", "--out", str(out)]) == 0
        result = read_json(out)["result"]
        gap = abs(result["empirical_threshold"] - result["closed_form_margin"])
        assert gap / result["closed_form_margin"] < 0.01
        assert result["relative_gap"] < 0.01

    def test_same_point_pair_exits_2(self, tmp_path):
        assert run(["robustness", "fliptest", "--pair", "3,3",
                    "--out", str(tmp_path / "f.json")]) == 2

    def test_malformed_pair_exits_2(self, tmp_path):
        assert run(["robustness", "fliptest", "--pair", "3",
                    "--out", str(tmp_path / "f.json")]) == 2


class TestValue:
    def test_exact_banzhaf_artifact(self, tmp_path):
        out = tmp_path / "v.json"
        assert run(["value", "--synthetic", "6", "--method", "banzhaf-exact",
                    "--out", str(out)] + fast_trainer()) == 0
        payload = read_json(out)
        assert payload["result"]["spec"] == "banzhaf"
        assert payload["result"]["exact"] is True
        assert len(payload["result"]["values"]) == 6
        meta = read_json(tmp_path / "v.json.meta.json")
        assert meta["trainings"] > 0

    def test_rerun_is_byte_identical(self, tmp_path):
        argv = ["value", "--synthetic", "6", "--method", "msr", "--spec", "banzhaf",
                "--samples", "128", "--seed", "3"] + fast_trainer()
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(argv + ["--out", str(a)])
        run(argv + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_msr_writes_ledger_sidecar(self, tmp_path):
        out = tmp_path / "v.json"
        run(["value", "--synthetic", "5", "--method", "msr", "--samples", "64",
             "--out", str(out)] + fast_trainer())
        meta = read_json(tmp_path / "v.json.meta.json")
        ledger_path = tmp_path / "v.ledger.jsonl"
        assert meta["ledger_path"] == str(ledger_path)
        ledger = SampleLedger.load(ledger_path)
        assert ledger.n == 5 and len(ledger.draws) == 64

    def test_msr_non_banzhaf_routes_to_simple_mc(self, tmp_path):
        out = tmp_path / "v.json"
        assert run(["value", "--synthetic", "5", "--method", "msr",
                    "--spec", "shapley", "--samples", "100",
                    "--out", str(out)] + fast_trainer()) == 0
        payload = read_json(out)
        assert "routed to simple-mc" in payload["routing"]
        assert payload["config"]["method"] == "simple-mc"
        assert payload["result"]["estimator"] == "simple_mc"

    def test_permutation_budget_mapping(self, tmp_path):
        out = tmp_path / "v.json"
        run(["value", "--synthetic", "5", "--method", "permutation",
             "--samples", "60", "--out", str(out)] + fast_trainer())
        payload = read_json(out)
        # 60 evaluations fund floor(60 / (n+1)) = 10 permutations
        assert payload["result"]["m"] == 10

    def test_csv_dataset_requires_validation_file(self, tmp_path):
        csv = tmp_path / "train.csv"
        csv.write_text("a,b,label\n1.0,2.0,1\n-1.0,-2.0,0\n")
        assert run(["value", "--csv", str(csv),
                    "--out", str(tmp_path / "v.json")]) == 2

    def test_missing_csv_exits_2(self, tmp_path):
        assert run(["value", "--csv", str(tmp_path / "none.csv"),
                    "--csv-val", str(tmp_path / "none.csv"),
                    "--out", str(tmp_path / "v.json")]) == 2

    def test_diverging_trainer_exits_3(self, tmp_path):
        csv = tmp_path / "sep.csv"
        csv.write_text("a,b,label\n2.0,2.0,1\n-2.0,-2.0,0\n")
        with np.errstate(over="ignore"):
            code = run(["value", "--csv", str(csv), "--csv-val", str(csv),
                        "--model", "linear", "--learning-rate", "50000",
                        "--epochs", "60", "--method", "loo-exact",
                        "--out", str(tmp_path / "v.json")])
        assert code == 3

    def test_unknown_method_via_config_exits_2(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"method": "antithetic"}))
        assert run(["value", "--config", str(config),
                    "--out", str(tmp_path / "v.json")]) == 2

    def test_caching_resumes_without_retraining(self, tmp_path):
        cache_dir = tmp_path / "cache"
        argv = ["value", "--synthetic", "5", "--method", "banzhaf-exact",
                "--cache-dir", str(cache_dir), "--out", str(tmp_path / "v.json")]
        argv += fast_trainer()
        run(argv)
        first = read_json(tmp_path / "v.json.meta.json")["trainings"]
        run(argv)
        second = read_json(tmp_path / "v.json.meta.json")["trainings"]
        assert first > 0 and second == 0

    def test_cache_env_variable_honored(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ROBUSTVAL_CACHE_DIR", str(tmp_path / "envcache"))
        argv = ["value", "--synthetic", "4", "--method", "loo-exact",
                "--out", str(tmp_path / "v.json")] + fast_trainer()
        run(argv)
        run(argv)
        assert read_json(tmp_path / "v.json.meta.json")["trainings"] == 0
        assert (tmp_path / "envcache" / "evals.jsonl").exists()


class TestStability:
    def test_csv_schema_and_determinism(self, tmp_path):
        out, csv_out = tmp_path / "s.json", tmp_path / "s.csv"
        argv = ["stability", "--synthetic", "5", "--specs", "loo,banzhaf",
                "--sigmas", "0.1,0.5", "--trials", "3", "--out", str(out),
                "--csv", str(csv_out)] + fast_trainer()
        assert run(argv) == 0
        lines = csv_out.read_text().strip().splitlines()
        assert lines[0] == "method,sigma,mean_spearman,stderr"
        assert len(lines) == 1 + 2 * 2
        cells = read_json(out)["result"]
        assert {c["method"] for c in cells} == {"loo", "banzhaf"}
        assert all(-1.0 <= c["mean_spearman"] <= 1.0 for c in cells)
        again = tmp_path / "s2.json"
        run(["stability", "--synthetic", "5", "--specs", "loo,banzhaf",
             "--sigmas", "0.1,0.5", "--trials", "3", "--out", str(again),
             "--csv", str(tmp_path / "s2.csv")] + fast_trainer())
        assert read_json(again)["result"] == cells


class TestDetect:
    def test_small_detection_run(self, tmp_path):
        out, csv_out = tmp_path / "d.json", tmp_path / "d.csv"
        argv = ["detect", "--synthetic", "12", "--flip-fraction", "0.25",
                "--samples", "300", "--percentile", "25", "--methods",
                "banzhaf-msr,loo", "--out", str(out), "--csv", str(csv_out),
                "--epochs", "25"]
        assert run(argv) == 0
        lines = csv_out.read_text().strip().splitlines()
        assert lines[0] == "method,f1,precision,recall"
        assert len(lines) == 3
        runs = read_json(out)["result"]
        assert [r["method"] for r in runs] == ["banzhaf-msr", "loo"]
        for r in runs:
            assert len(r["values"]) == 12
            assert len(r["flipped"]) == 3
            assert 0.0 <= r["report"]["f1"] <= 1.0


class TestConvergence:
    def test_trace_artifact_and_csv(self, tmp_path):
        out, csv_out = tmp_path / "c.json", tmp_path / "c.csv"
        argv = ["convergence", "--synthetic", "5", "--estimators", "msr,simple_mc",
                "--budgets", "50,100", "--out", str(out), "--csv", str(csv_out)]
        argv += fast_trainer()
        assert run(argv) == 0
        result = read_json(out)["result"]
        assert set(result) == {"msr", "simple_mc"}
        for trace in result.values():
            assert [p["budget"] for p in trace] == [50, 100]
            assert trace[-1]["relative_spearman"] is None
            assert trace[0]["relative_spearman"] is not None
        rows = csv_out.read_text().strip().splitlines()
        assert rows[0] == "estimator,budget,relative_spearman"
        assert len(rows) == 5
        assert rows[2].split(",")[2] == "" and rows[4].split(",")[2] == ""

    def test_budget_to_draw_mapping(self, tmp_path):
        out = tmp_path / "c.json"
        run(["convergence", "--synthetic", "5", "--estimators", "simple_mc",
             "--budgets", "100", "--out", str(out)] + fast_trainer())
        trace = read_json(out)["result"]["simple_mc"]
        assert trace[0]["m"] == 10  # floor(100 / (2 * 5)) marginals per point


class TestParser:
    def test_no_subcommand_exits_2(self):
        assert run([]) == 2

    def test_bad_flag_value_raises_system_exit(self):
        with pytest.raises(SystemExit):
            run(["robustness", "margin", "--spec", "nucleolus"])

    def test_entry_point_help_mentions_subcommands(self, capsys):
        with pytest.raises(SystemExit):
            run(["--help"])
        text = capsys.readouterr().out
        for name in ("value", "robustness", "stability", "detect", "convergence"):
            assert name in text
