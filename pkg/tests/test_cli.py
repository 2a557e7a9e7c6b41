# tests/test_cli.py
import json

import pandas as pd
import pytest

from cycle_queue.cli import REPORT_COLUMNS, main, parse_config, run
from cycle_queue.utils import UsageError


def _args(tmp_path, *argv):
    return [*argv, "--output", str(tmp_path / "report")]


class TestParseConfig:
    def test_empty_argv(self):
        with pytest.raises(UsageError):
            parse_config([])
        assert main([]) == 2

    def test_defaults_and_flags(self, tmp_path):
        config = parse_config(_args(tmp_path, "walk", "--rho", "2.5", "--quantity", "height-moments"), None)
        assert config.command == "walk"
        assert config.params["rho"] == 2.5
        assert config.params["theta"] == 1.0
        assert config.params["n_reps"] == 100_000
        assert config.quantities == ("height-moments",)

    def test_flag_beats_file(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text(json.dumps({"theta": 2.0, "k": 3}))
        config = parse_config(["busy", "--config", str(path), "--theta", "3"], None)
        assert config.params["theta"] == 3.0
        assert config.params["k"] == 3

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "params.yaml"
        path.write_text("mu: 2.0\nn-reps: 500\n")
        config = parse_config(["mminf", "--config", str(path)], None)
        assert config.params["mu"] == 2.0
        assert config.params["n_reps"] == 500

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "theta": 1.0,,\n}')
        with pytest.raises(UsageError, match="line 2"):
            parse_config(["crp", "--config", str(path)], None)

    def test_unknown_key_lists_valid_keys(self, tmp_path):
        path = tmp_path / "extra.json"
        path.write_text(json.dumps({"lambda": 1.0}))
        with pytest.raises(UsageError, match="valid keys are: .*theta"):
            parse_config(["crp", "--config", str(path)], None)

    def test_unknown_flag(self):
        with pytest.raises(UsageError):
            parse_config(["crp", "--lambda", "1"], None)

    def test_seed_required_for_stochastic(self):
        with pytest.raises(UsageError, match="seed"):
            parse_config(["walk", "--quantity", "excursions-mc"], None)
        config = parse_config(["walk", "--quantity", "excursions-mc", "--seed", "5"], None)
        assert config.params["seed"] == 5

    def test_unknown_quantity(self):
        with pytest.raises(UsageError, match="unknown quantity"):
            parse_config(["walk", "--quantity", "nope"], None)

    def test_invalid_parameter_value(self):
        with pytest.raises(UsageError):
            parse_config(["mminf", "--theta", "-1"], None)

    def test_comma_separated_lists(self):
        config = parse_config(["crp", "--checkpoints", "10,100", "--quantity", "ewens-sum,expected-cycles"], None)
        assert config.params["checkpoints"] == [10, 100]
        assert config.quantities == ("ewens-sum", "expected-cycles")


class TestRun:
    def test_height_moments_report(self, tmp_path):
        config = parse_config(_args(tmp_path, "walk", "--rho", "1", "--quantity", "height-moments"), None)
        assert run(config) == 0
        frame = pd.read_csv(tmp_path / "report.csv")
        assert list(frame.columns) == REPORT_COLUMNS
        values = dict(zip(frame["quantity"], frame["analytic"]))
        assert values["height-mean"] == pytest.approx(1.887, abs=5e-4)
        assert values["height-variance"] == pytest.approx(1.242, abs=5e-4)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["schema"] == 1
        assert [row["quantity"] for row in payload["rows"]] == ["height-mean", "height-variance"]
        assert all(row["target_ref"] for row in payload["rows"])

    def test_busy_tail(self, tmp_path):
        assert main(_args(tmp_path, "busy", "--theta", "1", "--k", "2", "--quantity", "tail")) == 0
        frame = pd.read_csv(tmp_path / "report.csv")
        beta = frame.loc[frame["quantity"] == "tail-beta", "analytic"].iloc[0]
        assert beta == pytest.approx(0.2734, abs=1e-4)

    def test_stochastic_report_is_reproducible(self, tmp_path):
        argv = ["mminf", "--quantity", "excursions-mc", "--n-reps", "4000", "--seed", "3"]
        first, second = tmp_path / "a", tmp_path / "b"
        main([*argv, "--output", str(first)])
        main([*argv, "--output", str(second)])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        frame = pd.read_csv(tmp_path / "a.csv")
        assert frame["mc_mean"].notna().all()
        assert (frame["mc_stderr"] > 0).all()

    def test_verify_prefixes_rows(self, tmp_path):
        argv = _args(tmp_path, "verify", "--quantity", "walk:height-moments", "--quantity", "tagged:correlations")
        assert main(argv) == 0
        frame = pd.read_csv(tmp_path / "report.csv")
        assert frame["quantity"].str.startswith(("walk:", "tagged:")).all()
        assert "tagged:correlation-1-2" in set(frame["quantity"])

    def test_csv_suffix_is_accepted(self, tmp_path):
        assert main(["crp", "--quantity", "ewens-sum", "--output", str(tmp_path / "out.csv")]) == 0
        assert (tmp_path / "out.csv").exists()
        assert (tmp_path / "out.json").exists()

    def test_missing_seed_exits_with_usage(self, tmp_path):
        assert main(_args(tmp_path, "busy", "--quantity", "periods-mc")) == 2
