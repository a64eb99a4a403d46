import csv
import json
import math

import pytest

from rggclt import cli
from rggclt.simulation import ReplicationResult

BASE = {"dimension": 3, "delta": 0.4, "intensity": {"mode": "explicit", "value": 5.0}}


def write_config(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


def run_cli(tmp_path, command, cfg, *extra, out="out"):
    path = write_config(tmp_path, cfg)
    return cli.main([command, "--config", str(path), "--out", str(tmp_path / out), *extra])


def records(values):
    return [ReplicationResult(i, 0, v, 0.0) for i, v in enumerate(values)]


class TestSummarize:
    def test_zeros(self):
        s = cli.summarize(records([0, 0, 0]))
        assert (s["emp_mean"], s["emp_var"]) == (0.0, 0.0)

    def test_two_values(self):
        s = cli.summarize(records([1, 3]))
        assert (s["emp_mean"], s["emp_var"]) == (2.0, 2.0)
        assert s["emp_mean_se"] == pytest.approx(1.0)

    def test_single_record(self):
        s = cli.summarize(records([4]))
        assert s["emp_mean"] == 4.0 and s["emp_var"] is None and s["emp_mean_se"] is None

    def test_empty(self):
        with pytest.raises(ValueError):
            cli.summarize([])


class TestParsing:
    def test_unknown_key(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config({**BASE, "bogus": 1}, "moments")

    def test_unknown_intensity_key(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config({**BASE, "intensity": {"mode": "explicit", "value": 1, "x": 2}}, "moments")

    @pytest.mark.parametrize("key, value", [
        ("dimension", 0), ("dimension", 2.5), ("delta", -0.1), ("replications", 0), ("master_seed", -1),
        ("quadrature_tol", 0), ("sigma_mode", "loose"), ("strategy", "kdtree"), ("record_timing", "yes"),
        ("lambda_multipliers", [4, 1]), ("outputs", {"records": "../x"}), ("max_expected_points", math.inf),
    ])
    def test_out_of_range(self, key, value):
        with pytest.raises(cli.ConfigError):
            cli.parse_config({**BASE, key: value}, "simulate")

    def test_required_fields(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config({"delta": 0.4, "intensity": BASE["intensity"]}, "moments")
        with pytest.raises(cli.ConfigError):
            cli.parse_config({"dimension": 3}, "moments")
        with pytest.raises(cli.ConfigError):
            cli.parse_config({**BASE, "dimensions": [5, 10]}, "regime")

    def test_intensity_modes(self):
        cfg = cli.parse_config({**BASE, "intensity": {"mode": "target_u", "value": 2.0}}, "moments")
        assert float(cfg.params().u) == pytest.approx(2.0, rel=1e-12)
        cfg = cli.parse_config({**BASE, "intensity": {"mode": "target_v", "value": 4.0}}, "moments")
        assert float(cfg.params().v) == pytest.approx(4.0, rel=1e-12)
        cfg = cli.parse_config({**BASE, "intensity": {"mode": "explicit", "log_value": 690.0}}, "moments")
        assert cfg.params().intensity.log_abs == 690.0

    def test_defaults(self):
        cfg = cli.parse_config(BASE, "simulate")
        assert cfg.max_expected_points == 5_000_000
        assert cfg.mc_samples == 100_000
        assert cfg.quadrature_tol == 1e-9


class TestRun:
    def test_moments(self, tmp_path, capsys):
        assert run_cli(tmp_path, "moments", BASE) == 0
        report = json.loads((tmp_path / "out" / "moments.json").read_text())
        mean = report["moments"]["mean"]
        assert math.exp(mean["log_abs"]) == pytest.approx(14.0368, abs=1e-4)
        assert json.loads(capsys.readouterr().out) == report

    def test_feasibility_exit(self, tmp_path, capsys):
        cfg = {"dimension": 200, "delta": "canonical", "intensity": {"mode": "explicit", "value": 1e300}}
        assert run_cli(tmp_path, "simulate", cfg) == 2
        err = capsys.readouterr().err
        assert "log expected count" in err

    def test_invalid_exit(self, tmp_path):
        assert run_cli(tmp_path, "moments", {**BASE, "nope": 1}) == 1
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli.main(["moments", "--config", str(bad)]) == 1
        assert cli.main(["moments", "--config", str(tmp_path / "missing.json")]) == 1

    def test_usage_errors_exit_1(self, tmp_path):
        path = write_config(tmp_path, BASE)
        with pytest.raises(SystemExit) as err:
            cli.main(["frobnicate", "--config", str(path)])
        assert err.value.code == 1
        with pytest.raises(SystemExit) as err:
            cli.main(["moments"])
        assert err.value.code == 1

    def test_simulate_outputs_and_schema(self, tmp_path):
        cfg = {**BASE, "replications": 50, "master_seed": 4}
        assert run_cli(tmp_path, "simulate", cfg) == 0
        lines = (tmp_path / "out" / "records.jsonl").read_text().splitlines()
        assert len(lines) == 50
        recs = [json.loads(line) for line in lines]
        assert [r["replication"] for r in recs] == list(range(50))
        for r in recs:
            assert tuple(r) == cli.RECORD_FIELDS
            assert r["n_points"] >= 0 and r["edges"] >= 0 and r["ms"] is None
        with open(tmp_path / "out" / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1 and tuple(rows[0]) == cli.SUMMARY_FIELDS
        row = rows[0]
        assert int(row["reps"]) == 50
        assert float(row["emp_mean"]) == pytest.approx(sum(r["edges"] for r in recs) / 50)
        assert float(row["var_lo"]) <= float(row["var_exact"]) <= float(row["var_hi"])

    def test_golden_records(self, tmp_path):
        cfg = {**BASE, "replications": 3, "master_seed": 0}
        assert run_cli(tmp_path, "simulate", cfg) == 0
        first = (tmp_path / "out" / "records.jsonl").read_text().splitlines()[0]
        rec = json.loads(first)
        assert first == json.dumps(rec, separators=(",", ":"))
        assert list(rec) == ["replication", "n_points", "edges", "ms"]

    def test_byte_identical_reruns_any_threads(self, tmp_path):
        cfg = {**BASE, "replications": 40, "master_seed": 11}
        assert run_cli(tmp_path, "simulate", cfg, "--threads", "1", out="a") == 0
        assert run_cli(tmp_path, "simulate", cfg, "--threads", "1", out="b") == 0
        assert run_cli(tmp_path, "simulate", cfg, "--threads", "4", out="c") == 0
        for name in ("records.jsonl", "summary.csv", "simulate.json"):
            a = (tmp_path / "a" / name).read_bytes()
            assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()

    def test_seed_override_changes_hash(self, tmp_path):
        cfg = {**BASE, "replications": 5}
        assert run_cli(tmp_path, "simulate", cfg, "--seed", "1", out="a") == 0
        assert run_cli(tmp_path, "simulate", cfg, "--seed", "2", out="b") == 0
        ha = json.loads((tmp_path / "a" / "simulate.json").read_text())["config_hash"]
        hb = json.loads((tmp_path / "b" / "simulate.json").read_text())["config_hash"]
        assert ha != hb

    def test_threads_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.THREADS_ENV, "0")
        assert run_cli(tmp_path, "moments", BASE) == 1
        monkeypatch.setenv(cli.THREADS_ENV, "3")
        assert run_cli(tmp_path, "moments", BASE) == 0

    def test_bounds_and_gamma(self, tmp_path):
        assert run_cli(tmp_path, "bounds", {**BASE, "sigma_mode": "lower_bound"}) == 0
        rep = json.loads((tmp_path / "out" / "bounds.json").read_text())
        assert math.exp(rep["wasserstein_bound"]["log_abs"]) == pytest.approx(3.111, abs=2e-3)
        assert "absolute constant" in rep["rate_note"]
        assert run_cli(tmp_path, "gamma", {**BASE, "mc_samples": 2000}) == 0
        rep = json.loads((tmp_path / "out" / "gamma.json").read_text())
        assert len(rep["gamma"]["gamma_mc"]) == 3

    def test_ladder(self, tmp_path):
        cfg = {"dimension": 3, "delta": 0.4, "intensity": {"mode": "explicit", "value": 2.0},
               "replications": 100, "lambda_multipliers": [1, 4]}
        assert run_cli(tmp_path, "ladder", cfg) == 0
        lines = (tmp_path / "out" / "ladder.jsonl").read_text().splitlines()
        assert [json.loads(x)["intensity_multiplier"] for x in lines] == [1.0, 4.0]

    @pytest.mark.parametrize("value, power, regime", [(1.0, 1.0, "diverging"), (4.0, 0.0, "convergent_positive"),
                                                      (1.0, -1.0, "vanishing")])
    def test_regime(self, tmp_path, value, power, regime):
        cfg = {"dimensions": list(range(10, 210, 10)), "delta": "canonical",
               "intensity": {"mode": "target_v", "value": value, "power": power}}
        assert run_cli(tmp_path, "regime", cfg) == 0
        rep = json.loads((tmp_path / "out" / "regime.json").read_text())
        assert rep["classification"]["regime"] == regime
        assert len(rep["regime_rate"]) == 20 and all(math.isfinite(r) for r in rep["regime_rate"])
