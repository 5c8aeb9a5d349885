import json

import pytest

from geodispatch.cli import main
from geodispatch.data import SynthConfig, record_to_dict, synthesize, write_jsonl
from geodispatch.geo import GeoCoordinate
from geodispatch.model import load_model

from conftest import record_with_errors


def run(capsys, *args):
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_raw(path, n=3, bad_line=False):
    entries = []
    for i in range(n):
        rec = record_with_errors(f"raw-{i}", GeoCoordinate(float(i), 10.0), 40.0, 4.0)
        entries.append(record_to_dict(rec))
    if bad_line:
        entries.append({"id": "bad", "gt": [0, 0], "pred_ret": [0.0, 200.0],
                        "pred_gen": [0.0, 0.0]})
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e) + "\n")


@pytest.fixture
def dataset_path(tmp_path):
    path = tmp_path / "data.jsonl"
    write_jsonl(path, synthesize(SynthConfig(n=120, seed=3)))
    return path


class TestBuild:
    def test_happy_path(self, tmp_path, capsys):
        raw = tmp_path / "raw.jsonl"
        write_raw(raw, n=3)
        code, out, _ = run(capsys, "build", "--in", str(raw), "--out",
                           str(tmp_path / "d.jsonl"))
        assert code == 0
        assert "instances: 3" in out
        assert "skipped: 0" in out
        assert "label balance:" in out

    def test_bad_line_skipped(self, tmp_path, capsys):
        raw = tmp_path / "raw.jsonl"
        write_raw(raw, n=3, bad_line=True)
        code, out, err = run(capsys, "build", "--in", str(raw), "--out",
                             str(tmp_path / "d.jsonl"))
        assert code == 0
        assert "skipped: 1" in out
        assert "lon" in err

    def test_unreadable_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.jsonl"
        code, _, err = run(capsys, "build", "--in", str(missing), "--out",
                           str(tmp_path / "d.jsonl"))
        assert code == 2
        assert "nope.jsonl" in err

    def test_duplicate_id_is_data_error(self, tmp_path, capsys):
        raw = tmp_path / "raw.jsonl"
        rec = record_to_dict(record_with_errors("dup", GeoCoordinate(0, 0), 1.0, 2.0))
        raw.write_text(json.dumps(rec) + "\n" + json.dumps(rec) + "\n")
        code, _, err = run(capsys, "build", "--in", str(raw), "--out",
                           str(tmp_path / "d.jsonl"))
        assert code == 2
        assert "dup" in err


class TestSynthTrainRouteEval:
    def test_synth_writes_header_and_count(self, tmp_path, capsys):
        out = tmp_path / "s.jsonl"
        code, stdout, _ = run(capsys, "synth", "--out", str(out), "--n", "50", "--seed", "9")
        assert code == 0
        assert "instances: 50" in stdout
        lines = out.read_text().splitlines()
        assert json.loads(lines[0])["schema"] == "routing-records/v1"
        assert len(lines) == 51

    def test_train_then_route_then_eval(self, tmp_path, dataset_path, capsys):
        model_path = tmp_path / "m.json"
        code, out, _ = run(capsys, "train", "--data", str(dataset_path),
                           "--out", str(model_path), "--seed", "5")
        assert code == 0
        assert "epoch 3 loss:" in out
        model = load_model(model_path)
        assert model.kind == "linear"

        routes = tmp_path / "routes.jsonl"
        code, out, _ = run(capsys, "route", "--data", str(dataset_path),
                           "--model", str(model_path), "--out", str(routes))
        assert code == 0
        lines = routes.read_text().splitlines()
        assert len(lines) == 120
        row = json.loads(lines[0])
        assert set(row) == {"id", "score", "choice", "prediction"}
        assert row["choice"] in ("generation", "retrieval")

        report_path = tmp_path / "report.json"
        code, _, _ = run(capsys, "eval", "--data", str(dataset_path),
                         "--model", str(model_path), "--format", "json",
                         "--out", str(report_path))
        assert code == 0
        doc = json.loads(report_path.read_text())
        assert [p["policy"] for p in doc["policies"]] == \
            ["pure_retrieval", "pure_generation", "router", "oracle"]

    def test_eval_single_policy_table(self, dataset_path, capsys):
        code, out, _ = run(capsys, "eval", "--data", str(dataset_path),
                           "--policies", "oracle")
        assert code == 0
        assert "oracle" in out
        assert "pure_retrieval" not in out

    def test_eval_router_requires_model(self, dataset_path, capsys):
        code, _, err = run(capsys, "eval", "--data", str(dataset_path),
                           "--policies", "router")
        assert code == 1
        assert "--model" in err

    def test_train_mlp_and_hard_labels(self, tmp_path, dataset_path, capsys):
        model_path = tmp_path / "m.json"
        code, _, _ = run(capsys, "train", "--data", str(dataset_path),
                         "--out", str(model_path), "--kind", "mlp", "--hidden", "4",
                         "--hard-labels", "--epochs", "1")
        assert code == 0
        assert load_model(model_path).kind == "mlp"

    def test_train_data_fraction(self, tmp_path, dataset_path, capsys):
        model_path = tmp_path / "m.json"
        code, out, _ = run(capsys, "train", "--data", str(dataset_path),
                           "--out", str(model_path), "--data-fraction", "0.5")
        assert code == 0
        assert "trained on: 60" in out


class TestSweepCommand:
    def test_csv_output(self, tmp_path, dataset_path, capsys):
        out = tmp_path / "sweep.csv"
        code, _, err = run(capsys, "sweep", "--data", str(dataset_path),
                           "--alphas", "0.4,1.6", "--epochs", "1", "--out", str(out))
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "alpha,threshold_km,accuracy"
        assert len(lines) == 1 + 12
        assert "rows: 2" in err


class TestDeterminism:
    def test_pipeline_twice_is_byte_identical(self, tmp_path, capsys):
        outputs = []
        for name in ("one", "two"):
            d = tmp_path / name
            d.mkdir()
            assert run(capsys, "synth", "--out", str(d / "s.jsonl"), "--n", "80",
                       "--seed", "13")[0] == 0
            assert run(capsys, "build", "--in", str(d / "s.jsonl"),
                       "--out", str(d / "d.jsonl"))[0] == 0
            assert run(capsys, "train", "--data", str(d / "d.jsonl"),
                       "--out", str(d / "m.json"), "--seed", "13", "--epochs", "2")[0] == 0
            assert run(capsys, "route", "--data", str(d / "d.jsonl"),
                       "--model", str(d / "m.json"), "--out", str(d / "r.jsonl"))[0] == 0
            assert run(capsys, "eval", "--data", str(d / "d.jsonl"),
                       "--model", str(d / "m.json"), "--format", "json",
                       "--out", str(d / "e.json"), "--seed", "13")[0] == 0
            outputs.append({p.name: p.read_bytes()
                            for p in sorted(d.iterdir())})
        assert outputs[0] == outputs[1]


class TestConfigFile:
    def test_file_value_used_and_flag_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text('n = 7\nseed = 21\n')
        out_a = tmp_path / "a.jsonl"
        code, stdout, _ = run(capsys, "synth", "--config", str(cfg), "--out", str(out_a))
        assert code == 0 and "instances: 7" in stdout
        out_b = tmp_path / "b.jsonl"
        code, stdout, _ = run(capsys, "synth", "--config", str(cfg),
                              "--n", "9", "--out", str(out_b))
        assert code == 0 and "instances: 9" in stdout

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text('mystery = 1\n')
        code, _, err = run(capsys, "synth", "--config", str(cfg),
                           "--out", str(tmp_path / "x.jsonl"))
        assert code == 1
        assert "mystery" in err


class TestUsage:
    @pytest.mark.parametrize("cmd", ["build", "synth", "train", "route", "eval", "sweep"])
    def test_help_exits_zero_and_lists_defaults(self, cmd, capsys):
        code, out, _ = run(capsys, cmd, "--help")
        assert code == 0
        assert "--seed" in out
        assert "default" in out

    def test_unknown_flag_is_usage_error(self, tmp_path, capsys):
        code, _, _ = run(capsys, "synth", "--out", str(tmp_path / "x.jsonl"), "--bogus")
        assert code == 1

    def test_missing_subcommand_is_usage_error(self, capsys):
        assert run(capsys)[0] == 1

    def test_bad_policy_name(self, dataset_path, capsys):
        code, _, err = run(capsys, "eval", "--data", str(dataset_path),
                           "--policies", "telepathy")
        assert code == 1
        assert "telepathy" in err

    def test_numerical_failures_map_to_exit_3(self, monkeypatch, capsys):
        from geodispatch import cli
        from geodispatch.errors import NumericalError

        def boom(ns):
            raise NumericalError("non-finite loss at batch index 0")

        monkeypatch.setattr(cli, "cmd_synth", boom)
        code, _, err = run(capsys, "synth", "--out", "unused.jsonl")
        assert code == 3
        assert "batch index" in err
