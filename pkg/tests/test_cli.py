import json

import pytest

from spotrec.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def synth_corpus(tmp_path, capsys):
    path = tmp_path / "corpus.jsonl"
    code, _, _ = run_cli(
        capsys, "synth", "--output", str(path), "--records", "300",
        "--groups", "2", "--users", "20", "--spots", "40", "--words", "20",
        "--seed", "3",
    )
    assert code == 0
    return path


class TestIngest:
    def test_summary_key_value_lines(self, synth_corpus, capsys):
        code, out, _ = run_cli(capsys, "ingest", "--input", str(synth_corpus))
        assert code == 0
        summary = dict(line.split("=") for line in out.strip().splitlines())
        assert summary["records"] == "300"
        assert summary["time_slots"] == "12"

    def test_missing_file_fails_cleanly(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "ingest", "--input", str(tmp_path / "nope.jsonl"))
        assert code == 1
        assert "error:" in err

    def test_unknown_subcommand_usage_exit_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_min_pois_filter_and_write(self, synth_corpus, tmp_path, capsys):
        out_path = tmp_path / "filtered.jsonl"
        code, out, _ = run_cli(
            capsys, "ingest", "--input", str(synth_corpus),
            "--min-pois", "2", "--output", str(out_path),
        )
        assert code == 0
        assert out_path.exists()


class TestTrain:
    def test_writes_model_and_trace(self, synth_corpus, tmp_path, capsys):
        model = tmp_path / "model.json"
        code, out, err = run_cli(
            capsys, "train", "--input", str(synth_corpus), "--output", str(model),
            "--groups", "2", "--iterations", "40", "--burn-in", "10",
            "--seed", "1", "--trace-every", "10",
        )
        assert code == 0
        assert model.exists()
        trace_lines = [json.loads(line) for line in err.strip().splitlines()]
        assert len(trace_lines) == 4
        assert {"sweep", "heldout", "elapsed"} <= set(trace_lines[0])
        doc = json.loads(model.read_text())
        assert doc["variant"] == "B"
        assert "vocab" in doc

    def test_deterministic_model_file(self, synth_corpus, tmp_path, capsys):
        out = []
        for name in ("a.json", "b.json"):
            model = tmp_path / name
            code, _, _ = run_cli(
                capsys, "train", "--input", str(synth_corpus), "--output", str(model),
                "--groups", "2", "--iterations", "30", "--burn-in", "10", "--seed", "9",
            )
            assert code == 0
            out.append(model.read_bytes())
        assert out[0] == out[1]


class TestEval:
    def test_report_and_csv(self, synth_corpus, tmp_path, capsys):
        report = tmp_path / "report.json"
        rows = tmp_path / "rows.csv"
        code, out, _ = run_cli(
            capsys, "eval", "--input", str(synth_corpus), "--output", str(report),
            "--csv", str(rows), "--method", "al", "--split", "user",
            "--k", "5,10", "--runs", "2", "--groups", "2",
            "--iterations", "30", "--burn-in", "10", "--seed", "2",
        )
        assert code == 0
        doc = json.loads(report.read_text())
        assert set(doc["averages"]) == {"5", "10"}
        assert doc["config"]["runs"] == 2
        assert rows.read_text().startswith("run,user,k,")
        assert "k=5" in out

    def test_byte_identical_reports(self, synth_corpus, tmp_path, capsys):
        blobs = []
        for name in ("r1.json", "r2.json"):
            report = tmp_path / name
            code, _, _ = run_cli(
                capsys, "eval", "--input", str(synth_corpus), "--output", str(report),
                "--method", "wl", "--split", "time", "--ratio", "0.5",
                "--k", "5", "--runs", "2", "--groups", "2",
                "--iterations", "25", "--burn-in", "5", "--seed", "4",
            )
            assert code == 0
            blobs.append(report.read_bytes())
        assert blobs[0] == blobs[1]


class TestRecommend:
    @pytest.fixture()
    def model(self, synth_corpus, tmp_path, capsys):
        model = tmp_path / "model.json"
        code, _, _ = run_cli(
            capsys, "train", "--input", str(synth_corpus), "--output", str(model),
            "--groups", "2", "--iterations", "30", "--burn-in", "10", "--seed", "5",
        )
        assert code == 0
        return model

    def test_known_user(self, model, capsys):
        code, out, _ = run_cli(capsys, "recommend", "--model", str(model), "--user", "u0", "--k", "3")
        assert code == 0
        assert len(out.strip().splitlines()) == 3

    def test_unknown_user_points_to_session_flow(self, model, capsys):
        code, _, err = run_cli(capsys, "recommend", "--model", str(model), "--user", "ghost")
        assert code == 1
        assert "session" in err

    def test_ratings_file_flow(self, model, synth_corpus, tmp_path, capsys):
        ratings = tmp_path / "ratings.json"
        ratings.write_text(json.dumps([
            {"spot": "l1", "score": 2},
            {"spot": "l4", "score": -2},
        ]))
        code, out, _ = run_cli(
            capsys, "recommend", "--model", str(model), "--ratings", str(ratings),
            "--corpus", str(synth_corpus), "--k", "4",
        )
        assert code == 0
        assert len(out.strip().splitlines()) == 4

    def test_ratings_unknown_spot(self, model, synth_corpus, tmp_path, capsys):
        ratings = tmp_path / "ratings.json"
        ratings.write_text(json.dumps([{"spot": "atlantis", "score": 2}]))
        code, _, err = run_cli(
            capsys, "recommend", "--model", str(model), "--ratings", str(ratings),
            "--corpus", str(synth_corpus),
        )
        assert code == 1
        assert "atlantis" in err


class TestConfigFile:
    def test_config_defaults_apply(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"records": 40, "seed": 8}))
        out_path = tmp_path / "c.jsonl"
        code, out, _ = run_cli(
            capsys, "--config", str(config), "synth", "--output", str(out_path),
            "--users", "5", "--spots", "4", "--words", "3",
        )
        assert code == 0
        assert "records=40" in out

    def test_cli_flag_overrides_config(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"records": 40}))
        out_path = tmp_path / "c.jsonl"
        code, out, _ = run_cli(
            capsys, "--config", str(config), "synth", "--output", str(out_path),
            "--records", "25", "--users", "5", "--spots", "4", "--words", "3",
        )
        assert code == 0
        assert "records=25" in out


class TestBench:
    def test_compares_backends(self, capsys):
        code, out, _ = run_cli(
            capsys, "bench", "--records", "500", "--sweeps", "3", "--groups", "2",
        )
        assert code == 0
        assert "backend=python" in out
        assert "speedup=" in out


class TestSynthFromParams:
    def test_params_round_trip(self, tmp_path, capsys):
        params_path = tmp_path / "params.json"
        corpus_a = tmp_path / "a.jsonl"
        code, _, _ = run_cli(
            capsys, "synth", "--output", str(corpus_a), "--records", "50",
            "--params-out", str(params_path), "--seed", "6",
            "--users", "6", "--spots", "5", "--words", "4",
        )
        assert code == 0
        corpus_b = tmp_path / "b.jsonl"
        code, _, _ = run_cli(
            capsys, "synth", "--output", str(corpus_b), "--records", "50",
            "--params", str(params_path), "--seed", "6",
        )
        assert code == 0
        assert corpus_b.exists()
