import json

import pytest

from relgrade.cli import build_parser, config_toml, load_config, run
from relgrade.errors import UsageError

SMALL = ["--dim", "16", "--n-documents", "600", "--n-queries", "12", "--n-days", "5"]


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "run"
    assert run(["synth", "--out", str(out), "--seed", "1", "-q", *SMALL]) == 0
    return out


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate", "--out", "x"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_missing_required_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["synth"])
    assert exc.value.code == 1


def test_no_token_flag():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["grade", "--out", "x", "--token", "abc"])


def test_synth_grade_evaluate(synth_dir, capsys):
    assert run(["grade", "--out", str(synth_dir), "--grader", "threshold", "--t", "0.6", "-q"]) == 0
    assert run(["evaluate", "--out", str(synth_dir), "-q"]) == 0
    lines = (synth_dir / "report.csv").read_text().splitlines()
    assert lines[0] == "model,accuracy,precision,recall,f1,ungraded"
    assert len(lines) == 2 and lines[1].startswith("threshold,")
    assert "Precision" in (synth_dir / "report.txt").read_text()


def test_train_contrastive_writes_artifacts(synth_dir):
    out = str(synth_dir)
    assert run(["split", "--out", out, "-q"]) == 0
    assert run(["train", "--out", out, "--loss", "contrastive", "--margin", "1", "--epochs", "3", "-q"]) == 0
    checkpoint = json.loads((synth_dir / "head.json").read_text())
    assert checkpoint["n_features"] == 64 and checkpoint["config"]["loss"] == "contrastive"
    log = (synth_dir / "train_log.csv").read_text().splitlines()
    assert len(log) == 4


def test_full_pipeline_and_validate(synth_dir):
    out = str(synth_dir)
    for argv in (["build-index"], ["generate-pairs", "--k", "3"], ["split"],
                 ["train", "--epochs", "2", "--resample", "over"], ["evaluate"],
                 ["report"], ["validate-index"]):
        assert run([argv[0], "--out", out, "--seed", "1", "-q", *argv[1:]]) == 0, argv
    assert (synth_dir / "histogram.csv").exists()
    pairs = [json.loads(line) for line in (synth_dir / "pairs.jsonl").read_text().splitlines()]
    assert len(pairs) == 12 * 5 * 3


def test_generate_pairs_window_flags(synth_dir):
    out = str(synth_dir)
    assert run(["generate-pairs", "--out", out, "--k", "2", "--index", "brute",
                "--window-start", "2024-01-03", "--window-end", "2024-01-04", "-q"]) == 0
    pairs = [json.loads(line) for line in (synth_dir / "pairs.jsonl").read_text().splitlines()]
    assert {p["retrieval_date"] for p in pairs} == {"2024-01-03", "2024-01-04"}
    assert len(pairs) == 12 * 2 * 2


def test_config_file_and_flag_precedence(tmp_path, synth_dir):
    cfg = tmp_path / "exp.toml"
    cfg.write_text('grader = "threshold"\nt = 2.0\nseed = 5\n')
    out = str(synth_dir)
    assert run(["grade", "--out", out, "--config", str(cfg), "-q"]) == 0
    verdicts = [json.loads(line) for line in (synth_dir / "verdicts_threshold.jsonl").read_text().splitlines()]
    assert not any(v["label"] for v in verdicts)
    assert run(["grade", "--out", out, "--config", str(cfg), "--t", "-1", "-q"]) == 0
    verdicts = [json.loads(line) for line in (synth_dir / "verdicts_threshold.jsonl").read_text().splitlines()]
    assert all(v["label"] for v in verdicts)
    echo = load_config(synth_dir / "config.grade.toml")
    assert echo["t"] == -1.0 and echo["seed"] == 5 and echo["grader"] == "threshold"


def test_config_echo_round_trips(tmp_path):
    import datetime as dt
    settings = {"seed": 3, "lr": 1e-3, "loss": "ce", "dedupe": True, "start_date": dt.date(2024, 1, 1),
                "documents": None}
    path = tmp_path / "c.toml"
    path.write_text(config_toml(settings))
    assert load_config(path) == {k: v for k, v in settings.items() if v is not None}


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("nonsense_key = 1\n")
    assert run(["synth", "--out", str(tmp_path / "o"), "--config", str(cfg), "-q"]) == 1
    assert "unknown config keys" in capsys.readouterr().err
    cfg.write_text('loss = "hinge"\n')
    with pytest.raises(UsageError):
        load_config(cfg)


def test_usage_and_domain_errors_exit_1(synth_dir, capsys):
    out = str(synth_dir)
    assert run(["grade", "--out", out, "--grader", "threshold", "-q"]) == 1
    assert run(["grade", "--out", out, "--grader", "judge", "-q"]) == 1
    assert run(["evaluate", "--out", out, "-q"]) == 1
    assert run(["synth", "--out", out, "--positive-rate", "1.5", "-q"]) == 1
    assert "error" in capsys.readouterr().err


def test_io_error_exits_2(tmp_path):
    assert run(["build-index", "--out", str(tmp_path), "--documents", str(tmp_path / "absent.jsonl"), "-q"]) == 2


def test_corrupt_index_exits_1(tmp_path):
    (tmp_path / "index.hnsw").write_bytes(b"garbage")
    assert run(["validate-index", "--out", str(tmp_path), "-q"]) == 1


def test_ingest_does_not_touch_inputs(synth_dir, tmp_path):
    before = (synth_dir / "documents.jsonl").read_bytes()
    assert run(["ingest", "--out", str(synth_dir), "-q"]) == 0
    assert (synth_dir / "documents.jsonl").read_bytes() == before
    other = tmp_path / "copy"
    assert run(["ingest", "--out", str(other), "--documents", str(synth_dir / "documents.jsonl"),
                "--queries", str(synth_dir / "queries.jsonl"), "-q"]) == 0
    summary = json.loads((other / "corpus_summary.json").read_text())
    assert summary["documents"] == 600 and summary["dim"] == 16


def test_effective_config_logged(synth_dir, caplog):
    import logging
    caplog.set_level(logging.INFO, logger="relgrade")
    assert run(["report", "--out", str(synth_dir), "--seed", "11"]) == 0
    assert "seed=11" in caplog.text
