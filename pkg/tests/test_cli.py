# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


import csv
import json
import shutil

import pytest

from eegfuse.cli import EXIT_CONFIG, EXIT_MISSING_CORPUS, EXIT_USAGE, error_code, main
from eegfuse.errors import ChannelCountError, ManifestError, OutputError, ParameterError

from .util import tiny_cli_args


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("cli") / "corpus"
    assert main(["synth", "--utterances", "12", "--sentences", "3", "--out-dir", str(out_dir)]) == 0
    return out_dir / "manifest.csv"


def _run(*args):
    return main([*args, *tiny_cli_args()])


def _stderr_line(capsys):
    err = capsys.readouterr().err
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return lines[0]


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["bogus"],
        ["eval", "--nope"],
        ["eval", "--band", "ultra"],
        ["eval", "--set", "isolated.epochs"],
        ["eval", "--set", "isolated.epochs=three"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert _stderr_line(capsys).startswith("usage_error: ")


def test_config_errors(tmp_path, capsys):
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["validate", "--config", str(broken), "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    assert _stderr_line(capsys).startswith("config_error: ")

    args = ["validate", "--set", "isolated.epochs=0", "--out-dir", str(tmp_path)]
    assert main(args) == EXIT_CONFIG
    assert _stderr_line(capsys).startswith("config_error: ")


def test_missing_corpus(tmp_path, capsys):
    args = ["validate", "--corpus", str(tmp_path / "absent.csv"), "--out-dir", str(tmp_path)]
    assert main(args) == EXIT_MISSING_CORPUS
    assert _stderr_line(capsys).startswith("missing_corpus: ")


def test_validate(corpus, tmp_path, capsys):
    assert main(["validate", "--corpus", str(corpus), "--out-dir", str(tmp_path)]) == 0
    assert "12 utterances OK" in capsys.readouterr().out
    run = json.loads((tmp_path / "run.json").read_text())
    assert run["paths.corpus"] == str(corpus)
    assert run["mode"] == "isolated"


def test_other_failures_exit_one(corpus, tmp_path, capsys):
    copy = tmp_path / "corpus"
    shutil.copytree(corpus.parent, copy)
    (copy / "audio" / "utt0003.wav").write_bytes(b"junk")
    args = ["validate", "--corpus", str(copy / "manifest.csv"), "--out-dir", str(tmp_path)]
    assert main(args) == 1
    assert _stderr_line(capsys).startswith("wav_format_error: [utt0003] ")


def test_error_code():
    assert error_code(ChannelCountError("x")) == "channel_count_error"
    assert error_code(ManifestError("x")) == "manifest_error"
    assert error_code(ParameterError("x")) == "parameter_error"
    assert error_code(OutputError("x")) == "output_error"


def test_features(corpus, tmp_path):
    assert _run("features", "--corpus", str(corpus), "--out-dir", str(tmp_path)) == 0
    summary = json.loads((tmp_path / "features.json").read_text())
    assert summary == {"utterances": 12, "raw_dim": 145, "reduced_dim": 10, "mfcc_dim": 13}
    assert len(list((tmp_path / "features").glob("*.csv"))) == 12


def test_variance_curve(corpus, tmp_path):
    assert _run("variance-curve", "--corpus", str(corpus), "--out-dir", str(tmp_path)) == 0
    with (tmp_path / "variance.csv").open() as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["components", "cumulative_ratio"]
    assert float(rows[-1][1]) == 1.0
    ratios = [float(r[1]) for r in rows[1:]]
    assert ratios == sorted(ratios)


def test_eval_is_reproducible(corpus, tmp_path):
    outputs = []
    for name in ("a", "b"):
        out_dir = tmp_path / name
        assert _run("eval", "--corpus", str(corpus), "--out-dir", str(out_dir), "--seed", "3") == 0
        outputs.append(out_dir)

    first, second = outputs
    metrics = json.loads((first / "metrics.json").read_text())
    for key in ("accuracy", "precision", "recall", "f1", "baseline", "dims"):
        assert key in metrics
    assert metrics["mode"] == "isolated"
    assert metrics["dims"] == {"mfcc": 13, "raw": 145, "reduced": 10, "fused": 141}

    for name in ("metrics.json", "report.csv", "confusion.csv", "loss_history.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    for checkpoint in ("regression", "baseline", "fused"):
        path = f"checkpoints/{checkpoint}.ckpt"
        assert (first / path).read_bytes() == (second / path).read_bytes(), path

    # a second eval in the same directory reuses the checkpoints
    before = (first / "metrics.json").read_bytes()
    assert _run("eval", "--corpus", str(corpus), "--out-dir", str(first), "--seed", "3") == 0
    assert (first / "metrics.json").read_bytes() == before


def test_eval_baseline_only(corpus, tmp_path):
    args = ["eval", "--corpus", str(corpus), "--out-dir", str(tmp_path), "--baseline-only"]
    assert _run(*args) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["system"] == "baseline"
    assert "baseline" not in metrics
    assert not (tmp_path / "checkpoints" / "regression.ckpt").exists()


def test_ablate(corpus, tmp_path):
    args = ["ablate", "--table", "half-length", "--corpus", str(corpus), "--out-dir", str(tmp_path)]
    assert _run(*args) == 0
    with (tmp_path / "table_half_length.csv").open() as f:
        rows = list(csv.DictReader(f))
    assert [r["variant"] for r in rows] == ["mfcc", "full", "half"]
    assert rows[0]["fused_dim"] == "13"
    assert all(r["fused_dim"] == "141" for r in rows[1:])
    assert all(0.0 <= float(r["accuracy"]) <= 100.0 for r in rows)


def test_unwritable_out_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["validate", "--out-dir", str(blocker / "sub")]) == 1
    assert _stderr_line(capsys).startswith("output_error: ")


def test_eval_rejects_checkpoints_from_other_settings(corpus, tmp_path, capsys):
    common = ["--corpus", str(corpus), "--out-dir", str(tmp_path)]
    assert _run("train", *common, "--band", "high") == 0
    capsys.readouterr()

    assert _run("eval", *common, "--band", "low") == 1
    line = _stderr_line(capsys)
    assert line.startswith("checkpoint_mismatch_error: ")
    assert "ablation.band" in line
    assert not (tmp_path / "metrics.json").exists()

    assert _run("eval", *common, "--band", "high") == 0
    assert (tmp_path / "metrics.json").is_file()


def test_stray_os_error_is_one_line(corpus, tmp_path, capsys, monkeypatch):
    def unreadable(path):
        raise PermissionError(13, "Permission denied", str(path))

    monkeypatch.setattr("eegfuse.cli.load_manifest", unreadable)
    assert main(["validate", "--corpus", str(corpus), "--out-dir", str(tmp_path)]) == 1
    assert _stderr_line(capsys).startswith("io_error: [Errno 13] Permission denied")
