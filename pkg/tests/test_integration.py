# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


import os

import numpy as np
import pytest

from eegfuse import Experiment, RunConfig, generate_synthetic
from eegfuse.corpus import load_manifest
from eegfuse.errors import CheckpointMismatchError, LeakageError
from eegfuse.pipeline import load_recordings, require_training, run_ablation
from eegfuse.types import Mode, Split

from .util import TINY_OVERRIDES

acceptance = pytest.mark.skipif(
    os.environ.get("EEGFUSE_ACCEPTANCE") != "1", reason="set EEGFUSE_ACCEPTANCE=1"
)


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    path = generate_synthetic(tmp_path_factory.mktemp("integration"), 12, 3, seed=5)
    return load_manifest(path)


@pytest.fixture(scope="module")
def recordings(manifest):
    return load_recordings(manifest)


def tiny(**overrides):
    return RunConfig().with_overrides({**TINY_OVERRIDES, **overrides})


def test_isolated_run(manifest, recordings, tmp_path):
    experiment = Experiment(tiny()).prepare(manifest, recordings)
    assert [len(experiment.items(s)) for s in Split] == [8, 1, 3]

    results = experiment.fit().evaluate()
    summary = results.to_dict()
    assert summary["system"] == "fused"
    assert summary["test_utterances"] == 3
    assert 0.0 <= summary["accuracy"] <= 100.0
    assert set(summary["baseline"]) == {"accuracy", "precision", "recall", "f1"}
    assert results.systems["fused"].confusion.sum() == 3

    results.write(tmp_path)
    for name in ("metrics.json", "report.csv", "report_baseline.csv", "confusion.csv"):
        assert (tmp_path / name).is_file()

    models = [name for name, _ in experiment.histories()]
    assert models == ["regression", "baseline", "fused"]
    experiment.write_loss_history(tmp_path / "loss_history.csv")
    lines = (tmp_path / "loss_history.csv").read_text().splitlines()
    assert lines[0] == "model,epoch,split,loss,accuracy"
    # two epochs of train and val rows for each of the three models
    assert len(lines) == 1 + 3 * 4


def test_checkpoints_reproduce_evaluation(manifest, recordings, tmp_path):
    fitted = Experiment(tiny(seed=2)).prepare(manifest, recordings).fit()
    fitted.save_checkpoints(tmp_path)
    assert Experiment.has_checkpoints(tmp_path, fitted.system_names)

    restored = Experiment(tiny(seed=2)).prepare(manifest, recordings).load_checkpoints(tmp_path)
    assert restored.evaluate().to_dict() == fitted.evaluate().to_dict()
    assert not Experiment.has_checkpoints(tmp_path / "elsewhere", ("baseline",))

    other = Experiment(tiny(seed=3)).prepare(manifest, recordings)
    with pytest.raises(CheckpointMismatchError) as info:
        other.load_checkpoints(tmp_path)
    assert info.value.keys == ["seed"]


def test_continuous_run(manifest, recordings):
    experiment = Experiment(tiny(mode="continuous")).prepare(manifest, recordings)
    results = experiment.fit().evaluate()
    summary = results.to_dict()
    assert summary["mode"] == "continuous"
    assert summary["wer"] >= 0.0
    assert summary["greedy_wer"] >= 0.0
    assert "wer" in summary["baseline"]
    # too few test utterances for interval statistics
    assert results.wer_ci is None
    assert experiment.lm is not None
    train_words = {w for u in experiment.items(Split.TRAIN) for w in u.transcript.split()}
    assert all(word in experiment.lm for word in train_words)


def test_fitting_rejects_held_out_data(manifest, recordings):
    experiment = Experiment(tiny()).prepare(manifest, recordings)
    held_out = experiment.items(Split.TEST)
    with pytest.raises(LeakageError):
        require_training(experiment.items(Split.TRAIN) + held_out, "the test")
    require_training(experiment.items(Split.TRAIN), "the test")


def test_fit_requires_prepare():
    with pytest.raises(RuntimeError):
        Experiment(tiny()).fit()
    with pytest.raises(RuntimeError):
        Experiment(tiny()).evaluate()


@pytest.mark.parametrize(
    "overrides, raw, reduced",
    [
        ({}, 145, 10),
        ({"ablation.sensor_set": "frontal"}, 60, 10),
        ({"ablation.sensor_set": "temporal"}, 20, 10),
        ({"ablation.sensor_set": "frontal+temporal"}, 80, 20),
        ({"ablation.rep_source": "emg"}, 10, 10),
        ({"ablation.reduce": False}, 145, 145),
    ],
)
def test_reduced_dims(manifest, recordings, overrides, raw, reduced):
    experiment = Experiment(tiny(**overrides)).prepare(manifest, recordings)
    reducer = experiment.fit_reducer()
    utterance = experiment.utterances[0]
    assert utterance.raw.dim == raw
    assert reducer.output_dim == reduced
    assert experiment.reduced(utterance).dim == reduced


def test_ablation_table(manifest, recordings):
    rows = run_ablation(tiny(mode="continuous"), "half-length", manifest, recordings)
    assert [row[0] for row in rows] == ["mfcc", "full", "half"]
    assert rows[0][1:4] == ("", "", 13)
    for row in rows[1:]:
        assert row[1:4] == (145, 10, 141)
        assert all(np.isfinite(row[4:]))


@acceptance
def test_fused_beats_baseline(tmp_path):
    path = generate_synthetic(tmp_path, 60, 5, seed=42)
    manifest = load_manifest(path)
    recordings = load_recordings(manifest)
    gaps = []
    for seed in range(3):
        config = RunConfig().with_overrides({"seed": seed, "isolated.hidden": 128})
        summary = Experiment(config).prepare(manifest, recordings).fit().evaluate().to_dict()
        gaps.append(summary["accuracy"] - summary["baseline"]["accuracy"])
    assert np.mean(gaps) >= 15.0


@acceptance
def test_continuous_training_fit(tmp_path):
    path = generate_synthetic(tmp_path, 30, 3, seed=42)
    config = RunConfig().with_overrides(
        {
            "mode": "continuous",
            "baseline_only": True,
            "ctc.hidden": 128,
            "ctc.epochs": 60,
            "ctc.lr": 0.005,
        }
    )
    experiment = Experiment(config).prepare(path).fit()
    results = experiment.evaluate(Split.TRAIN)
    baseline = results.systems["baseline"]
    assert results.mode is Mode.CONTINUOUS
    assert baseline.greedy.wer < 0.10
    assert baseline.report.wer <= baseline.greedy.wer
