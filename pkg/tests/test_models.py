# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


import numpy as np
import pytest
import torch

from eegfuse.errors import CtcInfeasibleError, ParameterError
from eegfuse.features import FeatureSequence
from eegfuse.models import (
    CtcModel,
    HistoryRow,
    IsolatedModel,
    RegressionModel,
    TrainConfig,
    acoustic_representation,
    build_model,
    ctc_log_probs,
    fuse,
    predict_isolated,
    recognizer_input_dim,
    train_ctc,
    train_isolated,
    train_regression,
)
from eegfuse.types import FeatureKind


def _regression_pairs(n=4, frames=12, dim=5, seed=0):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((dim, 13))
    pairs = []
    for _ in range(n):
        x = rng.standard_normal((frames, dim))
        pairs.append((x, np.tanh(x @ W)))
    return pairs


def _class_examples(seed=0):
    rng = np.random.default_rng(seed)
    examples = []
    for label in range(3):
        for k in range(2):
            x = rng.standard_normal((6, 4)) * 0.1 + (label - 1)
            examples.append((x, label, f"u{label}{k}"))
    return examples


def test_model_shapes():
    x = np.random.default_rng(0).standard_normal((7, 10))
    regression = RegressionModel(10)
    assert regression(x).shape == (7, 13)
    assert regression.representation(x).shape == (7, 128)

    isolated = IsolatedModel(10, hidden=6, n_classes=4)
    assert isolated(x).shape == (4,)

    ctc = CtcModel(10, hidden=6)
    log_probs = ctc_log_probs(ctc, x)
    assert log_probs.shape == (7, 29)
    np.testing.assert_allclose(np.exp(log_probs).sum(axis=1), 1.0)


def test_acoustic_representation():
    model = RegressionModel(10, seed=3)
    seq = FeatureSequence(np.random.default_rng(1).standard_normal((9, 10)), FeatureKind.KPCA)
    rep = acoustic_representation(model, seq)
    assert rep.kind is FeatureKind.ACOUSTIC_REP
    assert rep.dim == 128
    with torch.no_grad():
        np.testing.assert_allclose(rep.data, model.gru(torch.as_tensor(seq.data)).numpy())
    with pytest.raises(ParameterError):
        acoustic_representation(model, np.zeros((9, 11)))


def test_fuse():
    mfcc = FeatureSequence(np.ones((10, 13)), FeatureKind.MFCC)
    rep = FeatureSequence(np.full((8, 128), 2.0), FeatureKind.ACOUSTIC_REP)
    fused = fuse(mfcc, rep)
    assert fused.kind is FeatureKind.FUSED
    assert (fused.frames, fused.dim) == (8, 141)
    np.testing.assert_array_equal(fused.data[:, :13], 1.0)
    np.testing.assert_array_equal(fused.data[:, 13:], 2.0)
    assert recognizer_input_dim(True) == 141
    assert recognizer_input_dim(False) == 13

    with pytest.raises(ParameterError):
        fuse(FeatureSequence(np.zeros((0, 13)), FeatureKind.MFCC), rep)
    with pytest.raises(ParameterError):
        fuse(mfcc, FeatureSequence(np.zeros((8, 128)), FeatureKind.ACOUSTIC_REP, 50.0))


def test_regression_training_reduces_loss():
    config = TrainConfig(epochs=15, batch_size=2, hidden=128, lr=0.01)
    model, history = train_regression(_regression_pairs(), config=config, seed=1)
    losses = history.losses("train")
    assert len(losses) == 15
    assert losses[-1] < losses[0]
    assert not model.training


def test_regression_misaligned_target():
    x, y = _regression_pairs(n=1)[0]
    config = TrainConfig(epochs=1, batch_size=1, hidden=128)
    with pytest.raises(ParameterError):
        train_regression([(x, y[:-1])], config=config)
    with pytest.raises(ParameterError):
        train_regression([], config=config)


def test_training_is_deterministic():
    config = TrainConfig(epochs=2, batch_size=2, hidden=128, lr=0.01)
    a, _ = train_regression(_regression_pairs(), config=config, seed=5)
    b, _ = train_regression(_regression_pairs(), config=config, seed=5)
    for (name, p), q in zip(a.named_parameters(), b.parameters()):
        assert torch.equal(p, q), name


def test_isolated_training():
    config = TrainConfig(epochs=20, batch_size=3, hidden=16, lr=0.05)
    examples = _class_examples()
    model, history = train_isolated(examples, examples[:3], config, seed=0, n_classes=3)
    assert history.losses("train")[-1] < history.losses("train")[0]
    assert len(history.losses("val")) == 20
    assert all(0.0 <= a <= 1.0 for a in history.accuracies("train"))

    label, probs = predict_isolated(model, examples[0][0])
    assert 0 <= label < 3
    assert probs.shape == (3,)
    assert probs.sum() == pytest.approx(1.0)


def _smooth_linear_pairs(n, frames=30, dim=10, seed=0):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((dim, 13)) / np.sqrt(dim)
    t = np.arange(frames)[:, None]
    pairs = []
    for _ in range(n):
        omega = rng.uniform(0.05, 0.2, dim)
        phase = rng.uniform(0, 2 * np.pi, dim)
        x = np.sin(omega * t + phase)
        pairs.append((x, x @ W))
    return pairs


def test_regression_learns_linear_map():
    pairs = _smooth_linear_pairs(8)
    config = TrainConfig(epochs=70, batch_size=1, hidden=128, lr=0.01)
    model, _ = train_regression(pairs, config=config, seed=2)
    targets = np.concatenate([y for _, y in pairs])
    with torch.no_grad():
        predicted = np.concatenate([model(x).numpy() for x, _ in pairs])
    assert np.mean((predicted - targets) ** 2) < 0.1 * targets.var()


def _separable_examples(per_class, seed):
    rng = np.random.default_rng(seed)
    examples = []
    for label in range(5):
        for k in range(per_class):
            x = 3 * np.eye(5)[label] + 0.3 * rng.standard_normal((6, 5))
            examples.append((x, label, f"c{label}-{k}"))
    return examples


def test_isolated_separates_toy_classes():
    train, val = _separable_examples(10, seed=0), _separable_examples(5, seed=1)
    config = TrainConfig(epochs=10, batch_size=5, hidden=16, lr=0.05)
    model, _ = train_isolated(train, config=config, seed=0, n_classes=5)
    hits = [predict_isolated(model, x)[0] == label for x, label, _ in val]
    assert np.mean(hits) > 0.95


def test_isolated_class_out_of_range():
    config = TrainConfig(epochs=1, batch_size=2, hidden=4)
    x = np.zeros((3, 4))
    with pytest.raises(ParameterError):
        train_isolated([(x, 3)], config=config, n_classes=3)
    with pytest.raises(ParameterError):
        train_isolated([(x, -1)], config=config, n_classes=3)


def test_early_stopping_with_frozen_weights():
    config = TrainConfig(epochs=5, batch_size=3, hidden=4, lr=0.0, patience=1)
    examples = _class_examples()
    _, history = train_isolated(examples, examples, config, n_classes=3)
    assert history.stopped_early
    assert history.epochs == 2
    assert [(r.epoch, r.split) for r in history.rows] == [
        (1, "train"),
        (1, "val"),
        (2, "train"),
        (2, "val"),
    ]
    assert len(history.to_csv_rows()) == 4


def test_ctc_infeasible_ids():
    config = TrainConfig(epochs=1, batch_size=1, hidden=4)
    train = [(np.zeros((10, 3)), "ab", "ok"), (np.zeros((2, 3)), "abc", "short")]
    val = [(np.zeros((2, 3)), "aa", "repeat")]
    with pytest.raises(CtcInfeasibleError) as info:
        train_ctc(train, val, config)
    assert info.value.ids == ["short", "repeat"]


def test_ctc_training_runs():
    rng = np.random.default_rng(0)
    train = [(rng.standard_normal((12, 3)), "ab a"), (rng.standard_normal((10, 3)), "ba")]
    config = TrainConfig(epochs=3, batch_size=2, hidden=6, lr=0.01, clip_norm=1.0)
    model, history = train_ctc(train, config=config)
    assert history.epochs == 3
    assert all(np.isfinite(history.losses("train")))
    assert ctc_log_probs(model, train[0][0]).shape == (12, 29)


@pytest.mark.parametrize(
    "model",
    [
        RegressionModel(6),
        IsolatedModel(6, hidden=5, n_classes=7, dropout_rate=0.1),
        CtcModel(6, hidden=5),
    ],
)
def test_build_model(model):
    rebuilt = build_model(model.architecture())
    assert type(rebuilt) is type(model)
    assert rebuilt.architecture() == model.architecture()


def test_build_model_unknown():
    with pytest.raises(ParameterError):
        build_model({"kind": "transformer"})


def test_train_config_invalid():
    with pytest.raises(ParameterError):
        TrainConfig(epochs=0, batch_size=1, hidden=1)


def test_history_row():
    assert HistoryRow(3, "val", 0.5).csv_line() == "3,val,0.5"
    assert HistoryRow(1, "train", 0.25, 1.0).csv_line() == "1,train,0.25,1.0"
