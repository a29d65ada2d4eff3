# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import dataclasses
import logging
from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
import torch
from torch import nn

from .errors import CtcInfeasibleError, ParameterError
from .features import FUSED_DIM, MFCC_DIM, REP_DIM, FeatureSequence
from .nn import (
    DTYPE,
    AdamConfig,
    AdamState,
    Dense,
    GruLayer,
    as_tensor,
    ctc_loss,
    ctc_min_frames,
    dropout,
    early_stop,
    mse,
)
from .text import DEFAULT_CHARSET, Charset
from .types import DropoutMode, FeatureKind
from .util import numpy_rng, torch_generator

logger = logging.getLogger(__name__)

N_SENTENCES = 57


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    hidden: int
    lr: float = 0.001
    patience: int | None = None
    clip_norm: float | None = None
    dropout: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.hidden < 1:
            raise ParameterError("epochs, batch_size and hidden must be positive")


REGRESSION_TRAINING = TrainConfig(epochs=70, batch_size=100, hidden=REP_DIM)
ISOLATED_TRAINING = TrainConfig(epochs=10, batch_size=50, hidden=512, patience=2, dropout=0.2)
CTC_TRAINING = TrainConfig(epochs=100, batch_size=50, hidden=512, patience=5, clip_norm=5.0)


@dataclasses.dataclass(frozen=True, eq=False)
class Example:
    features: np.ndarray
    target: Any
    id: str = ""


def _examples(items) -> list[Example]:
    examples = []
    for i, item in enumerate(items):
        if not isinstance(item, Example):
            features, target, *rest = item
            item = Example(features, target, rest[0] if rest else f"#{i}")
        if isinstance(item.features, FeatureSequence):
            item = dataclasses.replace(item, features=item.features.data)
        examples.append(item)
    return examples


@dataclasses.dataclass(frozen=True)
class HistoryRow:
    epoch: int
    split: str
    loss: float
    accuracy: float | None = None

    def csv_line(self) -> str:
        line = f"{self.epoch},{self.split},{self.loss!r}"
        return line if self.accuracy is None else f"{line},{self.accuracy!r}"


@dataclasses.dataclass
class TrainHistory:
    rows: list[HistoryRow] = dataclasses.field(default_factory=list)
    stopped_early: bool = False

    def record(self, row: HistoryRow) -> None:
        self.rows.append(row)
        logger.info(row.csv_line())

    def losses(self, split: str) -> list[float]:
        return [r.loss for r in self.rows if r.split == split]

    def accuracies(self, split: str) -> list[float]:
        return [r.accuracy for r in self.rows if r.split == split and r.accuracy is not None]

    @property
    def epochs(self) -> int:
        return len(self.losses("train"))

    def to_csv_rows(self) -> list[tuple]:
        return [
            (r.epoch, r.split, r.loss, "" if r.accuracy is None else r.accuracy)
            for r in self.rows
        ]


class RegressionModel(nn.Module):
    """EEG -> MFCC: GRU with 128 hidden units and a per-step linear head."""

    kind = "regression"

    def __init__(self, input_dim: int, seed: int = 0):
        super().__init__()
        generator = torch_generator(seed, 1)
        self.gru = GruLayer(input_dim, REP_DIM, generator)
        self.head = Dense(REP_DIM, MFCC_DIM, generator)

    def architecture(self) -> dict:
        return {"kind": self.kind, "input_dim": self.gru.input_dim}

    def representation(self, x) -> torch.Tensor:
        return self.gru(as_tensor(x))

    def forward(self, x) -> torch.Tensor:
        return self.head(self.representation(x))


class IsolatedModel(nn.Module):
    """Sentence classifier over the GRU state at the last time step."""

    kind = "isolated"

    def __init__(
        self,
        input_dim: int,
        hidden: int = 512,
        n_classes: int = N_SENTENCES,
        dropout_rate: float = 0.2,
        seed: int = 0,
    ):
        super().__init__()
        generator = torch_generator(seed, 2)
        self.gru = GruLayer(input_dim, hidden, generator)
        self.head = Dense(hidden, n_classes, generator)
        self.dropout_rate = dropout_rate
        self.n_classes = n_classes

    def architecture(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.gru.input_dim,
            "hidden": self.gru.hidden_dim,
            "n_classes": self.n_classes,
            "dropout": self.dropout_rate,
        }

    def forward(
        self,
        x,
        mode: DropoutMode = DropoutMode.EVAL,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        last = self.gru(as_tensor(x))[-1]
        return self.head(dropout(last, self.dropout_rate, mode, generator))


class CtcModel(nn.Module):
    """GRU encoder with a per-step dense + log-softmax decoder over the charset."""

    kind = "ctc"

    def __init__(
        self,
        input_dim: int,
        hidden: int = 512,
        charset: Charset = DEFAULT_CHARSET,
        seed: int = 0,
    ):
        super().__init__()
        generator = torch_generator(seed, 3)
        self.charset = charset
        self.gru = GruLayer(input_dim, hidden, generator)
        self.head = Dense(hidden, len(charset), generator)

    def architecture(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.gru.input_dim,
            "hidden": self.gru.hidden_dim,
            "charset": list(self.charset.symbols),
        }

    def forward(self, x) -> torch.Tensor:
        return torch.log_softmax(self.head(self.gru(as_tensor(x))), dim=-1)


def build_model(architecture: dict) -> nn.Module:
    kind = architecture.get("kind")
    if kind == RegressionModel.kind:
        return RegressionModel(architecture["input_dim"])
    if kind == IsolatedModel.kind:
        return IsolatedModel(
            architecture["input_dim"],
            architecture["hidden"],
            architecture["n_classes"],
            architecture["dropout"],
        )
    if kind == CtcModel.kind:
        return CtcModel(
            architecture["input_dim"],
            architecture["hidden"],
            Charset(architecture["charset"]),
        )
    raise ParameterError(f"unknown model kind: {kind!r}")


LossFn = Callable[
    [nn.Module, Example, DropoutMode, torch.Generator], tuple[torch.Tensor, bool | None]
]


def _fit(
    model: nn.Module,
    train: list[Example],
    val: list[Example],
    config: TrainConfig,
    loss_fn: LossFn,
    seed: int,
) -> TrainHistory:
    """
    Mini-batch training where a batch is a group of sequences whose losses are
    averaged before a single optimizer step.
    """
    optimizer = AdamState(model.parameters(), AdamConfig(lr=config.lr))
    order_rng = numpy_rng(seed, 4)
    generator = torch_generator(seed, 5)
    history = TrainHistory()
    val_losses: list[float] = []

    for epoch in range(1, config.epochs + 1):
        model.train()
        order = order_rng.permutation(len(train))
        total, correct, scored = 0.0, 0, 0
        for start in range(0, len(train), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            loss = torch.zeros((), dtype=DTYPE)
            for example in batch:
                example_loss, hit = loss_fn(model, example, DropoutMode.TRAIN, generator)
                loss = loss + example_loss
                if hit is not None:
                    correct += int(hit)
                    scored += 1
            loss = loss / len(batch)
            loss.backward()
            optimizer.step(clip_norm=config.clip_norm)
            total += loss.item() * len(batch)
        history.record(
            HistoryRow(epoch, "train", total / len(train), correct / scored if scored else None)
        )

        if not val:
            continue
        model.eval()
        total, correct, scored = 0.0, 0, 0
        with torch.no_grad():
            for example in val:
                example_loss, hit = loss_fn(model, example, DropoutMode.EVAL, generator)
                total += example_loss.item()
                if hit is not None:
                    correct += int(hit)
                    scored += 1
        val_loss = total / len(val)
        val_losses.append(val_loss)
        history.record(
            HistoryRow(epoch, "val", val_loss, correct / scored if scored else None)
        )
        if config.patience is not None and early_stop(val_losses, config.patience):
            logger.info("early stopping after epoch %d", epoch)
            history.stopped_early = True
            break

    model.eval()
    return history


def _regression_loss(model, example, mode, generator):
    return mse(model(example.features), example.target), None


def train_regression(
    train: Sequence,
    val: Sequence = (),
    config: TrainConfig = REGRESSION_TRAINING,
    seed: int = 0,
) -> tuple[RegressionModel, TrainHistory]:
    """
    Fit the EEG -> MFCC regression on time-aligned ``(eeg_seq, mfcc_seq)`` pairs.
    """
    train, val = _examples(train), _examples(val)
    if not train:
        raise ParameterError("the regression training set is empty")
    input_dim = train[0].features.shape[1]
    for example in (*train, *val):
        target = example.target
        if isinstance(target, FeatureSequence):
            target = target.data
        if example.features.shape[1] != input_dim:
            raise ParameterError(f"{example.id}: input dim differs from {input_dim}")
        if target.shape != (example.features.shape[0], MFCC_DIM):
            raise ParameterError(
                f"{example.id}: target shape {target.shape} is not aligned to "
                f"{example.features.shape[0]} frames x {MFCC_DIM}"
            )
    train = [dataclasses.replace(e, target=_target_tensor(e.target)) for e in train]
    val = [dataclasses.replace(e, target=_target_tensor(e.target)) for e in val]

    model = RegressionModel(input_dim, seed)
    history = _fit(model, train, val, config, _regression_loss, seed)
    return model, history


def _target_tensor(target) -> torch.Tensor:
    if isinstance(target, FeatureSequence):
        target = target.data
    return as_tensor(target)


def acoustic_representation(model: RegressionModel, seq) -> FeatureSequence:
    """The 128-dim GRU hidden states, not the regression head output."""
    data = seq.data if isinstance(seq, FeatureSequence) else np.asarray(seq)
    if data.ndim != 2 or data.shape[1] != model.gru.input_dim:
        raise ParameterError(
            f"regression model expects dim {model.gru.input_dim}, got shape {data.shape}"
        )
    with torch.no_grad():
        states = model.representation(data)
    return FeatureSequence(states.numpy().copy(), FeatureKind.ACOUSTIC_REP)


def fuse(mfcc_seq: FeatureSequence, rep_seq: FeatureSequence) -> FeatureSequence:
    """Per-frame ``[13 MFCC | 128 representation]`` over the common length."""
    if mfcc_seq.frames == 0 or rep_seq.frames == 0:
        raise ParameterError("cannot fuse an empty sequence")
    if mfcc_seq.frame_rate_hz != rep_seq.frame_rate_hz:
        raise ParameterError("sequences must share a frame rate")
    frames = min(mfcc_seq.frames, rep_seq.frames)
    data = np.concatenate([mfcc_seq.data[:frames], rep_seq.data[:frames]], axis=1)
    return FeatureSequence(data, FeatureKind.FUSED)


def _isolated_loss(model, example, mode, generator):
    logits = model(example.features, mode, generator)
    target = int(example.target)
    loss = -torch.log_softmax(logits, dim=-1)[target]
    return loss, int(torch.argmax(logits)) == target


def train_isolated(
    train: Sequence,
    val: Sequence = (),
    config: TrainConfig = ISOLATED_TRAINING,
    seed: int = 0,
    n_classes: int = N_SENTENCES,
) -> tuple[IsolatedModel, TrainHistory]:
    train, val = _examples(train), _examples(val)
    if not train:
        raise ParameterError("the isolated training set is empty")
    for example in (*train, *val):
        if not 0 <= int(example.target) < n_classes:
            raise ParameterError(
                f"{example.id}: class id {example.target} outside [0, {n_classes})"
            )
    model = IsolatedModel(
        train[0].features.shape[1], config.hidden, n_classes, config.dropout, seed
    )
    history = _fit(model, train, val, config, _isolated_loss, seed)
    return model, history


def predict_isolated(model: IsolatedModel, seq) -> tuple[int, np.ndarray]:
    data = seq.data if isinstance(seq, FeatureSequence) else np.asarray(seq)
    if data.ndim != 2 or data.shape[1] != model.gru.input_dim:
        raise ParameterError(
            f"isolated model expects dim {model.gru.input_dim}, got shape {data.shape}"
        )
    with torch.no_grad():
        probs = torch.softmax(model(data, DropoutMode.EVAL), dim=-1).numpy()
    # np.argmax keeps the lowest index among ties
    return int(np.argmax(probs)), probs


def _ctc_loss(model, example, mode, generator):
    return ctc_loss(model(example.features), example.target, model.charset.blank), None


def train_ctc(
    train: Sequence,
    val: Sequence = (),
    config: TrainConfig = CTC_TRAINING,
    seed: int = 0,
    charset: Charset = DEFAULT_CHARSET,
) -> tuple[CtcModel, TrainHistory]:
    """
    Fit the character CTC recognizer on ``(feature_seq, transcript)`` pairs.
    Utterances whose transcript cannot fit in their frame count are rejected
    together, by id.
    """
    train, val = _examples(train), _examples(val)
    if not train:
        raise ParameterError("the CTC training set is empty")
    encoded = []
    infeasible = []
    for example in (*train, *val):
        label = charset.encode(example.target)
        if example.features.shape[0] < ctc_min_frames(label):
            infeasible.append(example.id)
        encoded.append(dataclasses.replace(example, target=label))
    if infeasible:
        raise CtcInfeasibleError("transcripts longer than their frame count", infeasible)
    train, val = encoded[: len(train)], encoded[len(train) :]

    model = CtcModel(train[0].features.shape[1], config.hidden, charset, seed)
    history = _fit(model, train, val, config, _ctc_loss, seed)
    return model, history


def ctc_log_probs(model: CtcModel, seq) -> np.ndarray:
    data = seq.data if isinstance(seq, FeatureSequence) else np.asarray(seq)
    if data.ndim != 2 or data.shape[1] != model.gru.input_dim:
        raise ParameterError(
            f"CTC model expects dim {model.gru.input_dim}, got shape {data.shape}"
        )
    with torch.no_grad():
        return model(data).numpy().copy()


def recognizer_input_dim(fused: bool) -> int:
    return FUSED_DIM if fused else MFCC_DIM

