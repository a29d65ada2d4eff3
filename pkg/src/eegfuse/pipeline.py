# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


"""
End-to-end experiment runner::

    results = Experiment(config).prepare(manifest).fit().evaluate()

``prepare`` splits the corpus and extracts per-utterance features, ``fit``
trains the baseline (MFCC only) and fused (MFCC + acoustic representation)
recognizers on the training split, and ``evaluate`` scores both on the test
split.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .corpus import (
    SENTENCES,
    AblatedFeatures,
    Manifest,
    apply_ablation,
    load_manifest,
    sentence_id,
    split,
)
from .decode import beam_search_decode, greedy_decode
from .errors import CheckpointMismatchError, LeakageError, ParameterError
from .features import FUSED_DIM, FeatureSequence
from .kpca import Reducer, explained_variance_curve, fit_reducer
from .lm import NgramLm, train_lm
from .metrics import (
    ClassificationMetrics,
    EvalReport,
    SignificanceResult,
    bootstrap_ci,
    classification_metrics,
    confusion_matrix,
    significance_test,
    write_confusion,
)
from .models import (
    N_SENTENCES,
    TrainHistory,
    acoustic_representation,
    ctc_log_probs,
    fuse,
    predict_isolated,
    train_ctc,
    train_isolated,
    train_regression,
)
from .nn import frozen
from .preprocess import RawRecording
from .text import DEFAULT_CHARSET
from .types import FeatureKind, Mode, Split
from .util import derive_seed, write_csv

logger = logging.getLogger(__name__)

SYSTEMS = ("baseline", "fused")


@dataclasses.dataclass(frozen=True, eq=False)
class Utterance:
    id: str
    split: Split
    transcript: str
    label: int | None
    features: AblatedFeatures

    @property
    def mfcc(self) -> FeatureSequence:
        return self.features.mfcc

    @property
    def raw(self) -> FeatureSequence:
        return self.features.raw


def require_training(items: Iterable[Utterance], what: str) -> list[Utterance]:
    """Pass through training-split utterances; anything else is a leak."""
    items = list(items)
    leaked = [u.id for u in items if u.split is not Split.TRAIN]
    if leaked:
        raise LeakageError(f"{what} was given non-training utterances: {', '.join(leaked)}")
    return items


def load_recordings(manifest: Manifest) -> dict[str, RawRecording]:
    return {entry.id: manifest.load(entry) for entry in manifest}


@dataclasses.dataclass
class System:
    """One recognizer and everything needed to feed it."""

    name: str
    model: object
    history: TrainHistory
    fused: bool


@dataclasses.dataclass
class SystemResult:
    name: str
    report: EvalReport
    classification: ClassificationMetrics | None = None
    confusion: np.ndarray | None = None
    greedy: EvalReport | None = None

    def summary(self) -> dict:
        out: dict = {}
        if self.classification is not None:
            out.update(self.classification.to_dict())
        if self.greedy is not None:
            out["wer"] = 100 * self.report.wer
            out["greedy_wer"] = 100 * self.greedy.wer
        return out


@dataclasses.dataclass
class Results:
    mode: Mode
    systems: dict[str, SystemResult]
    dims: dict[str, int]
    wer_ci: tuple[float, float] | None = None
    significance: SignificanceResult | None = None

    @property
    def primary(self) -> SystemResult:
        return self.systems.get("fused") or self.systems["baseline"]

    def to_dict(self) -> dict:
        primary = self.primary
        out = {
            "mode": self.mode.value,
            "system": primary.name,
            "test_utterances": len(primary.report.utterances),
            "dims": dict(self.dims),
            **primary.summary(),
        }
        if primary.name != "baseline" and "baseline" in self.systems:
            out["baseline"] = self.systems["baseline"].summary()
        if self.wer_ci is not None:
            out["wer_ci"] = [100 * self.wer_ci[0], 100 * self.wer_ci[1]]
        if self.significance is not None:
            out["significance"] = dataclasses.asdict(self.significance)
        return out

    def write(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.json").write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        )
        self.primary.report.write_csv(out_dir / "report.csv")
        for result in self.systems.values():
            if result is not self.primary:
                result.report.write_csv(out_dir / f"report_{result.name}.csv")
            if result.confusion is not None:
                name = "confusion.csv" if result is self.primary else f"confusion_{result.name}.csv"
                write_confusion(out_dir / name, result.confusion)


class Experiment:
    def __init__(self, config: RunConfig, systems: Sequence[str] | None = None):
        self.config = config
        if systems is None:
            systems = ("baseline",) if config.baseline_only else SYSTEMS
        unknown = set(systems) - set(SYSTEMS)
        if unknown:
            raise ParameterError(f"unknown system(s): {', '.join(sorted(unknown))}")
        self.system_names = tuple(systems)
        self.utterances: list[Utterance] = []
        self.reducer: Reducer | None = None
        self.regression = None
        self.regression_history: TrainHistory | None = None
        self.systems: dict[str, System] = {}
        self.lm: NgramLm | None = None

    def _seed(self, *counter: int) -> int:
        return derive_seed(self.config.seed, *counter)

    def prepare(
        self,
        manifest: Manifest | str | Path,
        recordings: dict[str, RawRecording] | None = None,
    ) -> Experiment:
        if not isinstance(manifest, Manifest):
            manifest = load_manifest(manifest)
        isolated = self.config.mode is Mode.ISOLATED
        if isolated:
            manifest.check_closed_set()

        ids = split(manifest, self.config.split)
        assignment = {
            **{i: Split.TRAIN for i in ids.train},
            **{i: Split.VAL for i in ids.val},
            **{i: Split.TEST for i in ids.test},
        }
        self.utterances = []
        for entry in manifest:
            recording = recordings[entry.id] if recordings else manifest.load(entry)
            features = apply_ablation(recording, self.config.ablation, self.config.frames)
            self.utterances.append(
                Utterance(
                    id=entry.id,
                    split=assignment[entry.id],
                    transcript=recording.transcript,
                    label=sentence_id(recording.transcript) if isolated else None,
                    features=features,
                )
            )
        logger.info(
            "prepared %d/%d/%d train/val/test utterances",
            len(ids.train), len(ids.val), len(ids.test),
        )  # fmt: skip
        return self

    def items(self, part: Split) -> list[Utterance]:
        return [u for u in self.utterances if u.split is part]

    def _require_prepared(self) -> None:
        if not self.utterances:
            raise RuntimeError("call prepare() first")

    def fit_reducer(self) -> Reducer:
        self._require_prepared()
        train = require_training(self.items(Split.TRAIN), "the feature reducer")
        cfg = self.config
        self.reducer = fit_reducer(
            np.concatenate([u.raw.data for u in train]),
            n_components=cfg.ablation.components,
            reduce=cfg.ablation.reduce,
            gamma=cfg.kpca.gamma,
            coef0=cfg.kpca.coef0,
            degree=cfg.kpca.degree,
            max_rows=cfg.kpca.max_rows,
            seed=self._seed(43),
        )
        return self.reducer

    def variance_curve(self) -> list[tuple[int, float]]:
        reducer = self.fit_reducer()
        if reducer.kpca is None:
            raise ParameterError("no KPCA was fitted for this configuration")
        return explained_variance_curve(reducer.kpca)

    def reduced(self, utterance: Utterance) -> FeatureSequence:
        return FeatureSequence(self.reducer.apply(utterance.raw.data), FeatureKind.KPCA)

    def fit_regression(self):
        if self.reducer is None:
            self.fit_reducer()
        train = require_training(self.items(Split.TRAIN), "the regression model")
        self.regression, self.regression_history = train_regression(
            [(self.reduced(u), u.mfcc, u.id) for u in train],
            [(self.reduced(u), u.mfcc, u.id) for u in self.items(Split.VAL)],
            self.config.regression,
            self._seed(40),
        )
        return self.regression

    def recognizer_input(self, utterance: Utterance, fused: bool) -> FeatureSequence:
        if not fused:
            return utterance.mfcc
        rep = acoustic_representation(self.regression, self.reduced(utterance))
        sequence = fuse(utterance.mfcc, rep)
        assert sequence.dim == FUSED_DIM
        return sequence

    def _train_recognizer(self, name: str, fused: bool) -> System:
        train = require_training(self.items(Split.TRAIN), f"the {name} recognizer")
        val = self.items(Split.VAL)
        seed = self._seed(41 if name == "baseline" else 42)
        if self.config.mode is Mode.ISOLATED:
            model, history = train_isolated(
                [(self.recognizer_input(u, fused), u.label, u.id) for u in train],
                [(self.recognizer_input(u, fused), u.label, u.id) for u in val],
                self.config.isolated,
                seed,
                N_SENTENCES,
            )
        else:
            model, history = train_ctc(
                [(self.recognizer_input(u, fused), u.transcript, u.id) for u in train],
                [(self.recognizer_input(u, fused), u.transcript, u.id) for u in val],
                self.config.ctc,
                seed,
                DEFAULT_CHARSET,
            )
        return System(name, model, history, fused)

    def fit(self) -> Experiment:
        self._require_prepared()
        if self.config.mode is Mode.CONTINUOUS:
            self.fit_lm()
        for name in self.system_names:
            if name == "baseline":
                self.systems[name] = self._train_recognizer(name, fused=False)
                continue
            self.fit_regression()
            with frozen(self.regression):
                self.systems[name] = self._train_recognizer(name, fused=True)
        return self

    def fit_lm(self) -> NgramLm:
        train = require_training(self.items(Split.TRAIN), "the language model")
        self.lm = train_lm([u.transcript for u in train], self.config.decode.lm_order)
        return self.lm

    def evaluate(self, part: Split = Split.TEST) -> Results:
        if not self.systems:
            raise RuntimeError("call fit() or load_checkpoints() first")
        test = self.items(part)
        if not test:
            raise ParameterError(f"the {part.value} split is empty")
        results = {
            name: self._evaluate_system(system, test) for name, system in self.systems.items()
        }
        dims = {"mfcc": test[0].mfcc.dim}
        if self.reducer is not None:
            dims.update(raw=test[0].raw.dim, reduced=self.reducer.output_dim, fused=FUSED_DIM)

        wer_ci = significance = None
        if self.config.mode is Mode.CONTINUOUS:
            primary = results.get("fused") or results["baseline"]
            try:
                wer_ci = bootstrap_ci(
                    primary.report.errors,
                    self.config.eval.ci_level,
                    self.config.eval.replicates,
                    self._seed(50),
                )
                if "fused" in results and "baseline" in results:
                    significance = significance_test(
                        results["baseline"].report.per_utterance_rates(),
                        results["fused"].report.per_utterance_rates(),
                        self.config.eval.replicates,
                        self._seed(51),
                    )
            except ParameterError as e:
                logger.warning("skipping interval and significance statistics: %s", e)
        return Results(self.config.mode, results, dims, wer_ci, significance)

    def _evaluate_system(self, system: System, test: list[Utterance]) -> SystemResult:
        report = EvalReport()
        if self.config.mode is Mode.ISOLATED:
            pairs = []
            for u in test:
                pred, _ = predict_isolated(system.model, self.recognizer_input(u, system.fused))
                pairs.append((u.label, pred))
                report.add(u.id, SENTENCES[u.label], SENTENCES[pred])
            confusion = confusion_matrix(pairs, N_SENTENCES)
            return SystemResult(
                system.name, report, classification_metrics(confusion), confusion
            )

        greedy = EvalReport()
        decode = self.config.decode
        charset = system.model.charset
        for u in test:
            log_probs = ctc_log_probs(system.model, self.recognizer_input(u, system.fused))
            greedy.add(u.id, u.transcript, greedy_decode(log_probs, charset))
            hypothesis = beam_search_decode(
                log_probs, self.lm, decode.beam_width, decode.alpha, decode.beta, charset
            )
            report.add(u.id, u.transcript, hypothesis)
        return SystemResult(system.name, report, greedy=greedy)

    def histories(self) -> list[tuple[str, TrainHistory]]:
        out = []
        if self.regression_history is not None:
            out.append(("regression", self.regression_history))
        out.extend((name, system.history) for name, system in self.systems.items())
        return out

    def write_loss_history(self, path: str | Path) -> None:
        rows = [
            (name, *row) for name, history in self.histories() for row in history.to_csv_rows()
        ]
        write_csv(path, ["model", "epoch", "split", "loss", "accuracy"], rows)

    def model_config(self) -> dict:
        """The flat config a checkpoint records; output locations do not affect models."""
        flat = {k: v for k, v in self.config.to_dict().items() if not k.startswith("paths.")}
        return json.loads(json.dumps(flat))

    def _load(self, path: Path) -> Checkpoint:
        checkpoint = load_checkpoint(path)
        expected = self.model_config()
        stored = checkpoint.config
        changed = {k for k in expected.keys() | stored.keys() if expected.get(k) != stored.get(k)}
        if changed:
            raise CheckpointMismatchError(f"{path} was trained with different settings", changed)
        return checkpoint

    def save_checkpoints(self, directory: str | Path) -> None:
        directory = Path(directory)
        config = self.model_config()
        if self.regression is not None:
            save_checkpoint(
                directory / "regression.ckpt",
                Checkpoint.from_model(self.regression, self.reducer, config, self.config.seed),
            )
        for name, system in self.systems.items():
            save_checkpoint(
                directory / f"{name}.ckpt",
                Checkpoint.from_model(system.model, None, config, self.config.seed),
            )

    def load_checkpoints(self, directory: str | Path) -> Experiment:
        """Restore trained models instead of calling ``fit``."""
        self._require_prepared()
        directory = Path(directory)
        if "fused" in self.system_names:
            regression = self._load(directory / "regression.ckpt")
            self.reducer = regression.reducer
            self.regression = regression.build()
        for name in self.system_names:
            self.systems[name] = System(
                name,
                self._load(directory / f"{name}.ckpt").build(),
                TrainHistory(),
                fused=name == "fused",
            )
        if self.config.mode is Mode.CONTINUOUS:
            self.fit_lm()
        return self

    @staticmethod
    def has_checkpoints(directory: str | Path, systems: Sequence[str]) -> bool:
        names = [*systems, *(["regression"] if "fused" in systems else [])]
        return all((Path(directory) / f"{name}.ckpt").is_file() for name in names)


ABLATION_TABLES: dict[str, list[tuple[str, dict]]] = {
    "band": [
        ("low", {"ablation.band": "low"}),
        ("high", {"ablation.band": "high"}),
        ("all", {"ablation.band": "all"}),
    ],
    "artifacts": [
        ("removed", {"ablation.remove_artifacts": True}),
        ("not_removed", {"ablation.remove_artifacts": False}),
    ],
    "reduction": [
        ("kpca", {"ablation.reduce": True}),
        ("no_kpca", {"ablation.reduce": False}),
    ],
    "sensors": [
        ("temporal", {"ablation.sensor_set": "temporal"}),
        ("frontal", {"ablation.sensor_set": "frontal"}),
        ("frontal+temporal", {"ablation.sensor_set": "frontal+temporal"}),
    ],
    "half-length": [
        ("full", {"ablation.half_length": False}),
        ("half", {"ablation.half_length": True}),
    ],
    "rep-source": [
        ("emg", {"ablation.rep_source": "emg"}),
        ("eeg", {"ablation.rep_source": "eeg"}),
    ],
}

ABLATION_COLUMNS = (
    "variant", "raw_dim", "reduced_dim", "fused_dim", "accuracy", "f1", "precision", "recall",
)  # fmt: skip


def run_ablation(
    config: RunConfig,
    table: str,
    manifest: Manifest,
    recordings: dict[str, RawRecording] | None = None,
) -> list[tuple]:
    """
    Isolated-mode rows for one ablation table: the MFCC baseline first, then
    one fused system per variant.
    """
    if table not in ABLATION_TABLES:
        raise ParameterError(f"unknown ablation table: {table}")
    config = config.with_overrides({"mode": Mode.ISOLATED.value, "baseline_only": False})
    if recordings is None:
        recordings = load_recordings(manifest)

    baseline = Experiment(config, ("baseline",)).prepare(manifest, recordings).fit().evaluate()
    metrics = baseline.primary.classification
    rows = [
        ("mfcc", "", "", baseline.dims["mfcc"],
         metrics.accuracy, metrics.f1, metrics.precision, metrics.recall),
    ]  # fmt: skip
    for variant, overrides in ABLATION_TABLES[table]:
        logger.info("ablation %s: variant %s", table, variant)
        experiment = Experiment(config.with_overrides(overrides), ("fused",))
        results = experiment.prepare(manifest, recordings).fit().evaluate()
        metrics = results.primary.classification
        rows.append(
            (
                variant,
                results.dims["raw"],
                results.dims["reduced"],
                results.dims["fused"],
                metrics.accuracy,
                metrics.f1,
                metrics.precision,
                metrics.recall,
            )
        )
    return rows
