# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import dataclasses
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ParameterError
from .text import words
from .util import numpy_rng, write_csv

logger = logging.getLogger(__name__)

EPSILON = 1e-7
REPLICATES = 10_000
MIN_UTTERANCES = 10


@dataclasses.dataclass(frozen=True)
class WordErrors:
    substitutions: int
    insertions: int
    deletions: int
    reference_words: int

    @property
    def edits(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        return self.edits / self.reference_words


def wer(reference: str, hypothesis: str) -> WordErrors:
    """
    Word-level Levenshtein alignment with unit costs. Among equally cheap
    scripts the backtrace prefers a match, then substitution, deletion and
    insertion.
    """
    ref, hyp = words(reference), words(hypothesis)
    if not ref:
        raise ParameterError("the reference transcript has no words")
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost[i, j] = min(
                cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]),
                cost[i - 1, j] + 1,
                cost[i, j - 1] + 1,
            )

    sub = ins = dele = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            sub += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return WordErrors(int(sub), ins, dele, n)


@dataclasses.dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


def classification_metrics(confusion) -> ClassificationMetrics:
    """
    Accuracy and macro precision/recall/F1, as percentages, from a confusion
    matrix indexed ``[true][pred]``. Every denominator carries a 1e-7 epsilon,
    so classes that never occur contribute zero instead of failing.
    """
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1] or confusion.size == 0:
        raise ParameterError(f"expected a non-empty square matrix, got shape {confusion.shape}")
    if np.any(confusion < 0):
        raise ParameterError("confusion counts must be non-negative")
    confusion = confusion.astype(np.float64)
    total = confusion.sum()
    if total == 0:
        raise ParameterError("the confusion matrix has no counts")
    hits = np.diag(confusion)
    precision = np.mean(hits / (confusion.sum(axis=0) + EPSILON))
    recall = np.mean(hits / (confusion.sum(axis=1) + EPSILON))
    f1 = 2 * precision * recall / (precision + recall + EPSILON)
    return ClassificationMetrics(
        accuracy=float(100 * hits.sum() / total),
        precision=float(100 * precision),
        recall=float(100 * recall),
        f1=float(100 * f1),
    )


def confusion_matrix(
    predictions: Iterable[tuple[int, int]], n_classes: int = 57
) -> np.ndarray:
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    for true, pred in predictions:
        if not (0 <= true < n_classes and 0 <= pred < n_classes):
            raise ParameterError(f"class pair ({true}, {pred}) outside [0, {n_classes})")
        matrix[true, pred] += 1
    return matrix


def write_confusion(path: str | Path, matrix: np.ndarray) -> None:
    header = ["true", *(str(c) for c in range(matrix.shape[1]))]
    write_csv(path, header, ([i, *row.tolist()] for i, row in enumerate(matrix)))


def _edit_arrays(per_utterance) -> tuple[np.ndarray, np.ndarray]:
    edits, refs = [], []
    for item in per_utterance:
        if isinstance(item, WordErrors):
            edits.append(item.edits)
            refs.append(item.reference_words)
        else:
            e, r = item
            edits.append(e)
            refs.append(r)
    return np.asarray(edits, dtype=np.float64), np.asarray(refs, dtype=np.float64)


def pooled_wer(per_utterance) -> float:
    edits, refs = _edit_arrays(per_utterance)
    if refs.sum() == 0:
        raise ParameterError("no reference words to score")
    return float(edits.sum() / refs.sum())


def bootstrap_ci(
    per_utterance: Sequence,
    level: float = 0.95,
    replicates: int = REPLICATES,
    seed: int = 0,
) -> tuple[float, float]:
    """
    Percentile bootstrap interval of the pooled WER, resampling utterances.

    ``per_utterance`` holds :class:`WordErrors` or ``(edits, reference_words)``
    pairs.
    """
    if not 0 < level < 1:
        raise ParameterError(f"confidence level must be in (0, 1), got {level}")
    edits, refs = _edit_arrays(per_utterance)
    if len(edits) < MIN_UTTERANCES:
        raise ParameterError(
            f"bootstrap needs at least {MIN_UTTERANCES} utterances, got {len(edits)}"
        )
    rng = numpy_rng(seed, 10)
    idx = rng.integers(0, len(edits), size=(replicates, len(edits)))
    samples = edits[idx].sum(axis=1) / refs[idx].sum(axis=1)
    tail = (1 - level) / 2
    low, high = np.quantile(samples, [tail, 1 - tail])
    return float(low), float(high)


@dataclasses.dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    t_p_value: float
    mean_difference: float


def significance_test(
    per_utt_a: Sequence[float],
    per_utt_b: Sequence[float],
    replicates: int = REPLICATES,
    seed: int = 0,
) -> SignificanceResult:
    """
    Two-sided paired bootstrap test of a zero mean difference, with the
    paired t-test p-value alongside for reference.
    """
    a = np.asarray(per_utt_a, dtype=np.float64)
    b = np.asarray(per_utt_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError(f"paired lists differ in length: {a.shape} vs {b.shape}")
    if len(a) < MIN_UTTERANCES:
        raise ParameterError(f"significance test needs at least {MIN_UTTERANCES} pairs")
    diff = a - b
    observed = float(diff.mean())
    if np.ptp(diff) == 0:
        p = 1.0 if observed == 0 else 0.0
        logger.info("paired differences are constant; p-value set to %s", p)
        return SignificanceResult(p, p, observed)

    rng = numpy_rng(seed, 11)
    centered = diff - observed
    idx = rng.integers(0, len(diff), size=(replicates, len(diff)))
    means = centered[idx].mean(axis=1)
    count = int(np.sum(np.abs(means) >= abs(observed)))
    p = (count + 1) / (replicates + 1)
    t_p = float(stats.ttest_rel(a, b).pvalue)
    return SignificanceResult(p, t_p, observed)


@dataclasses.dataclass(frozen=True)
class UtteranceScore:
    id: str
    reference: str
    hypothesis: str
    errors: WordErrors


@dataclasses.dataclass
class EvalReport:
    utterances: list[UtteranceScore] = dataclasses.field(default_factory=list)

    def add(self, utterance_id: str, reference: str, hypothesis: str) -> UtteranceScore:
        score = UtteranceScore(utterance_id, reference, hypothesis, wer(reference, hypothesis))
        self.utterances.append(score)
        return score

    @property
    def errors(self) -> list[WordErrors]:
        return [u.errors for u in self.utterances]

    @property
    def wer(self) -> float:
        """Total edits over total reference words."""
        return pooled_wer(self.errors)

    def per_utterance_rates(self) -> list[float]:
        return [u.errors.rate for u in self.utterances]

    def to_csv_rows(self) -> list[tuple]:
        return [
            (
                u.id,
                u.reference,
                u.hypothesis,
                u.errors.substitutions,
                u.errors.insertions,
                u.errors.deletions,
                u.errors.rate,
            )
            for u in self.utterances
        ]

    def write_csv(self, path: str | Path) -> None:
        header = ["id", "reference", "hypothesis", "sub", "ins", "del", "wer"]
        write_csv(path, header, self.to_csv_rows())
