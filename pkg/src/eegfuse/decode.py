# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import dataclasses
import math
from collections.abc import Sequence

import numpy as np

from .errors import CtcInfeasibleError, ParameterError
from .lm import NgramLm
from .nn import as_tensor, ctc_loss, ctc_min_frames
from .text import Charset

NEG_INF = -math.inf

BEAM_WIDTH = 25
ALPHA = 1.5
BETA = 1.0


@dataclasses.dataclass(frozen=True)
class Beam:
    prefix: tuple[int, ...]
    log_p_blank: float
    log_p_nonblank: float
    lm_score: float

    @property
    def log_p(self) -> float:
        return float(np.logaddexp(self.log_p_blank, self.log_p_nonblank))

    @property
    def score(self) -> float:
        return self.log_p + self.lm_score


def _check_log_probs(log_probs, charset: Charset) -> np.ndarray:
    log_probs = np.asarray(log_probs, dtype=np.float64)
    if log_probs.ndim != 2 or log_probs.shape[1] != len(charset):
        raise ParameterError(
            f"expected T x {len(charset)} log-probabilities, got shape {log_probs.shape}"
        )
    return log_probs


def greedy_decode(log_probs, charset: Charset) -> str:
    """Best path: per-frame argmax, merge adjacent repeats, drop blanks."""
    log_probs = _check_log_probs(log_probs, charset)
    path = np.argmax(log_probs, axis=1)
    collapsed = [int(s) for i, s in enumerate(path) if i == 0 or s != path[i - 1]]
    return charset.decode(collapsed)


def lm_score(
    text: str,
    lm: NgramLm | None,
    alpha: float,
    beta: float,
    final: bool = True,
) -> float:
    """
    Shallow-fusion term of a hypothesis: ``alpha * log P(word | context) + beta``
    for every word closed by a space, plus the trailing word when ``final``.
    """
    if lm is None:
        return 0.0
    pieces = text.split(" ")
    if not final:
        pieces = pieces[:-1]
    history: list[str] = []
    score = 0.0
    for word in pieces:
        if not word:
            continue
        score += alpha * lm.log_prob(word, lm.context(history)) + beta
        history.append(word)
    return score


def beam_search(
    log_probs,
    lm: NgramLm | None = None,
    beam_width: int = BEAM_WIDTH,
    alpha: float = ALPHA,
    beta: float = BETA,
    charset: Charset | None = None,
) -> list[Beam]:
    """
    CTC prefix beam search keeping blank and non-blank mass per prefix.

    The returned beams are sorted best first, with the final word's LM term
    included. Equal scores are ordered by the lexicographically smaller prefix.
    """
    if charset is None:
        raise ParameterError("beam search needs a charset")
    if beam_width < 1:
        raise ParameterError(f"beam width must be at least 1, got {beam_width}")
    if alpha < 0 or beta < 0:
        raise ParameterError("alpha and beta must be non-negative")
    log_probs = _check_log_probs(log_probs, charset)
    blank = charset.blank
    symbols = [s for s in range(len(charset)) if s != blank]

    lm_cache: dict[tuple[int, ...], float] = {}

    def partial_lm(prefix: tuple[int, ...]) -> float:
        if prefix not in lm_cache:
            lm_cache[prefix] = lm_score(charset.decode(prefix), lm, alpha, beta, final=False)
        return lm_cache[prefix]

    beams: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, NEG_INF)}
    for frame in log_probs:
        nxt: dict[tuple[int, ...], list[float]] = {}

        def add(prefix, blank_mass=NEG_INF, nonblank_mass=NEG_INF):
            entry = nxt.setdefault(prefix, [NEG_INF, NEG_INF])
            entry[0] = np.logaddexp(entry[0], blank_mass)
            entry[1] = np.logaddexp(entry[1], nonblank_mass)

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            add(prefix, blank_mass=total + frame[blank])
            last = prefix[-1] if prefix else None
            for s in symbols:
                p = frame[s]
                if s == last:
                    # a repeat only extends the prefix across a blank
                    add(prefix, nonblank_mass=pnb + p)
                    add(prefix + (s,), nonblank_mass=pb + p)
                else:
                    add(prefix + (s,), nonblank_mass=total + p)

        ranked = sorted(
            nxt.items(),
            key=lambda item: (-(np.logaddexp(*item[1]) + partial_lm(item[0])), item[0]),
        )
        beams = {prefix: (float(pb), float(pnb)) for prefix, (pb, pnb) in ranked[:beam_width]}

    results = [
        Beam(prefix, pb, pnb, lm_score(charset.decode(prefix), lm, alpha, beta))
        for prefix, (pb, pnb) in beams.items()
    ]
    results.sort(key=lambda beam: (-beam.score, beam.prefix))
    return results


def beam_search_decode(
    log_probs,
    lm: NgramLm | None = None,
    beam_width: int = BEAM_WIDTH,
    alpha: float = ALPHA,
    beta: float = BETA,
    charset: Charset | None = None,
) -> str:
    best = beam_search(log_probs, lm, beam_width, alpha, beta, charset)[0]
    return charset.decode(best.prefix)


def score_hypothesis(
    log_probs,
    text: str,
    lm: NgramLm | None = None,
    alpha: float = ALPHA,
    beta: float = BETA,
    charset: Charset | None = None,
) -> float:
    """Exact CTC log-likelihood of ``text`` plus its shallow-fusion LM term."""
    if charset is None:
        raise ParameterError("scoring needs a charset")
    log_probs = _check_log_probs(log_probs, charset)
    label = charset.encode(text)
    if not label:
        acoustic = float(log_probs[:, charset.blank].sum())
    elif log_probs.shape[0] < ctc_min_frames(label):
        return NEG_INF
    else:
        try:
            acoustic = -float(ctc_loss(as_tensor(log_probs), label, charset.blank))
        except CtcInfeasibleError:  # pragma: no cover
            return NEG_INF
    return acoustic + lm_score(text, lm, alpha, beta)


def decode_all(
    log_probs_list: Sequence,
    charset: Charset,
    lm: NgramLm | None = None,
    beam_width: int = BEAM_WIDTH,
    alpha: float = ALPHA,
    beta: float = BETA,
) -> tuple[list[str], list[str]]:
    """Greedy and beam hypotheses for a batch of utterances, in input order."""
    greedy = [greedy_decode(lp, charset) for lp in log_probs_list]
    beam = [
        beam_search_decode(lp, lm, beam_width, alpha, beta, charset) for lp in log_probs_list
    ]
    return greedy, beam
