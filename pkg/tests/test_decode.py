# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


import math

import numpy as np
import pytest

from eegfuse.decode import (
    beam_search,
    beam_search_decode,
    decode_all,
    greedy_decode,
    lm_score,
    score_hypothesis,
)
from eegfuse.errors import ParameterError
from eegfuse.lm import train_lm
from eegfuse.text import Charset

from .util import best_label_brute_force, ctc_brute_force

AB = Charset.from_letters("ab")


def _log_probs(rng, T, V):
    logits = rng.standard_normal((T, V)) * 2
    return logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)


def _path_log_probs(path, V, peak=0.99):
    probs = np.full((len(path), V), (1 - peak) / (V - 1))
    probs[np.arange(len(path)), path] = peak
    return np.log(probs)


@pytest.mark.parametrize(
    "path, expected",
    [
        ([1, 1, 0, 1, 2, 2], "aab"),
        ([0, 0, 0], ""),
        ([2, 0, 2, 2, 1], "bba"),
        ([1], "a"),
    ],
)
def test_greedy_decode(path, expected):
    assert greedy_decode(_path_log_probs(path, 3), AB) == expected


CHARSETS = {2: Charset.from_letters("a"), 3: AB}


@pytest.mark.parametrize(
    "T, V, seed", [(T, V, seed) for V in (2, 3) for T in range(1, 5) for seed in range(3)]
)
def test_unbounded_beam_finds_best_label(T, V, seed):
    log_probs = _log_probs(np.random.default_rng([T, V, seed]), T, V)
    beams = beam_search(log_probs, beam_width=10_000, charset=CHARSETS[V])
    assert beams[0].prefix == best_label_brute_force(log_probs)
    for beam in beams[:5]:
        assert beam.log_p == pytest.approx(ctc_brute_force(log_probs, beam.prefix), abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_width_one_on_peaked_input_is_greedy(seed):
    rng = np.random.default_rng(seed)
    path = rng.integers(0, 3, size=int(rng.integers(1, 9)))
    log_probs = _path_log_probs(path, 3)
    expected = greedy_decode(log_probs, AB)
    assert beam_search_decode(log_probs, beam_width=1, charset=AB) == expected


def test_language_model_changes_the_winner():
    frame = np.log([0.1, 0.44, 0.46])
    log_probs = np.stack([frame, frame])
    lm = train_lm(["a"] * 5)
    assert beam_search_decode(log_probs, None, charset=AB) == "b"
    assert beam_search_decode(log_probs, lm, alpha=10.0, beta=0.0, charset=AB) == "a"


@pytest.mark.parametrize("seed", range(20))
def test_wider_beam_never_scores_worse(seed):
    charset = Charset.from_letters("ab ")
    lm = train_lm(["ab a", "b ab", "a"])
    rng = np.random.default_rng(seed)
    log_probs = _log_probs(rng, int(rng.integers(1, 5)), len(charset))

    def best(width):
        text = beam_search_decode(log_probs, lm, width, 1.5, 1.0, charset)
        return score_hypothesis(log_probs, text, lm, 1.5, 1.0, charset)

    assert best(10_000) >= best(1) - 1e-9
    assert best(10_000) >= best(3) - 1e-9


def test_beam_score_matches_score_hypothesis():
    charset = Charset.from_letters("ab ")
    lm = train_lm(["ab a", "b ab"])
    log_probs = _log_probs(np.random.default_rng(7), 4, len(charset))
    for beam in beam_search(log_probs, lm, 10_000, 1.5, 1.0, charset)[:5]:
        text = charset.decode(beam.prefix)
        assert beam.score == pytest.approx(
            score_hypothesis(log_probs, text, lm, 1.5, 1.0, charset), abs=1e-9
        )


def test_score_hypothesis_edges():
    log_probs = _log_probs(np.random.default_rng(0), 3, 3)
    assert score_hypothesis(log_probs, "", charset=AB) == pytest.approx(log_probs[:, 0].sum())
    assert score_hypothesis(log_probs, "aa", charset=AB) == pytest.approx(
        ctc_brute_force(log_probs, [1, 1])
    )
    assert score_hypothesis(log_probs, "abab", charset=AB) == -math.inf
    assert score_hypothesis(log_probs, "aab", charset=AB) == -math.inf


def test_lm_score():
    lm = train_lm(["ab a", "b ab"])
    assert lm_score("ab a", None, 1.5, 1.0) == 0.0
    closed = lm_score("ab a", lm, 1.5, 1.0, final=False)
    assert closed == pytest.approx(1.5 * lm.log_prob("ab", lm.context([])) + 1.0)
    full = lm_score("ab a", lm, 1.5, 1.0)
    assert full == pytest.approx(closed + 1.5 * lm.log_prob("a", lm.context(["ab"])) + 1.0)
    # repeated spaces do not produce empty words
    assert lm_score("ab  a", lm, 1.5, 1.0) == pytest.approx(full)


def test_decode_all():
    batch = [_path_log_probs([1, 0, 2], 3), _path_log_probs([2, 2], 3)]
    greedy, beam = decode_all(batch, AB, beam_width=4)
    assert greedy == ["ab", "b"]
    assert beam == ["ab", "b"]


def test_invalid_arguments():
    log_probs = _log_probs(np.random.default_rng(0), 3, 3)
    with pytest.raises(ParameterError):
        beam_search(log_probs)
    with pytest.raises(ParameterError):
        beam_search(log_probs, beam_width=0, charset=AB)
    with pytest.raises(ParameterError):
        beam_search(log_probs, alpha=-1.0, charset=AB)
    with pytest.raises(ParameterError):
        beam_search(log_probs[:, :2], charset=AB)
    with pytest.raises(ParameterError):
        greedy_decode(log_probs[0], AB)
    with pytest.raises(ParameterError):
        score_hypothesis(log_probs, "a")
