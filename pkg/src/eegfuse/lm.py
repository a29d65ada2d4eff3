# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import functools
import math
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence

from .errors import ParameterError
from .text import words

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
LM_ORDER = 4


class NgramLm:
    """
    Word n-gram model with interpolated Witten-Bell smoothing down to the
    unigram, itself interpolated with a uniform distribution over the
    vocabulary so that unseen words keep a positive floor.

    For a context ``h`` seen ``c(h)`` times with ``N1+(h)`` distinct
    continuations::

        P(w | h) = (c(h, w) + N1+(h) * P(w | h')) / (c(h) + N1+(h))

    where ``h'`` drops the oldest word. Unseen contexts fall through to ``h'``.
    """

    def __init__(self, order: int = LM_ORDER):
        if order < 1:
            raise ParameterError(f"n-gram order must be positive, got {order}")
        self.order = order
        # counts[context][word], contexts of length 0 .. order - 1
        self.counts: dict[tuple[str, ...], Counter[str]] = defaultdict(Counter)
        self.vocabulary: tuple[str, ...] = (EOS, UNK)
        self._probs: dict[tuple[str, tuple[str, ...]], float] = {}

    @classmethod
    def train(cls, transcripts: Iterable[str], order: int = LM_ORDER) -> NgramLm:
        lm = cls(order)
        seen: set[str] = set()
        sentences = 0
        for transcript in transcripts:
            tokens = words(transcript)
            sentences += 1
            seen.update(tokens)
            padded = [BOS] * (order - 1) + tokens + [EOS]
            for i in range(order - 1, len(padded)):
                word = padded[i]
                for n in range(order):
                    lm.counts[tuple(padded[i - n : i])][word] += 1
        if sentences == 0:
            raise ParameterError("cannot train a language model on an empty corpus")
        lm.counts = dict(lm.counts)
        lm.vocabulary = tuple(sorted(seen - {EOS, UNK, BOS})) + (EOS, UNK)
        return lm

    def __contains__(self, word: str) -> bool:
        return word in self._vocab_set

    @functools.cached_property
    def _vocab_set(self) -> frozenset[str]:
        return frozenset(self.vocabulary)

    def map_word(self, word: str) -> str:
        return word if word in self else UNK

    def context(self, history: Sequence[str]) -> tuple[str, ...]:
        """The last ``order - 1`` words of a sentence prefix, padded with ``<s>``."""
        padded = [BOS] * (self.order - 1) + [self.map_word(w) for w in history]
        return tuple(padded[len(padded) - (self.order - 1) :]) if self.order > 1 else ()

    def prob(self, word: str, context: tuple[str, ...] = ()) -> float:
        word = self.map_word(word)
        context = tuple(context)[-(self.order - 1) :] if self.order > 1 else ()
        key = (word, context)
        if key not in self._probs:
            self._probs[key] = self._interpolated(word, context)
        return self._probs[key]

    def _interpolated(self, word: str, context: tuple[str, ...]) -> float:
        if not context:
            lower = 1.0 / len(self.vocabulary)
        else:
            lower = self._interpolated(word, context[1:])
        counts = self.counts.get(context)
        if not counts:
            return lower
        total = sum(counts.values())
        types = len(counts)
        return (counts[word] + types * lower) / (total + types)

    def log_prob(self, word: str, context: tuple[str, ...] = ()) -> float:
        return math.log(self.prob(word, context))

    def sentence_log_prob(self, text: str, end: bool = True) -> float:
        tokens = words(text)
        total = 0.0
        for i, word in enumerate(tokens):
            total += self.log_prob(word, self.context(tokens[:i]))
        if end:
            total += self.log_prob(EOS, self.context(tokens))
        return total

    def perplexity(self, transcripts: Iterable[str]) -> float:
        log_prob = 0.0
        n = 0
        for text in transcripts:
            log_prob += self.sentence_log_prob(text)
            n += len(words(text)) + 1
        if n == 0:
            raise ParameterError("perplexity needs at least one sentence")
        return math.exp(-log_prob / n)


def train_lm(transcripts: Iterable[str], order: int = LM_ORDER) -> NgramLm:
    return NgramLm.train(transcripts, order)
