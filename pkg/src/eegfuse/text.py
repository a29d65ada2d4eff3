# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import re
import string
from collections.abc import Sequence

from .errors import ParameterError

BLANK = "<b>"
SPACE = " "

_STRIP = re.compile(r"[^a-z' ]+")
_SPACES = re.compile(r" +")


def normalize_transcript(text: str) -> str:
    """Lowercase, drop punctuation except apostrophes, collapse whitespace."""
    text = _STRIP.sub(" ", " ".join(text.lower().split()))
    return _SPACES.sub(" ", text).strip()


def words(text: str) -> list[str]:
    return text.split()


class Charset:
    """Ordered symbol list whose index 0 is the CTC blank."""

    blank = 0

    def __init__(self, symbols: Sequence[str]):
        symbols = tuple(symbols)
        if len(symbols) < 2 or symbols[0] != BLANK:
            raise ParameterError(f"a charset starts with {BLANK!r} and has a symbol")
        if len(set(symbols)) != len(symbols):
            raise ParameterError("charset symbols must be unique")
        self.symbols = symbols
        self.index = {s: i for i, s in enumerate(symbols)}

    def __len__(self) -> int:
        return len(self.symbols)

    def __eq__(self, other) -> bool:
        return isinstance(other, Charset) and self.symbols == other.symbols

    def __hash__(self) -> int:
        return hash(self.symbols)

    def __repr__(self) -> str:
        return f"Charset({''.join(self.symbols[1:])!r})"

    @property
    def space(self) -> int | None:
        return self.index.get(SPACE)

    def encode(self, text: str) -> list[int]:
        try:
            return [self.index[c] for c in text]
        except KeyError as e:
            raise ParameterError(f"symbol {e.args[0]!r} is not in the charset") from None

    def decode(self, indices: Sequence[int]) -> str:
        return "".join(self.symbols[i] for i in indices if i != self.blank)

    @classmethod
    def from_letters(cls, letters: str) -> Charset:
        return cls((BLANK, *letters))


DEFAULT_CHARSET = Charset.from_letters(SPACE + "'" + string.ascii_lowercase)
