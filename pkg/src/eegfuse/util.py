# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import csv
import functools
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
import torch


def derive_seed(seed: int, *counter: int) -> int:
    """
    Derive an independent 63-bit seed from a master seed and a counter path.
    """
    sequence = np.random.SeedSequence([seed, *counter])
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def numpy_rng(seed: int, *counter: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *counter))


def torch_generator(seed: int, *counter: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(seed, *counter))
    return generator


def ceil_half(n: int) -> int:
    return math.ceil(n / 2)


@functools.lru_cache(maxsize=64)
def hamming(length: int) -> np.ndarray:
    window = np.hamming(length)
    window.setflags(write=False)
    return window


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])


def format_cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)
