# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


"""
Single-file checkpoint container::

    b"EEGF" | version: uint16 | header length: uint32 | JSON header
    | little-endian float64 array block | CRC32 of everything before it

The JSON header describes the architecture, configuration echo, seed and the
name, shape and offset of every array in the block.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import (
    CheckpointChecksumError,
    CheckpointError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .kpca import KpcaModel, Reducer, Standardizer
from .models import build_model

MAGIC = b"EEGF"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_TRAILER = struct.Struct("<I")
_KPCA_ARRAYS = ("train_matrix", "eigenvalues", "alphas", "row_means", "spectrum")


@dataclasses.dataclass(eq=False)
class Checkpoint:
    architecture: dict
    parameters: dict[str, np.ndarray]
    reducer: Reducer | None = None
    config: dict = dataclasses.field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_model(
        cls,
        model: nn.Module,
        reducer: Reducer | None = None,
        config: dict | None = None,
        seed: int = 0,
    ) -> Checkpoint:
        parameters = {
            name: tensor.detach().cpu().numpy().copy()
            for name, tensor in model.state_dict().items()
        }
        return cls(model.architecture(), parameters, reducer, dict(config or {}), seed)

    def build(self) -> nn.Module:
        model = build_model(self.architecture)
        state = {name: torch.from_numpy(array.copy()) for name, array in self.parameters.items()}
        model.load_state_dict(state)
        model.eval()
        return model


def _reducer_arrays(reducer: Reducer | None) -> tuple[dict, dict[str, np.ndarray]]:
    if reducer is None:
        return {}, {}
    arrays = {
        "standardizer.mean": reducer.standardizer.mean,
        "standardizer.std": reducer.standardizer.std,
    }
    meta: dict = {"kpca": None}
    if reducer.kpca is not None:
        kpca = reducer.kpca
        for name in _KPCA_ARRAYS:
            arrays[f"kpca.{name}"] = getattr(kpca, name)
        meta["kpca"] = {
            "gamma": kpca.gamma,
            "coef0": kpca.coef0,
            "degree": kpca.degree,
            "total_mean": kpca.total_mean,
            "n_components": kpca.n_components,
        }
    return meta, arrays


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> None:
    reducer_meta, reducer_arrays = _reducer_arrays(checkpoint.reducer)
    arrays = {f"param.{k}": v for k, v in checkpoint.parameters.items()}
    arrays.update(reducer_arrays)

    layout = []
    blocks = []
    offset = 0
    for name, array in arrays.items():
        data = np.ascontiguousarray(array, dtype="<f8").tobytes()
        layout.append({"name": name, "shape": list(np.shape(array)), "offset": offset})
        blocks.append(data)
        offset += len(data)

    header = json.dumps(
        {
            "architecture": checkpoint.architecture,
            "config": checkpoint.config,
            "seed": checkpoint.seed,
            "reducer": reducer_meta or None,
            "arrays": layout,
            "payload_bytes": offset,
        },
        sort_keys=True,
    ).encode("utf-8")

    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(blocks)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(body + _TRAILER.pack(zlib.crc32(body)))


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + _TRAILER.size:
        raise CheckpointTruncatedError(f"{path}: file too short for a checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not an eegfuse checkpoint")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    header_end = _PREFIX.size + header_len
    if len(raw) < header_end + _TRAILER.size:
        raise CheckpointTruncatedError(f"{path}: header cut short")

    body, trailer = raw[: -_TRAILER.size], raw[-_TRAILER.size :]
    try:
        header = json.loads(raw[_PREFIX.size : header_end].decode("utf-8"))
        payload_bytes = int(header["payload_bytes"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError):
        header = None
    if header is not None and len(body) < header_end + payload_bytes:
        raise CheckpointTruncatedError(f"{path}: array block cut short")
    if _TRAILER.unpack(trailer)[0] != zlib.crc32(body) or header is None:
        raise CheckpointChecksumError(f"{path}: checksum mismatch")
    if len(body) != header_end + payload_bytes:
        raise CheckpointChecksumError(f"{path}: unexpected trailing bytes")

    arrays = {}
    payload = memoryview(body)[header_end:]
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        array = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
        arrays[entry["name"]] = array.reshape(entry["shape"]).astype(np.float64)

    parameters = {
        name.removeprefix("param."): array
        for name, array in arrays.items()
        if name.startswith("param.")
    }
    return Checkpoint(
        architecture=header["architecture"],
        parameters=parameters,
        reducer=_rebuild_reducer(header["reducer"], arrays),
        config=header["config"],
        seed=header["seed"],
    )


def _rebuild_reducer(meta: dict | None, arrays: dict[str, np.ndarray]) -> Reducer | None:
    if meta is None:
        return None
    standardizer = Standardizer(arrays["standardizer.mean"], arrays["standardizer.std"])
    kpca = None
    if meta["kpca"] is not None:
        kpca = KpcaModel(
            **{name: arrays[f"kpca.{name}"] for name in _KPCA_ARRAYS},
            **meta["kpca"],
        )
    return Reducer(standardizer, kpca)
