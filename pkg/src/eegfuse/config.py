# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import dataclasses
import enum
import json
import types
import typing
from pathlib import Path
from typing import Any

from .corpus import AblationConfig, SplitConfig
from .errors import ConfigError, EegFuseError, OutputError
from .features import REP_DIM, FrameSpec
from .kpca import KPCA_COEF0, KPCA_DEGREE
from .lm import LM_ORDER
from .models import CTC_TRAINING, ISOLATED_TRAINING, REGRESSION_TRAINING, TrainConfig
from .types import Mode


@dataclasses.dataclass(frozen=True)
class PathsConfig:
    corpus: str = "corpus/manifest.csv"
    out_dir: str = "runs/default"


@dataclasses.dataclass(frozen=True)
class KpcaConfig:
    degree: int = KPCA_DEGREE
    coef0: float = KPCA_COEF0
    gamma: float | None = None
    max_rows: int | None = 1000


@dataclasses.dataclass(frozen=True)
class DecodeConfig:
    beam_width: int = 25
    alpha: float = 1.5
    beta: float = 1.0
    lm_order: int = LM_ORDER


@dataclasses.dataclass(frozen=True)
class EvalConfig:
    ci_level: float = 0.95
    replicates: int = 10_000


_SECTIONS = {
    "paths": PathsConfig,
    "split": SplitConfig,
    "ablation": AblationConfig,
    "frames": FrameSpec,
    "kpca": KpcaConfig,
    "regression": TrainConfig,
    "isolated": TrainConfig,
    "ctc": TrainConfig,
    "decode": DecodeConfig,
    "eval": EvalConfig,
}
_SCALARS = {"mode": Mode, "baseline_only": bool, "seed": int}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = PathsConfig()
    split: SplitConfig = SplitConfig()
    ablation: AblationConfig = AblationConfig()
    frames: FrameSpec = FrameSpec()
    kpca: KpcaConfig = KpcaConfig()
    regression: TrainConfig = REGRESSION_TRAINING
    isolated: TrainConfig = ISOLATED_TRAINING
    ctc: TrainConfig = CTC_TRAINING
    decode: DecodeConfig = DecodeConfig()
    eval: EvalConfig = EvalConfig()
    mode: Mode = Mode.ISOLATED
    baseline_only: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.regression.hidden != REP_DIM:
            raise ConfigError(f"regression.hidden must stay {REP_DIM}")

    def to_dict(self) -> dict[str, Any]:
        """Flat ``section.field`` form, as written to ``run.json``."""
        flat = {}
        for section in _SECTIONS:
            for field in dataclasses.fields(getattr(self, section)):
                flat[f"{section}.{field.name}"] = _plain(
                    getattr(getattr(self, section), field.name)
                )
        for key in _SCALARS:
            flat[key] = _plain(getattr(self, key))
        return dict(sorted(flat.items()))

    @classmethod
    def from_dict(cls, flat: dict[str, Any]) -> RunConfig:
        return cls().with_overrides(flat)

    def with_overrides(self, flat: dict[str, Any]) -> RunConfig:
        if not isinstance(flat, dict):
            raise ConfigError("configuration must be a JSON object")
        sections: dict[str, dict[str, Any]] = {}
        scalars: dict[str, Any] = {}
        for key, value in flat.items():
            if key in _SCALARS:
                scalars[key] = _coerce(key, value, _SCALARS[key])
                continue
            section, _, name = key.partition(".")
            if section not in _SECTIONS:
                raise ConfigError(f"unknown configuration key: {key}")
            hints = typing.get_type_hints(_SECTIONS[section])
            if name not in hints:
                raise ConfigError(f"unknown configuration key: {key}")
            sections.setdefault(section, {})[name] = _coerce(key, value, hints[name])

        try:
            replaced = {
                section: dataclasses.replace(getattr(self, section), **fields)
                for section, fields in sections.items()
            }
            return dataclasses.replace(self, **replaced, **scalars)
        except ConfigError:
            raise
        except (EegFuseError, ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e


def _plain(value):
    return value.value if isinstance(value, enum.Enum) else value


def _coerce(key: str, value, hint):
    if typing.get_origin(hint) in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        hint = args[0]
    if isinstance(hint, type) and issubclass(hint, enum.Enum):
        try:
            return hint(value)
        except ValueError:
            choices = ", ".join(m.value for m in hint)
            raise ConfigError(f"{key}: {value!r} is not one of {choices}") from None
    if hint is bool:
        if isinstance(value, bool):
            return value
    elif hint is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif hint is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif hint is str:
        if isinstance(value, str):
            return value
    raise ConfigError(f"{key}: expected {getattr(hint, '__name__', hint)}, got {value!r}")


def load_config(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    config = RunConfig()
    if path is not None:
        try:
            flat = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        config = config.with_overrides(flat)
    if overrides:
        config = config.with_overrides(overrides)
    return config


def write_run_json(path: str | Path, config: RunConfig) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror}") from e
