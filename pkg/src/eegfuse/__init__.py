# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


__version__ = "0.1.0"

from .config import RunConfig, load_config
from .corpus import AblationConfig, SplitConfig, apply_ablation, load_manifest, split
from .decode import beam_search_decode, greedy_decode, score_hypothesis
from .lm import NgramLm, train_lm
from .metrics import (
    bootstrap_ci,
    classification_metrics,
    confusion_matrix,
    significance_test,
    wer,
)
from .pipeline import Experiment
from .synth import generate_synthetic

__all__ = [
    "AblationConfig",
    "Experiment",
    "NgramLm",
    "RunConfig",
    "SplitConfig",
    "apply_ablation",
    "beam_search_decode",
    "bootstrap_ci",
    "classification_metrics",
    "confusion_matrix",
    "generate_synthetic",
    "greedy_decode",
    "load_config",
    "load_manifest",
    "score_hypothesis",
    "significance_test",
    "split",
    "train_lm",
    "wer",
]
