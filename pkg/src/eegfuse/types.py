# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


import enum

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]


class BandMode(enum.Enum):
    LOW = "low"
    HIGH = "high"
    ALL = "all"

    @property
    def cutoffs(self) -> tuple[float, float]:
        return {
            BandMode.LOW: (0.1, 15.0),
            BandMode.HIGH: (15.0, 70.0),
            BandMode.ALL: (0.1, 70.0),
        }[self]


class Source(enum.Enum):
    EEG = "eeg"
    EMG = "emg"


class FeatureKind(enum.Enum):
    EEG_RAW = "eeg_raw"
    EMG_RAW = "emg_raw"
    KPCA = "kpca"
    MFCC = "mfcc"
    FUSED = "fused"
    ACOUSTIC_REP = "acoustic_rep"


class SensorSet(enum.Enum):
    ALL = "all"
    FRONTAL = "frontal"
    TEMPORAL = "temporal"
    FRONTAL_TEMPORAL = "frontal+temporal"


class Split(enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Mode(enum.Enum):
    ISOLATED = "isolated"
    CONTINUOUS = "continuous"


class DropoutMode(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"
