# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import dataclasses
import functools
import warnings

import numpy as np
import scipy.linalg
from scipy import signal as sps

from .errors import NumericError, ParameterError
from .types import BandMode, FloatArray

EEG_RATE_HZ = 1000.0
AUDIO_RATE_HZ = 16000.0
NOTCH_HZ = 60.0
NOTCH_Q = 30.0
BANDPASS_ORDER = 4
RIDGE_JITTER = 1e-9


@dataclasses.dataclass(frozen=True, eq=False)
class RawRecording:
    eeg: FloatArray
    emg: FloatArray
    audio: FloatArray
    transcript: str
    utterance_id: str
    eeg_channels: tuple[str, ...]
    emg_channels: tuple[str, ...]
    eeg_rate_hz: float = EEG_RATE_HZ
    audio_rate_hz: float = AUDIO_RATE_HZ

    def __post_init__(self):
        if self.eeg.ndim != 2 or self.emg.ndim != 2:
            raise ParameterError("eeg and emg must be channels x samples matrices")
        if self.eeg.shape[1] != self.emg.shape[1]:
            raise ParameterError(
                f"eeg has {self.eeg.shape[1]} samples but emg has {self.emg.shape[1]}"
            )
        if self.eeg.shape[0] != len(self.eeg_channels):
            raise ParameterError(
                f"eeg has {self.eeg.shape[0]} channels, "
                f"{len(self.eeg_channels)} declared"
            )
        if self.emg.shape[0] != len(self.emg_channels):
            raise ParameterError(
                f"emg has {self.emg.shape[0]} channels, "
                f"{len(self.emg_channels)} declared"
            )
        if self.eeg_rate_hz <= 0 or self.audio_rate_hz <= 0:
            raise ParameterError("sample rates must be strictly positive")


@dataclasses.dataclass(frozen=True, eq=False)
class BiquadCascade:
    """
    Second-order sections in scipy's ``sos`` layout: one row
    ``(b0, b1, b2, 1, a1, a2)`` per stage, applied top to bottom.
    """

    stages: FloatArray
    sample_rate_hz: float

    def __post_init__(self):
        if self.stages.ndim != 2 or self.stages.shape[1] != 6:
            raise ParameterError("stages must be an n x 6 array of sections")

    def __len__(self) -> int:
        return self.stages.shape[0]

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots([1.0, s[4], s[5]]) for s in self.stages])

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def frequency_response(self, freqs_hz) -> np.ndarray:
        _, h = sps.sosfreqz(
            self.stages, worN=np.atleast_1d(freqs_hz), fs=self.sample_rate_hz
        )
        return h


@dataclasses.dataclass(frozen=True, eq=False)
class PreprocessedRecording:
    eeg: FloatArray
    emg: FloatArray
    band: BandMode
    artifacts_removed: bool


def _check_nyquist(freq_hz: float, fs_hz: float, name: str) -> None:
    if not 0 < freq_hz < fs_hz / 2:
        raise ParameterError(
            f"{name} {freq_hz} Hz must lie strictly between 0 and Nyquist ({fs_hz / 2} Hz)"
        )


def design_bandpass(
    low_hz: float, high_hz: float, order: int = BANDPASS_ORDER, fs_hz: float = EEG_RATE_HZ
) -> BiquadCascade:
    _check_nyquist(low_hz, fs_hz, "low cutoff")
    _check_nyquist(high_hz, fs_hz, "high cutoff")
    if low_hz >= high_hz:
        raise ParameterError(f"low cutoff {low_hz} must be below high cutoff {high_hz}")
    if order < 2 or order % 2:
        raise ParameterError(f"order must be even and at least 2, got {order}")

    sos = sps.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs_hz, output="sos")
    cascade = BiquadCascade(np.asarray(sos, dtype=np.float64), float(fs_hz))
    assert cascade.is_stable()
    return cascade


def design_notch(
    center_hz: float = NOTCH_HZ, q: float = NOTCH_Q, fs_hz: float = EEG_RATE_HZ
) -> BiquadCascade:
    _check_nyquist(center_hz, fs_hz, "notch frequency")
    if q <= 0:
        raise ParameterError(f"notch quality factor must be positive, got {q}")

    b, a = sps.iirnotch(center_hz, q, fs=fs_hz)
    cascade = BiquadCascade(sps.tf2sos(b, a), float(fs_hz))
    assert cascade.is_stable()
    return cascade


def apply_filter(
    cascade: BiquadCascade, signal: np.ndarray, fs_hz: float | None = None
) -> np.ndarray:
    """
    Causal single-pass filtering along the last axis with zero initial state.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size == 0 or signal.shape[-1] == 0:
        raise ParameterError("cannot filter an empty signal")
    if fs_hz is not None and fs_hz != cascade.sample_rate_hz:
        raise ParameterError(
            f"filter designed for {cascade.sample_rate_hz} Hz, signal is {fs_hz} Hz"
        )
    return sps.sosfilt(cascade.stages, signal, axis=-1)


def remove_emg(eeg: np.ndarray, emg: np.ndarray) -> np.ndarray:
    """
    Subtract from every EEG channel its least-squares fit on all EMG channels.
    """
    eeg = np.asarray(eeg, dtype=np.float64)
    emg = np.asarray(emg, dtype=np.float64)
    if eeg.ndim != 2 or emg.ndim != 2:
        raise ParameterError("eeg and emg must be channels x samples matrices")
    if emg.shape[0] < 1:
        raise ParameterError("at least one EMG channel is required")
    if eeg.shape[1] != emg.shape[1]:
        raise ParameterError(
            f"eeg has {eeg.shape[1]} samples but emg has {emg.shape[1]}"
        )

    gram = emg @ emg.T + RIDGE_JITTER * np.eye(emg.shape[0])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            alpha = scipy.linalg.solve(gram, emg @ eeg.T, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as e:
        raise NumericError(f"EMG Gram matrix is rank deficient: {e}") from e
    return eeg - alpha.T @ emg


@functools.lru_cache(maxsize=16)
def band_filters(band: BandMode, fs_hz: float = EEG_RATE_HZ) -> tuple[BiquadCascade, ...]:
    low, high = band.cutoffs
    return design_bandpass(low, high, BANDPASS_ORDER, fs_hz), design_notch(fs_hz=fs_hz)


def preprocess(
    recording: RawRecording,
    band: BandMode = BandMode.ALL,
    remove_artifacts: bool = True,
) -> PreprocessedRecording:
    """
    Bandpass, then notch, both EEG and EMG, then regress EMG out of EEG.
    """
    eeg, emg = recording.eeg, recording.emg
    for cascade in band_filters(band, recording.eeg_rate_hz):
        eeg = apply_filter(cascade, eeg, recording.eeg_rate_hz)
        emg = apply_filter(cascade, emg, recording.eeg_rate_hz)
    if remove_artifacts:
        eeg = remove_emg(eeg, emg)
    return PreprocessedRecording(eeg, emg, band, remove_artifacts)
