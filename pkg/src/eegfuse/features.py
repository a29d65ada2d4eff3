# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import dataclasses
import functools
from collections.abc import Sequence

import numpy as np
import scipy.fft
import scipy.stats

from .errors import ParameterError
from .preprocess import AUDIO_RATE_HZ, RawRecording, preprocess
from .types import BandMode, FeatureKind, FloatArray, Source
from .util import hamming

FRAME_RATE_HZ = 100.0
MFCC_DIM = 13
REP_DIM = 128
FUSED_DIM = MFCC_DIM + REP_DIM
FEATURES_PER_CHANNEL = 5

PRE_EMPHASIS = 0.97
MFCC_WINDOW_MS = 25.0
MFCC_HOP_MS = 10.0
MFCC_NFFT = 512
MEL_FILTERS = 26
LOG_FLOOR = 1e-10
DEGENERATE_VARIANCE = 1e-12


@dataclasses.dataclass(frozen=True)
class FrameSpec:
    window_ms: float = 100.0
    hop_ms: float = 10.0

    def __post_init__(self):
        if self.hop_ms <= 0 or self.window_ms < self.hop_ms:
            raise ParameterError(
                f"window ({self.window_ms} ms) must be at least hop ({self.hop_ms} ms) > 0"
            )

    def samples(self, fs_hz: float) -> tuple[int, int]:
        window = self.window_ms * fs_hz / 1000.0
        hop = self.hop_ms * fs_hz / 1000.0
        if not (window.is_integer() and hop.is_integer()):
            raise ParameterError(
                f"{self.window_ms}/{self.hop_ms} ms do not map to whole samples at {fs_hz} Hz"
            )
        return int(window), int(hop)


@dataclasses.dataclass(frozen=True, eq=False)
class FeatureSequence:
    data: FloatArray
    kind: FeatureKind
    frame_rate_hz: float = FRAME_RATE_HZ

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ParameterError("feature data must be a frames x dim matrix")
        if not np.all(np.isfinite(self.data)):
            raise ParameterError(f"{self.kind.value} features contain NaN or Inf")
        if self.kind is FeatureKind.MFCC and self.dim != MFCC_DIM:
            raise ParameterError(f"MFCC features must have dim {MFCC_DIM}")
        if self.kind is FeatureKind.FUSED and self.dim != FUSED_DIM:
            raise ParameterError(f"fused features must have dim {FUSED_DIM}")
        if self.kind is FeatureKind.ACOUSTIC_REP and self.dim != REP_DIM:
            raise ParameterError(f"acoustic representations must have dim {REP_DIM}")
        if self.kind in (FeatureKind.EEG_RAW, FeatureKind.EMG_RAW) and (
            self.dim % FEATURES_PER_CHANNEL
        ):
            raise ParameterError(
                f"raw channel features must have a multiple of {FEATURES_PER_CHANNEL} columns"
            )

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def truncate(self, frames: int) -> FeatureSequence:
        return dataclasses.replace(self, data=self.data[:frames])


def frame_signal(x: np.ndarray, fs_hz: float, spec: FrameSpec) -> np.ndarray:
    """
    Split ``x`` into overlapping frames, one per row. The trailing partial
    window is dropped.
    """
    x = np.asarray(x, dtype=np.float64)
    window, hop = spec.samples(fs_hz)
    if x.shape[-1] < window:
        raise ParameterError(
            f"signal of {x.shape[-1]} samples is shorter than one {window}-sample window"
        )
    return np.lib.stride_tricks.sliding_window_view(x, window, axis=-1)[..., ::hop, :]


def rms(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    return np.sqrt(np.mean(np.square(frame), axis=-1))


def zero_crossing_rate(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    # zero counts as positive
    positive = frame >= 0
    changes = np.count_nonzero(positive[..., 1:] != positive[..., :-1], axis=-1)
    return changes / (frame.shape[-1] - 1)


def moving_window_average(frame: np.ndarray) -> np.ndarray:
    return np.mean(np.asarray(frame, dtype=np.float64), axis=-1)


def kurtosis(frame: np.ndarray) -> np.ndarray:
    """Pearson kurtosis; 0 for frames with (near) zero variance."""
    frame = np.asarray(frame, dtype=np.float64)
    out = np.zeros(frame.shape[:-1])
    varied = np.var(frame, axis=-1) >= DEGENERATE_VARIANCE
    if np.any(varied):
        out[varied] = scipy.stats.kurtosis(frame[varied], axis=-1, fisher=False)
    return out


def power_spectral_entropy(frame: np.ndarray) -> np.ndarray:
    """
    Shannon entropy of the one-sided periodogram, normalized to [0, 1].
    """
    frame = np.asarray(frame, dtype=np.float64)
    power = np.abs(scipy.fft.rfft(frame, axis=-1)) ** 2
    total = power.sum(axis=-1, keepdims=True)
    silent = total[..., 0] <= 0
    power = np.where(total > 0, power, 1.0)
    entropy = scipy.stats.entropy(power, axis=-1) / np.log(power.shape[-1])
    return np.where(silent, 0.0, entropy)


FEATURE_FUNCTIONS = (
    rms,
    zero_crossing_rate,
    moving_window_average,
    kurtosis,
    power_spectral_entropy,
)


def frame_features(frames: np.ndarray) -> np.ndarray:
    """
    ``(..., n_frames, window)`` -> ``(..., n_frames, 5)`` in the fixed order
    rms, zcr, mwa, kurtosis, pse.
    """
    return np.stack([f(frames) for f in FEATURE_FUNCTIONS], axis=-1)


def resolve_channels(
    available: Sequence[str], channels: Sequence[str] | None
) -> list[int]:
    if channels is None:
        return list(range(len(available)))
    if not channels:
        raise ParameterError("channel subset must not be empty")
    index = {name: i for i, name in enumerate(available)}
    unknown = [name for name in channels if name not in index]
    if unknown:
        raise ParameterError(f"unknown channel(s): {', '.join(unknown)}")
    wanted = set(channels)
    return [i for i, name in enumerate(available) if name in wanted]


def channel_features(
    recording: RawRecording,
    source: Source = Source.EEG,
    band: BandMode = BandMode.ALL,
    channels: Sequence[str] | None = None,
    *,
    remove_artifacts: bool = True,
    spec: FrameSpec = FrameSpec(),
) -> FeatureSequence:
    """
    Five statistics per selected channel per frame. Channel blocks follow the
    manifest channel order whatever order ``channels`` lists them in.
    """
    if source is Source.EEG:
        names = recording.eeg_channels
    else:
        names = recording.emg_channels
    selected = resolve_channels(names, channels)

    cleaned = preprocess(recording, band, remove_artifacts)
    signals = cleaned.eeg if source is Source.EEG else cleaned.emg
    frames = frame_signal(signals[selected], recording.eeg_rate_hz, spec)
    # (channels, frames, 5) -> (frames, channels * 5)
    features = frame_features(frames).transpose(1, 0, 2)
    data = features.reshape(features.shape[0], -1)
    kind = FeatureKind.EEG_RAW if source is Source.EEG else FeatureKind.EMG_RAW
    return FeatureSequence(np.ascontiguousarray(data), kind)


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=8)
def mel_filterbank(
    n_filters: int = MEL_FILTERS,
    nfft: int = MFCC_NFFT,
    fs_hz: float = AUDIO_RATE_HZ,
    low_hz: float = 0.0,
    high_hz: float | None = None,
) -> np.ndarray:
    """
    Triangular filters on FFT bins, ``n_filters x (nfft // 2 + 1)``.
    """
    high_hz = fs_hz / 2 if high_hz is None else high_hz
    mel_points = np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_filters + 2)
    bins = np.floor((nfft + 1) * mel_to_hz(mel_points) / fs_hz).astype(int)

    bank = np.zeros((n_filters, nfft // 2 + 1))
    for j in range(n_filters):
        left, center, right = bins[j], bins[j + 1], bins[j + 2]
        for i in range(left, center):
            bank[j, i] = (i - left) / (center - left)
        for i in range(center, right):
            bank[j, i] = (right - i) / (right - center)
    bank.setflags(write=False)
    return bank


def mfcc(audio: np.ndarray, fs_hz: float = AUDIO_RATE_HZ) -> FeatureSequence:
    """
    13 cepstral coefficients per 10 ms: pre-emphasis, 25 ms Hamming window,
    512-point power spectrum, 26 mel filters, floored log, orthonormal DCT-II.
    """
    if fs_hz != AUDIO_RATE_HZ:
        raise ParameterError(f"MFCC extraction expects {AUDIO_RATE_HZ} Hz audio, got {fs_hz}")
    audio = np.asarray(audio, dtype=np.float64)
    emphasized = np.append(audio[:1], audio[1:] - PRE_EMPHASIS * audio[:-1])

    frames = frame_signal(emphasized, fs_hz, FrameSpec(MFCC_WINDOW_MS, MFCC_HOP_MS))
    frames = frames * hamming(frames.shape[-1])
    power = np.abs(scipy.fft.rfft(frames, MFCC_NFFT, axis=-1)) ** 2 / MFCC_NFFT
    energies = power @ mel_filterbank().T
    log_energies = np.log(np.maximum(energies, LOG_FLOOR))
    cepstra = scipy.fft.dct(log_energies, type=2, axis=-1, norm="ortho")[:, :MFCC_DIM]
    return FeatureSequence(np.ascontiguousarray(cepstra), FeatureKind.MFCC)
