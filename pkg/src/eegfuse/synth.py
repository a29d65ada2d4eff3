# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


"""
Deterministic synthetic corpus with synchronized audio, EEG and EMG.

Words are rendered as tone complexes from a handful of shared formant
classes, so several words sound alike and some are dropped, which keeps an
audio-only recognizer from reaching ceiling. The EEG carries the speech
log-energy envelope (with a random latency) and a slow sentence-specific
oscillation; both also modulate a high-frequency carrier so that every
analysis band sees them.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import zlib
from pathlib import Path

import numpy as np

from .corpus import (
    EEG_CHANNELS,
    EMG_CHANNELS,
    MANIFEST_COLUMNS,
    SENTENCES,
    write_signal_csv,
    write_wav,
)
from .errors import OutputError, ParameterError
from .preprocess import AUDIO_RATE_HZ, EEG_RATE_HZ
from .util import numpy_rng

logger = logging.getLogger(__name__)

SAMPLES_PER_EEG = int(AUDIO_RATE_HZ // EEG_RATE_HZ)
ENVELOPE_HOP = int(AUDIO_RATE_HZ // 100)

FORMANT_CLASSES = (
    (300.0, 870.0),
    (390.0, 1990.0),
    (530.0, 1840.0),
    (660.0, 1720.0),
    (730.0, 1090.0),
    (570.0, 840.0),
)


@dataclasses.dataclass(frozen=True)
class SynthConfig:
    word_s: tuple[float, float] = (0.22, 0.32)
    gap_s: float = 0.06
    pad_s: float = 0.25
    word_drop: float = 0.3
    tone_amplitude: float = 0.2
    audio_noise: float = 0.12
    envelope_gain: float = 1.0
    sentence_gain: float = 0.8
    carrier_hz: float = 32.0
    emg_leak: float = 0.3
    latency_ms: tuple[int, int] = (40, 140)


def word_class(word: str) -> int:
    return zlib.crc32(word.encode("utf-8")) % len(FORMANT_CLASSES)


def _word_tone(word: str, n: int, rng: np.random.Generator) -> np.ndarray:
    f1, f2 = FORMANT_CLASSES[word_class(word)]
    t = np.arange(n) / AUDIO_RATE_HZ
    pitch = 110.0 + 10.0 * rng.standard_normal()
    tone = (
        np.sin(2 * np.pi * f1 * t)
        + 0.6 * np.sin(2 * np.pi * f2 * t)
        + 0.3 * np.sin(2 * np.pi * pitch * t)
    )
    return tone * np.hanning(n)


def synth_audio(
    sentence: str, rng: np.random.Generator, cfg: SynthConfig = SynthConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Noisy audio and its clean version, both at 16 kHz and a multiple of 16 samples long."""
    pad = np.zeros(int(cfg.pad_s * AUDIO_RATE_HZ))
    gap = np.zeros(int(cfg.gap_s * AUDIO_RATE_HZ))
    pieces = [pad]
    for word in sentence.split():
        n = int(rng.uniform(*cfg.word_s) * AUDIO_RATE_HZ)
        if rng.random() < cfg.word_drop:
            pieces.append(np.zeros(n))
        else:
            pieces.append(cfg.tone_amplitude * _word_tone(word, n, rng))
        pieces.append(gap)
    pieces.append(pad)
    clean = np.concatenate(pieces)
    clean = clean[: len(clean) - len(clean) % SAMPLES_PER_EEG]
    noisy = clean + cfg.audio_noise * rng.standard_normal(len(clean))
    return noisy, clean


def log_energy_envelope(audio: np.ndarray) -> np.ndarray:
    """Standardized log-energy per 10 ms block, held at the EEG sample rate."""
    blocks = len(audio) // ENVELOPE_HOP
    energy = np.square(audio[: blocks * ENVELOPE_HOP]).reshape(blocks, -1).mean(axis=1)
    log_energy = np.log(energy + 1e-6)
    log_energy = (log_energy - log_energy.mean()) / (log_energy.std() + 1e-12)
    envelope = np.repeat(log_energy, ENVELOPE_HOP // SAMPLES_PER_EEG)
    n = len(audio) // SAMPLES_PER_EEG
    return np.pad(envelope, (0, n - len(envelope)), mode="edge")


def pink_noise(rng: np.random.Generator, channels: int, n: int) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal((channels, n)), axis=-1)
    freqs = np.fft.rfftfreq(n)
    freqs[0] = freqs[1]
    noise = np.fft.irfft(spectrum / np.sqrt(freqs), n=n, axis=-1)
    return noise / noise.std(axis=-1, keepdims=True)


def sentence_frequency(sentence_index: int) -> float:
    return 1.5 + (sentence_index % 8) * 1.2


def synth_biosignals(
    clean_audio: np.ndarray,
    sentence_index: int,
    rng: np.random.Generator,
    seed: int,
    cfg: SynthConfig = SynthConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """EEG (29 x n) and EMG (2 x n) at 1 kHz for one utterance."""
    envelope = log_energy_envelope(clean_audio)
    n = len(envelope)
    t = np.arange(n) / EEG_RATE_HZ

    latency = int(rng.integers(*cfg.latency_ms))
    delayed = np.concatenate([np.full(latency, envelope[0]), envelope])[:n]

    n_eeg = len(EEG_CHANNELS)
    gains = rng.uniform(0.5, 1.5, size=(n_eeg, 1))
    # the spatial pattern of a sentence is the same in every utterance of it
    pattern = numpy_rng(seed, 31, sentence_index).standard_normal((n_eeg, 1))
    phase = rng.uniform(0, 2 * np.pi)
    identity = np.sin(2 * np.pi * sentence_frequency(sentence_index) * t + phase)
    carrier = np.sin(2 * np.pi * cfg.carrier_hz * t + rng.uniform(0, 2 * np.pi, (n_eeg, 1)))

    eeg = pink_noise(rng, n_eeg, n)
    eeg += cfg.envelope_gain * gains * delayed
    eeg += cfg.sentence_gain * pattern * identity
    eeg += 0.5 * carrier * (gains * (1 + 0.5 * delayed) + pattern * (1 + identity))

    level = 0.2 + (envelope - envelope.min()) / (np.ptp(envelope) + 1e-12)
    emg = rng.standard_normal((len(EMG_CHANNELS), n)) * level
    eeg += cfg.emg_leak * rng.uniform(0, 1, (n_eeg, len(EMG_CHANNELS))) @ emg
    return eeg, emg


def _write_corpus(out_dir: Path, assignment: np.ndarray, seed: int, cfg: SynthConfig) -> Path:
    rows = []
    for i, sentence_index in enumerate(assignment):
        sentence_index = int(sentence_index)
        sentence = SENTENCES[sentence_index]
        utterance_id = f"utt{i:04d}"
        utt_rng = numpy_rng(seed, 32, i)
        audio, clean = synth_audio(sentence, utt_rng, cfg)
        eeg, emg = synth_biosignals(clean, sentence_index, utt_rng, seed, cfg)

        audio_path = Path("audio") / f"{utterance_id}.wav"
        eeg_path = Path("eeg") / f"{utterance_id}.csv"
        emg_path = Path("emg") / f"{utterance_id}.csv"
        write_wav(out_dir / audio_path, audio)
        write_signal_csv(out_dir / eeg_path, EEG_CHANNELS, eeg)
        write_signal_csv(out_dir / emg_path, EMG_CHANNELS, emg)
        rows.append(
            (
                utterance_id,
                audio_path.as_posix(),
                eeg_path.as_posix(),
                emg_path.as_posix(),
                sentence,
                f"S{i % 9 + 1}",
            )
        )

    manifest = out_dir / "manifest.csv"
    with manifest.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        writer.writerows(rows)
    return manifest


def generate_synthetic(
    out_dir: str | Path,
    n_utterances: int = 60,
    n_sentences: int = 5,
    seed: int = 42,
    cfg: SynthConfig = SynthConfig(),
) -> Path:
    """
    Write ``n_utterances`` recordings over the first ``n_sentences`` sentences
    plus ``manifest.csv`` under ``out_dir`` and return the manifest path.
    Every sentence is used at least once.
    """
    if not 1 <= n_sentences <= len(SENTENCES):
        raise ParameterError(f"n_sentences must be in [1, {len(SENTENCES)}], got {n_sentences}")
    if n_sentences > n_utterances:
        raise ParameterError("need at least one utterance per sentence")

    out_dir = Path(out_dir)
    rng = numpy_rng(seed, 30)
    assignment = rng.permutation(np.arange(n_utterances) % n_sentences)
    try:
        manifest = _write_corpus(out_dir, assignment, seed, cfg)
    except OSError as e:
        raise OutputError(f"cannot write synthetic corpus to {out_dir}: {e}") from e
    logger.info(
        "wrote %d synthetic utterances over %d sentences to %s",
        n_utterances, n_sentences, out_dir,
    )  # fmt: skip
    return manifest
