# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import csv
import dataclasses
import logging
from collections.abc import Iterator, Sequence
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import (
    ChannelCountError,
    DuplicateIdError,
    ManifestError,
    MissingFileError,
    ParameterError,
    WavFormatError,
)
from .features import FeatureSequence, FrameSpec, channel_features, mfcc
from .kpca import KPCA_COMPONENTS
from .preprocess import AUDIO_RATE_HZ, EEG_RATE_HZ, RawRecording
from .text import normalize_transcript
from .types import BandMode, SensorSet, Source
from .util import ceil_half, numpy_rng

logger = logging.getLogger(__name__)

FRONTAL = ("Fp1", "Fz", "F3", "F7", "FT9", "FC5", "FT10", "FC6", "FC2", "F4", "F8", "Fp2")
TEMPORAL = ("T7", "TP9", "TP10", "T8")
EEG_CHANNELS = (
    *FRONTAL,
    *TEMPORAL,
    "FC1", "C3", "Cz", "C4", "CP5", "CP1", "CP2", "CP6", "P7", "P3", "Pz", "P4", "P8",
)  # fmt: skip
EMG_CHANNELS = ("EMG1", "EMG2")

SENSOR_SETS: dict[SensorSet, tuple[str, ...] | None] = {
    SensorSet.ALL: None,
    SensorSet.FRONTAL: FRONTAL,
    SensorSet.TEMPORAL: TEMPORAL,
    SensorSet.FRONTAL_TEMPORAL: FRONTAL + TEMPORAL,
}

MANIFEST_COLUMNS = ("id", "audio", "eeg", "emg", "transcript", "subject")
MIN_SPLIT_ENTRIES = 10

SENTENCES = (
    "the boy ran home",
    "she drinks warm tea",
    "open the front door",
    "my dog likes to swim",
    "we need more bread",
    "call me in the morning",
    "the sun is very bright",
    "please pass the salt",
    "he reads a good book",
    "turn off the light",
    "i want to go outside",
    "the car is in the garage",
    "close the window now",
    "my hands feel cold",
    "the phone is ringing",
    "she sings a sweet song",
    "it is time for lunch",
    "bring me some water",
    "the cat sleeps all day",
    "we walk to the park",
    "i like fresh apples",
    "the baby is laughing",
    "put the cup on the table",
    "he fixed the old chair",
    "the train leaves at noon",
    "my brother plays chess",
    "wash your hands first",
    "the room is too hot",
    "i lost my blue pen",
    "she bought new shoes",
    "the birds fly south",
    "we ate dinner late",
    "can you help me stand",
    "the music is too loud",
    "i feel much better today",
    "he painted the fence",
    "the milk smells sour",
    "let us watch a movie",
    "the road is wet",
    "my shoes are by the bed",
    "she wrote a long letter",
    "the clock stopped at ten",
    "i need my glasses",
    "the doctor is here",
    "we planted red roses",
    "the wind is strong",
    "he likes hot soup",
    "the door will not open",
    "please speak more slowly",
    "the kids play soccer",
    "i forgot my keys",
    "the store closes early",
    "she found a small coin",
    "the lamp is broken",
    "we sat by the fire",
    "my back hurts a lot",
    "thank you for coming",
)
assert len(SENTENCES) == 57 and len(set(SENTENCES)) == 57


def sentence_id(transcript: str) -> int:
    """Class index of a transcript in the closed sentence list."""
    try:
        return SENTENCES.index(normalize_transcript(transcript))
    except ValueError:
        raise ParameterError(f"not one of the known sentences: {transcript!r}") from None


@dataclasses.dataclass(frozen=True)
class ManifestEntry:
    id: str
    audio: Path
    eeg: Path
    emg: Path
    transcript: str
    subject: str


@dataclasses.dataclass(frozen=True)
class Manifest:
    path: Path
    entries: tuple[ManifestEntry, ...]
    eeg_channels: tuple[str, ...] = EEG_CHANNELS
    emg_channels: tuple[str, ...] = EMG_CHANNELS
    eeg_rate_hz: float = EEG_RATE_HZ
    audio_rate_hz: float = AUDIO_RATE_HZ

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def entry(self, utterance_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == utterance_id:
                return e
        raise KeyError(utterance_id)

    def subset(self, ids: Sequence[str]) -> Manifest:
        wanted = set(ids)
        return dataclasses.replace(
            self, entries=tuple(e for e in self.entries if e.id in wanted)
        )

    def check_closed_set(self) -> None:
        for e in self.entries:
            if normalize_transcript(e.transcript) not in SENTENCES:
                raise ManifestError("transcript is not one of the known sentences", e.id)

    def load(self, entry: ManifestEntry | str) -> RawRecording:
        if isinstance(entry, str):
            entry = self.entry(entry)
        eeg = read_channels(entry.eeg, self.eeg_channels, entry.id)
        emg = read_channels(entry.emg, self.emg_channels, entry.id)
        rate, audio = read_wav(entry.audio, entry.id)
        return RawRecording(
            eeg=eeg,
            emg=emg,
            audio=audio,
            transcript=normalize_transcript(entry.transcript),
            utterance_id=entry.id,
            eeg_channels=self.eeg_channels,
            emg_channels=self.emg_channels,
            eeg_rate_hz=self.eeg_rate_hz,
            audio_rate_hz=float(rate),
        )


def read_channels(
    path: str | Path, channels: Sequence[str], utterance_id: str | None = None
) -> np.ndarray:
    """Signal rows in the order of ``channels``, whatever the file's column order."""
    header, data = read_signal_csv(path)
    if sorted(header) != sorted(channels):
        raise ChannelCountError(f"{path}: channels {list(header)} do not match", utterance_id)
    return data[[header.index(c) for c in channels]]


def read_signal_csv(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    """A ``channels x samples`` matrix from a CSV with one row per sample."""
    path = Path(path)
    with path.open(encoding="utf-8") as f:
        header = tuple(next(csv.reader(f)))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    return header, np.ascontiguousarray(data.T)


def write_signal_csv(path: str | Path, channels: Sequence[str], data: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(
        path, np.asarray(data).T, fmt="%.17g", delimiter=",",
        header=",".join(channels), comments="",
    )  # fmt: skip


def read_wav(path: str | Path, utterance_id: str | None = None) -> tuple[int, np.ndarray]:
    """16-bit mono PCM as floats in [-1, 1)."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError) as e:
        raise WavFormatError(f"{path}: {e}", utterance_id) from e
    if data.dtype != np.int16 or data.ndim != 1:
        raise WavFormatError(f"{path}: expected 16-bit mono PCM", utterance_id)
    if rate != AUDIO_RATE_HZ:
        raise WavFormatError(f"{path}: sample rate {rate}, expected 16000", utterance_id)
    return rate, data.astype(np.float64) / 32768.0


def write_wav(path: str | Path, audio: np.ndarray, rate: int = int(AUDIO_RATE_HZ)) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(np.asarray(audio) * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, rate, pcm)


def _signal_shape(path: Path, utterance_id: str) -> tuple[tuple[str, ...], int]:
    with path.open(encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise ManifestError(f"{path}: empty signal file", utterance_id) from None
        rows = sum(1 for row in reader if row)
    return header, rows


def load_manifest(path: str | Path) -> Manifest:
    """
    Parse and validate a manifest CSV. Relative file paths resolve against the
    manifest's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"manifest not found: {path}")
    root = path.parent
    with path.open(encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise ManifestError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)

    entries = []
    seen: set[str] = set()
    for row in rows:
        utterance_id = row["id"]
        if utterance_id in seen:
            raise DuplicateIdError("duplicate utterance id", utterance_id)
        seen.add(utterance_id)
        entry = ManifestEntry(
            id=utterance_id,
            audio=root / row["audio"],
            eeg=root / row["eeg"],
            emg=root / row["emg"],
            transcript=row["transcript"],
            subject=row["subject"],
        )
        _validate_entry(entry)
        entries.append(entry)
    logger.info("loaded %d utterances from %s", len(entries), path)
    return Manifest(path, tuple(entries))


def _validate_entry(entry: ManifestEntry) -> None:
    for file in (entry.audio, entry.eeg, entry.emg):
        if not file.is_file():
            raise MissingFileError(f"missing file {file}", entry.id)
    read_wav(entry.audio, entry.id)

    eeg_header, eeg_rows = _signal_shape(entry.eeg, entry.id)
    emg_header, emg_rows = _signal_shape(entry.emg, entry.id)
    for file, header, expected in (
        (entry.eeg, eeg_header, EEG_CHANNELS),
        (entry.emg, emg_header, EMG_CHANNELS),
    ):
        if len(header) != len(expected):
            raise ChannelCountError(
                f"{file} has {len(header)} channels, expected {len(expected)}", entry.id
            )
        if set(header) != set(expected):
            raise ManifestError(f"{file}: unexpected channel names", entry.id)
    if eeg_rows != emg_rows:
        raise ManifestError(
            f"EEG has {eeg_rows} samples but EMG has {emg_rows}", entry.id
        )


@dataclasses.dataclass(frozen=True)
class SplitConfig:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fractions = (self.train, self.val, self.test)
        if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
            raise ParameterError(f"split fractions must be non-negative and sum to 1: {fractions}")


@dataclasses.dataclass(frozen=True)
class SplitIds:
    train: list[str]
    val: list[str]
    test: list[str]


def split(manifest: Manifest | Sequence[str], cfg: SplitConfig = SplitConfig()) -> SplitIds:
    """
    Seeded shuffle, then train takes ``floor(0.7 n)``, val ``floor(0.1 n)``
    and test the rest.
    """
    ids = manifest.ids if isinstance(manifest, Manifest) else list(manifest)
    if len(ids) < MIN_SPLIT_ENTRIES:
        raise ParameterError(
            f"need at least {MIN_SPLIT_ENTRIES} utterances to split, got {len(ids)}"
        )
    order = numpy_rng(cfg.seed, 20).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    # the epsilon keeps exact products such as 0.7 * 60 from flooring down
    n_train = int(np.floor(cfg.train * len(ids) + 1e-9))
    n_val = int(np.floor(cfg.val * len(ids) + 1e-9))
    return SplitIds(
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


@dataclasses.dataclass(frozen=True)
class AblationConfig:
    band: BandMode = BandMode.HIGH
    sensor_set: SensorSet = SensorSet.ALL
    rep_source: Source = Source.EEG
    half_length: bool = False
    kpca_components: int | None = None
    remove_artifacts: bool = True
    reduce: bool = True

    @property
    def components(self) -> int:
        if self.kpca_components is not None:
            return self.kpca_components
        if self.sensor_set is SensorSet.FRONTAL_TEMPORAL:
            return 2 * KPCA_COMPONENTS
        return KPCA_COMPONENTS

    @property
    def channels(self) -> tuple[str, ...] | None:
        if self.rep_source is Source.EMG:
            return None
        return SENSOR_SETS[self.sensor_set]


@dataclasses.dataclass(frozen=True, eq=False)
class AblatedFeatures:
    """Raw representation-model input and MFCCs over the same frames."""

    raw: FeatureSequence
    mfcc: FeatureSequence

    @property
    def frames(self) -> int:
        return self.raw.frames


def apply_ablation(
    recording: RawRecording, cfg: AblationConfig, spec: FrameSpec = FrameSpec()
) -> AblatedFeatures:
    raw = channel_features(
        recording,
        cfg.rep_source,
        cfg.band,
        cfg.channels,
        remove_artifacts=cfg.remove_artifacts,
        spec=spec,
    )
    audio = mfcc(recording.audio, recording.audio_rate_hz)
    frames = min(raw.frames, audio.frames)
    if cfg.half_length:
        frames = ceil_half(frames)
    return AblatedFeatures(raw.truncate(frames), audio.truncate(frames))
