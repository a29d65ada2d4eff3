# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


import functools
import itertools
import math

import numpy as np

from eegfuse.corpus import EEG_CHANNELS, EMG_CHANNELS
from eegfuse.preprocess import RawRecording, apply_filter

TINY_OVERRIDES = {
    "regression.epochs": 2,
    "regression.batch_size": 4,
    "isolated.epochs": 2,
    "isolated.batch_size": 4,
    "isolated.hidden": 8,
    "ctc.epochs": 2,
    "ctc.batch_size": 4,
    "ctc.hidden": 8,
    "kpca.max_rows": 200,
    "decode.beam_width": 4,
    "eval.replicates": 200,
}


def tiny_cli_args():
    args = []
    for key, value in TINY_OVERRIDES.items():
        args += ["--set", f"{key}={value}"]
    return args


def random_recording(seed=0, seconds=1.0, transcript="the boy ran home", utterance_id="r0"):
    rng = np.random.default_rng(seed)
    n = int(seconds * 1000)
    return RawRecording(
        eeg=rng.standard_normal((len(EEG_CHANNELS), n)),
        emg=rng.standard_normal((len(EMG_CHANNELS), n)),
        audio=0.1 * rng.standard_normal(n * 16),
        transcript=transcript,
        utterance_id=utterance_id,
        eeg_channels=EEG_CHANNELS,
        emg_channels=EMG_CHANNELS,
    )


def impulse_response_gain_db(cascade, freqs_hz, n=2**16):
    """Gain of the filter at ``freqs_hz`` from the DFT of its impulse response."""
    impulse = np.zeros(n)
    impulse[0] = 1.0
    h = apply_filter(cascade, impulse)
    k = np.arange(n)
    gains = []
    for f in np.atleast_1d(freqs_hz):
        response = np.sum(h * np.exp(-2j * np.pi * f * k / cascade.sample_rate_hz))
        gains.append(20 * np.log10(max(abs(response), 1e-300)))
    return np.array(gains)


def collapse(path, blank=0):
    out = []
    previous = None
    for s in path:
        if s != previous and s != blank:
            out.append(s)
        previous = s
    return tuple(out)


def ctc_brute_force(log_probs, label, blank=0):
    """log P(label) summed over every length-T path."""
    T, V = log_probs.shape
    total = -math.inf
    for path in itertools.product(range(V), repeat=T):
        if collapse(path, blank) == tuple(label):
            total = np.logaddexp(total, sum(log_probs[t, s] for t, s in enumerate(path)))
    return total


def best_label_brute_force(log_probs, blank=0):
    """Label sequence with the largest total path probability."""
    T, V = log_probs.shape
    totals = {}
    for path in itertools.product(range(V), repeat=T):
        label = collapse(path, blank)
        score = sum(log_probs[t, s] for t, s in enumerate(path))
        totals[label] = np.logaddexp(totals.get(label, -math.inf), score)
    return min(totals, key=lambda label: (-totals[label], label))


def edit_distance(ref, hyp):
    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            d(i - 1, j) + 1,
            d(i, j - 1) + 1,
            d(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]),
        )

    return d(len(ref), len(hyp))


def mfcc_reference(audio, fs=16000):
    """Frame-by-frame MFCC with explicit loops."""
    from eegfuse.features import mel_filterbank

    emphasized = [audio[0]] + [audio[i] - 0.97 * audio[i - 1] for i in range(1, len(audio))]
    emphasized = np.array(emphasized)
    window, hop = 400, 160
    bank = mel_filterbank()
    rows = []
    for start in range(0, len(emphasized) - window + 1, hop):
        frame = emphasized[start : start + window] * np.hamming(window)
        spectrum = np.abs(np.fft.rfft(frame, 512)) ** 2 / 512
        energies = np.log(np.maximum(bank @ spectrum, 1e-10))
        n = len(energies)
        coeffs = []
        for k in range(13):
            scale = math.sqrt(1 / n) if k == 0 else math.sqrt(2 / n)
            coeffs.append(
                scale
                * sum(energies[m] * math.cos(math.pi * k * (2 * m + 1) / (2 * n)) for m in range(n))
            )
        rows.append(coeffs)
    return np.array(rows)
