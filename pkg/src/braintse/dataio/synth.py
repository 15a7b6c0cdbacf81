"""Synthetic paired audio/EEG generator with planted informative channels.

The generated EEG carries the target-speech envelope on the `informative`
channels only, which gives downstream selection tests a ground truth to
recover. Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from ..errors import DataError
from .signals import EEGTrial, Waveform, resample

SPEECH_BAND_HZ = (100.0, 3500.0)
ENVELOPE_CUTOFF_HZ = 8.0
MODULATION_CUTOFF_HZ = 3.0

# EEG mixing coefficients: informative channels carry the target envelope at
# unit gain, every channel leaks a little interferer envelope, and the
# additive noise floor keeps the envelope correlation around 0.8.
TARGET_GAIN = 1.0
INTERFERER_LEAK = 0.05
NOISE_STD = 0.7


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic paired trial."""

    n_channels: int
    informative: tuple[int, ...] = ()
    snr_db: float = 0.0
    duration_s: float = 4.0
    audio_rate_hz: float = 8000.0
    eeg_rate_hz: float = 128.0
    noise_corr: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "informative", tuple(int(c) for c in self.informative))
        if self.n_channels < 1:
            raise DataError("n_channels must be at least 1")
        if self.duration_s <= 0:
            raise DataError("duration_s must be positive")
        if not 0.0 <= self.noise_corr < 1.0:
            raise DataError("noise_corr must lie in [0, 1)")
        bad = [c for c in self.informative if not 0 <= c < self.n_channels]
        if bad:
            raise DataError(f"informative channels {bad} outside 0..{self.n_channels - 1}")


def envelope(x: Waveform, out_rate_hz: float) -> np.ndarray:
    """Rectified, low-passed amplitude envelope resampled to `out_rate_hz`."""
    sos = sps.butter(4, ENVELOPE_CUTOFF_HZ, btype="lowpass", fs=x.rate_hz, output="sos")
    env = sps.sosfiltfilt(sos, np.abs(x.samples))
    return resample(Waveform(env, x.rate_hz), out_rate_hz).samples


def _speech_like(rng: np.random.Generator, n: int, rate_hz: float) -> np.ndarray:
    hi = min(SPEECH_BAND_HZ[1], 0.45 * rate_hz)
    sos = sps.butter(4, [SPEECH_BAND_HZ[0], hi], btype="bandpass", fs=rate_hz, output="sos")
    carrier = sps.sosfiltfilt(sos, rng.standard_normal(n))
    slow = sps.butter(2, MODULATION_CUTOFF_HZ, btype="lowpass", fs=rate_hz, output="sos")
    modulation = sps.sosfiltfilt(slow, rng.standard_normal(n))
    modulation = np.abs(modulation) / (np.std(modulation) + 1e-12) + 0.1
    out = carrier * modulation
    return out / (np.sqrt(np.mean(out**2)) + 1e-12)


def _standardise(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / (x.std() + 1e-12)


def synth_trial(spec: SynthSpec, seed: int) -> tuple[Waveform, Waveform, EEGTrial]:
    """Generate (target, interferer, eeg) for one trial, deterministic per seed."""
    rng = np.random.default_rng(seed)
    n_audio = int(round(spec.duration_s * spec.audio_rate_hz))
    target = Waveform(_speech_like(rng, n_audio, spec.audio_rate_hz), spec.audio_rate_hz)
    interferer = Waveform(
        _speech_like(rng, n_audio, spec.audio_rate_hz), spec.audio_rate_hz
    )

    env_t = _standardise(envelope(target, spec.eeg_rate_hz))
    env_i = _standardise(envelope(interferer, spec.eeg_rate_hz))
    n_eeg = env_t.shape[0]

    shared = rng.standard_normal(n_eeg)
    informative = set(spec.informative)
    rows = []
    for c in range(spec.n_channels):
        own = rng.standard_normal(n_eeg)
        noise = (
            np.sqrt(1.0 - spec.noise_corr) * own + np.sqrt(spec.noise_corr) * shared
        )
        gain = TARGET_GAIN if c in informative else 0.0
        rows.append(gain * env_t + INTERFERER_LEAK * env_i + NOISE_STD * noise)
    eeg = EEGTrial(np.stack(rows, axis=0), spec.eeg_rate_hz, layout_id="synthetic")
    return target, interferer, eeg
