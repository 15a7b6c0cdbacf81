"""Core signal containers and the preprocessing operations.

Filtering is zero-phase (forward-backward) so that preprocessing adds no
group delay between the audio and EEG streams. Segmentation drops the
trailing remainder instead of padding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from ..errors import DataError
from ..validation import as_float_array, check_rate

FILTER_ORDER = 5


@dataclass(frozen=True)
class Waveform:
    """A single-channel signal with its sample rate."""

    samples: np.ndarray
    rate_hz: float

    def __post_init__(self):
        object.__setattr__(self, "samples", as_float_array(self.samples, "samples", ndim=1))
        object.__setattr__(self, "rate_hz", check_rate(self.rate_hz))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.rate_hz

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2)))


@dataclass(frozen=True)
class EEGTrial:
    """Multichannel EEG: a (channels x time) matrix at a fixed rate."""

    data: np.ndarray
    rate_hz: float
    layout_id: str = "unnamed"

    def __post_init__(self):
        object.__setattr__(self, "data", as_float_array(self.data, "eeg data", ndim=2))
        object.__setattr__(self, "rate_hz", check_rate(self.rate_hz))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass
class Trial:
    """A full paired recording: mixture + supervision target + EEG."""

    mixture: Waveform
    target: Waveform
    eeg: EEGTrial
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.mixture) != len(self.target):
            raise DataError("mixture and target must have equal length")
        if self.mixture.rate_hz != self.target.rate_hz:
            raise DataError("mixture and target must share a sample rate")


@dataclass
class Segment:
    """A training example cut from a trial; EEG rows are candidate channels."""

    mixture: Waveform
    target: Waveform
    eeg: np.ndarray  # (|S|, time)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.eeg = as_float_array(self.eeg, "segment eeg", ndim=2)
        if len(self.mixture) != len(self.target):
            raise DataError("segment mixture and target must have equal length")
        if self.mixture.rate_hz != self.target.rate_hz:
            raise DataError("segment mixture and target must share a sample rate")
        eeg_rate = self.meta.get("eeg_rate_hz")
        if eeg_rate:
            audio_dur = len(self.mixture) / self.mixture.rate_hz
            eeg_dur = self.eeg.shape[1] / eeg_rate
            if abs(audio_dur - eeg_dur) > 1.0 / eeg_rate:
                raise DataError(
                    f"EEG duration {eeg_dur:.4f}s deviates from audio duration "
                    f"{audio_dur:.4f}s by more than one EEG sample period"
                )


def _band_sos(lo_hz: float, hi_hz: float, rate_hz: float):
    if not (0.0 < lo_hz < hi_hz < rate_hz / 2.0):
        raise DataError(
            f"invalid band ({lo_hz}, {hi_hz}) for rate {rate_hz} Hz; "
            "need 0 < lo < hi < rate/2"
        )
    return sps.butter(
        FILTER_ORDER, [lo_hz, hi_hz], btype="bandpass", fs=rate_hz, output="sos"
    )


def bandpass(x: Waveform | EEGTrial, lo_hz: float, hi_hz: float):
    """Zero-phase band-pass filter; same type, length and rate as the input."""
    sos = _band_sos(lo_hz, hi_hz, x.rate_hz)
    if isinstance(x, Waveform):
        return Waveform(sps.sosfiltfilt(sos, x.samples), x.rate_hz)
    if isinstance(x, EEGTrial):
        return EEGTrial(sps.sosfiltfilt(sos, x.data, axis=1), x.rate_hz, x.layout_id)
    raise DataError(f"bandpass expects Waveform or EEGTrial, got {type(x).__name__}")


def rereference_mastoid(eeg: EEGTrial, mastoid_indices: tuple[int, int]) -> EEGTrial:
    """Subtract the per-sample mean of the two mastoid channels everywhere."""
    if mastoid_indices is None:
        raise DataError("layout does not define mastoid indices")
    m1, m2 = (int(i) for i in mastoid_indices)
    if not (0 <= m1 < eeg.n_channels and 0 <= m2 < eeg.n_channels):
        raise DataError(
            f"mastoid indices {mastoid_indices} out of range for "
            f"{eeg.n_channels}-channel EEG"
        )
    reference = 0.5 * (eeg.data[m1] + eeg.data[m2])
    return EEGTrial(eeg.data - reference[None, :], eeg.rate_hz, eeg.layout_id)


def _resample_1d(x: np.ndarray, in_rate: float, out_rate: float) -> np.ndarray:
    ratio = Fraction(out_rate).limit_denominator(10**6) / Fraction(
        in_rate
    ).limit_denominator(10**6)
    up, down = ratio.numerator, ratio.denominator
    out_len = int(np.floor(x.shape[-1] * out_rate / in_rate))
    if up == down:
        return x.copy()
    y = sps.resample_poly(x, up, down, axis=-1)
    return y[..., :out_len]


def resample(x: Waveform | EEGTrial, out_rate_hz: float):
    """Band-limited rate conversion; output length is floor(n * out/in)."""
    out_rate = check_rate(out_rate_hz, "out_rate_hz")
    if isinstance(x, Waveform):
        return Waveform(_resample_1d(x.samples, x.rate_hz, out_rate), out_rate)
    if isinstance(x, EEGTrial):
        return EEGTrial(_resample_1d(x.data, x.rate_hz, out_rate), out_rate, x.layout_id)
    raise DataError(f"resample expects Waveform or EEGTrial, got {type(x).__name__}")


def mix_at_snr(
    target: Waveform, interferer: Waveform, snr_db: float
) -> tuple[Waveform, Waveform]:
    """RMS-normalise both sources and mix at the requested SNR.

    Returns the mixture and the normalised target used for supervision.
    """
    if len(target) != len(interferer):
        raise DataError("target and interferer must have equal length")
    if target.rate_hz != interferer.rate_hz:
        raise DataError("target and interferer must share a sample rate")
    if not np.isfinite(snr_db):
        raise DataError("snr_db must be finite")
    rms_t, rms_i = target.rms(), interferer.rms()
    if rms_t == 0.0 or rms_i == 0.0:
        raise DataError("cannot mix a zero-energy signal")
    target_norm = target.samples / rms_t
    interferer_scaled = (interferer.samples / rms_i) * 10.0 ** (-snr_db / 20.0)
    mixture = target_norm + interferer_scaled
    return Waveform(mixture, target.rate_hz), Waveform(target_norm, target.rate_hz)


def segment_trial(trial: Trial, seg_len_s: float) -> list[Segment]:
    """Cut a trial into non-overlapping segments, dropping the remainder.

    Audio and EEG are cut at matching time boundaries; a trial shorter than
    one segment yields an empty list.
    """
    if seg_len_s <= 0:
        raise DataError(f"seg_len_s must be positive, got {seg_len_s}")
    n_audio = int(round(seg_len_s * trial.mixture.rate_hz))
    n_eeg = int(round(seg_len_s * trial.eeg.rate_hz))
    if n_audio == 0 or n_eeg == 0:
        raise DataError(f"segment length {seg_len_s}s is below one sample period")
    count = min(len(trial.mixture) // n_audio, trial.eeg.n_samples // n_eeg)
    segments = []
    for j in range(count):
        meta = dict(trial.meta)
        meta["segment_index"] = j
        meta["eeg_rate_hz"] = trial.eeg.rate_hz
        segments.append(
            Segment(
                mixture=Waveform(
                    trial.mixture.samples[j * n_audio : (j + 1) * n_audio],
                    trial.mixture.rate_hz,
                ),
                target=Waveform(
                    trial.target.samples[j * n_audio : (j + 1) * n_audio],
                    trial.target.rate_hz,
                ),
                eeg=trial.eeg.data[:, j * n_eeg : (j + 1) * n_eeg],
                meta=meta,
            )
        )
    return segments
