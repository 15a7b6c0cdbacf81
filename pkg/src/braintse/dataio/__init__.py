"""Audio/EEG data model, preprocessing, mixing, segmentation and storage."""

from .signals import (
    EEGTrial,
    Segment,
    Trial,
    Waveform,
    bandpass,
    mix_at_snr,
    resample,
    rereference_mastoid,
    segment_trial,
)
from .storage import (
    load_manifest,
    load_trial,
    manifest_trials,
    read_eeg_matrix,
    read_waveform,
    save_trial,
    write_dataset,
    write_eeg_matrix,
    write_waveform,
)
from .synth import SynthSpec, envelope, synth_trial

__all__ = [
    "Waveform",
    "EEGTrial",
    "Trial",
    "Segment",
    "bandpass",
    "rereference_mastoid",
    "resample",
    "mix_at_snr",
    "segment_trial",
    "SynthSpec",
    "synth_trial",
    "envelope",
    "save_trial",
    "load_trial",
    "write_dataset",
    "load_manifest",
    "manifest_trials",
    "read_waveform",
    "write_waveform",
    "read_eeg_matrix",
    "write_eeg_matrix",
]
