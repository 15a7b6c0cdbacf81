"""On-disk dataset format: trial directories, EEG matrices and the manifest.

A dataset directory holds one subdirectory per trial (``mixture.wav``,
``target.wav``, ``eeg.bin``, ``meta.json``) plus a ``manifest.json`` listing
trials, subjects, split membership and the ``excluded`` flag.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from ..errors import DataError
from .signals import EEGTrial, Trial, Waveform

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def write_waveform(path, wf: Waveform, dtype: str = "float32") -> None:
    if dtype == "float32":
        wavfile.write(path, int(round(wf.rate_hz)), wf.samples.astype(np.float32))
    elif dtype == "int16":
        peak = np.max(np.abs(wf.samples))
        scale = 32767.0 / peak if peak > 1.0 else 32767.0
        wavfile.write(path, int(round(wf.rate_hz)), (wf.samples * scale).astype(np.int16))
    else:
        raise DataError(f"unsupported wav dtype {dtype!r}")


def read_waveform(path) -> Waveform:
    try:
        rate, data = wavfile.read(path)
    except (ValueError, FileNotFoundError) as exc:
        raise DataError(f"cannot read waveform {path}: {exc}")
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    return Waveform(np.asarray(data, dtype=np.float64), float(rate))


def write_eeg_matrix(path, eeg: EEGTrial) -> None:
    """Binary EEG format: ASCII header ``channels,time,rate`` then <f4 data."""
    header = f"{eeg.n_channels},{eeg.n_samples},{eeg.rate_hz:g}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(eeg.data, dtype="<f4").tobytes())


def read_eeg_matrix(path, layout_id: str = "unnamed") -> EEGTrial:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split(",")
        if len(parts) != 3:
            raise DataError(f"{path}: malformed EEG header {header!r}")
        try:
            channels, time, rate = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise DataError(f"{path}: non-numeric EEG header {header!r}")
        raw = fh.read()
    expected = channels * time * 4
    if len(raw) != expected:
        raise DataError(
            f"{path}: expected {expected} payload bytes for {channels}x{time}, "
            f"got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(channels, time)
    return EEGTrial(data.astype(np.float64), rate, layout_id)


def save_trial(trial_dir, trial: Trial) -> Path:
    trial_dir = Path(trial_dir)
    trial_dir.mkdir(parents=True, exist_ok=True)
    write_waveform(trial_dir / "mixture.wav", trial.mixture)
    write_waveform(trial_dir / "target.wav", trial.target)
    write_eeg_matrix(trial_dir / "eeg.bin", trial.eeg)
    meta = dict(trial.meta)
    meta.setdefault("eeg_layout_id", trial.eeg.layout_id)
    (trial_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return trial_dir


def load_trial(trial_dir) -> Trial:
    trial_dir = Path(trial_dir)
    meta_path = trial_dir / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    eeg = read_eeg_matrix(trial_dir / "eeg.bin", meta.get("eeg_layout_id", "unnamed"))
    return Trial(
        mixture=read_waveform(trial_dir / "mixture.wav"),
        target=read_waveform(trial_dir / "target.wav"),
        eeg=eeg,
        meta=meta,
    )


def write_dataset(root, trials: list[Trial], extra: dict | None = None) -> Path:
    """Write trial directories plus the manifest; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, trial in enumerate(trials):
        trial_id = trial.meta.get("trial_id", f"trial_{i:03d}")
        subject = trial.meta.get("subject", "s00")
        rel = f"{subject}_{trial_id}"
        save_trial(root / rel, trial)
        entries.append(
            {
                "trial_id": trial_id,
                "subject": subject,
                "path": rel,
                "excluded": bool(trial.meta.get("excluded", False)),
            }
        )
    manifest = {
        "version": MANIFEST_VERSION,
        "trials": entries,
    }
    if extra:
        manifest.update(extra)
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_manifest(root) -> dict:
    root = Path(root)
    path = root if root.name == MANIFEST_NAME else root / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {path}: {exc}")
    if "trials" not in manifest:
        raise DataError(f"manifest {path} has no 'trials' entry")
    manifest["_root"] = str(path.parent)
    return manifest


def manifest_trials(manifest: dict, include_excluded: bool = False) -> list[dict]:
    trials = manifest["trials"]
    if include_excluded:
        return list(trials)
    return [t for t in trials if not t.get("excluded", False)]
