"""Training loop, dataset splits, LR schedule, sweep driver and grad checks."""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .dataio.signals import Segment
from .errors import ConfigError, DataError, NumericalError
from .geometry import CandidateSet
from .model.config import ModelConfig
from .model.network import ExtractionNetwork, build_network
from .objectives import LossWeights, batch_si_sdr, total_loss
from .selection import (
    ConvChannelSelector,
    RegularizerConfig,
    apply_selection,
    build_selector,
    finalize_subset,
)

CHECKPOINT_FORMAT = "braintse-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings; defaults follow the full-scale recipe."""

    max_lr: float = 1e-4
    warmup_ratio: float = 0.05
    epochs: int = 200
    batch_size: int = 8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    reg_cfg: RegularizerConfig = field(default_factory=RegularizerConfig)
    grad_clip: float | None = None
    fine_tune_subset: bool = False
    fine_tune_epochs: int = 5

    def __post_init__(self):
        if not 0.0 < self.warmup_ratio < 1.0:
            raise ConfigError("warmup_ratio must lie in (0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.max_lr <= 0:
            raise ConfigError("max_lr must be positive")


@dataclass(frozen=True)
class SplitSpec:
    """Per-subject trial split sizes."""

    n_test_trials: int = 5
    n_val_trials: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_test_trials < 0 or self.n_val_trials < 0:
            raise ConfigError("split sizes must be non-negative")


def split_dataset(manifest: dict, spec: SplitSpec):
    """Per-subject random split into disjoint (train, val, test) trial lists.

    Excluded trials never enter any split; the draw is without replacement
    and deterministic for a given seed.
    """
    trials = [t for t in manifest["trials"] if not t.get("excluded", False)]
    by_subject: dict[str, list[dict]] = {}
    for t in trials:
        by_subject.setdefault(t["subject"], []).append(t)
    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    held_out = spec.n_test_trials + spec.n_val_trials
    for subject in sorted(by_subject):
        subject_trials = sorted(by_subject[subject], key=lambda t: t["trial_id"])
        if len(subject_trials) <= held_out:
            raise DataError(
                f"subject {subject} has {len(subject_trials)} trials; needs more "
                f"than {held_out} for a ({spec.n_test_trials} test, "
                f"{spec.n_val_trials} val) split"
            )
        order = rng.permutation(len(subject_trials))
        test += [subject_trials[i] for i in order[: spec.n_test_trials]]
        val += [
            subject_trials[i]
            for i in order[spec.n_test_trials : held_out]
        ]
        train += [subject_trials[i] for i in order[held_out:]]
    return train, val, test


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warm-up to max_lr, then cosine decay to 0 at the final step."""
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return 0.0
    warmup = cfg.warmup_ratio * total_steps
    if step < warmup:
        return cfg.max_lr * step / warmup
    span = total_steps - warmup
    if span <= 0:
        return cfg.max_lr
    progress = (step - warmup) / span
    return cfg.max_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def collate_segments(segments: list[Segment], device: str = "cpu"):
    """Stack segments into (mixture, target, eeg) float32 batch tensors."""
    if not segments:
        raise DataError("cannot collate an empty batch")
    n_audio = len(segments[0].mixture)
    n_ch, n_eeg = segments[0].eeg.shape
    for seg in segments:
        if len(seg.mixture) != n_audio or seg.eeg.shape != (n_ch, n_eeg):
            raise DataError("segments in a batch must share audio and EEG shapes")
    mixture = torch.tensor(
        np.stack([s.mixture.samples for s in segments]), dtype=torch.float32
    )
    target = torch.tensor(
        np.stack([s.target.samples for s in segments]), dtype=torch.float32
    )
    eeg = torch.tensor(np.stack([s.eeg for s in segments]), dtype=torch.float32)
    return mixture.to(device), target.to(device), eeg.to(device)


@dataclass
class DataBundle:
    """Segment lists for the three splits."""

    train: list[Segment]
    val: list[Segment] = field(default_factory=list)
    test: list[Segment] = field(default_factory=list)


@dataclass
class TrainResult:
    log: list[dict]
    best_val_si_sdr: float
    steps: int
    checkpoint_path: Path | None
    model: ExtractionNetwork
    selector: ConvChannelSelector


def _forward_batch(model, selector, batch, hard_gates: torch.Tensor | None = None):
    mixture, target, eeg = batch
    gates = selector(eeg)
    if hard_gates is not None:
        gates = hard_gates.unsqueeze(0).expand_as(gates)
    masked = apply_selection(eeg, gates)
    estimate = model(mixture, masked)
    return estimate, target, gates


def evaluate_si_sdr(
    model,
    selector,
    segments: list[Segment],
    batch_size: int = 8,
    device: str = "cpu",
    hard_gates: torch.Tensor | None = None,
) -> float:
    """Mean SI-SDR of the model output over a segment list."""
    if not segments:
        raise DataError("no segments to evaluate")
    model.eval()
    selector.eval()
    scores = []
    with torch.no_grad():
        for start in range(0, len(segments), batch_size):
            batch = collate_segments(segments[start : start + batch_size], device)
            estimate, target, _ = _forward_batch(model, selector, batch, hard_gates)
            scores.append(batch_si_sdr(estimate, target))
    return float(torch.cat(scores).mean())


def save_checkpoint(
    path,
    model: ExtractionNetwork,
    selector: ConvChannelSelector,
    train_cfg: TrainConfig | None = None,
    extra: dict | None = None,
) -> Path:
    """Single binary archive: parameter tensors plus configs as JSON text."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": json.dumps(model.cfg.to_dict()),
        "selector_config": json.dumps(selector.init_config),
        "model_state": model.state_dict(),
        "selector_state": selector.state_dict(),
    }
    if train_cfg is not None:
        payload["train_config"] = json.dumps(train_config_to_dict(train_cfg))
    if extra:
        payload["extra"] = json.dumps(extra)
    torch.save(payload, path)
    return path


def load_checkpoint(path, device: str = "cpu"):
    """Rebuild (model, selector, metadata) from a checkpoint archive."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location=device, weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not a recognised checkpoint archive")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {payload.get('version')!r}")
    model_cfg = ModelConfig.from_dict(json.loads(payload["model_config"]))
    model = ExtractionNetwork(model_cfg)
    model.load_state_dict(payload["model_state"])
    selector_cfg = json.loads(payload["selector_config"])
    selector = ConvChannelSelector(**selector_cfg)
    selector.load_state_dict(payload["selector_state"])
    meta = {}
    if "extra" in payload:
        meta = json.loads(payload["extra"])
    if "train_config" in payload:
        meta["train_config"] = json.loads(payload["train_config"])
    model.to(device)
    selector.to(device)
    return model, selector, meta


def train_config_to_dict(cfg: TrainConfig) -> dict:
    data = {
        k: getattr(cfg, k)
        for k in (
            "max_lr",
            "warmup_ratio",
            "epochs",
            "batch_size",
            "adam_beta1",
            "adam_beta2",
            "seed",
            "grad_clip",
            "fine_tune_subset",
            "fine_tune_epochs",
        )
    }
    data["weights"] = {
        "alpha": cfg.weights.alpha,
        "beta": cfg.weights.beta,
        "gamma": cfg.weights.gamma,
    }
    data["reg_cfg"] = {"k1": cfg.reg_cfg.k1, "k2": cfg.reg_cfg.k2, "b": cfg.reg_cfg.b}
    return data


def train_config_from_dict(data: dict) -> TrainConfig:
    data = dict(data)
    weights = LossWeights(**data.pop("weights", {}))
    reg_cfg = RegularizerConfig(**data.pop("reg_cfg", {}))
    return TrainConfig(weights=weights, reg_cfg=reg_cfg, **data)


def train(
    model: ExtractionNetwork,
    selector: ConvChannelSelector,
    data: DataBundle,
    cfg: TrainConfig,
    out_dir=None,
    device: str = "cpu",
    log_every: int = 1,
) -> TrainResult:
    """Joint optimisation of the extraction network and the channel selector.

    Adam with the configured momenta, per-step learning rate from `lr_at`,
    per-epoch validation SI-SDR, best-validation checkpointing. A non-finite
    loss aborts immediately with a diagnostic dump of the offending batch.
    """
    if not data.train:
        raise DataError("training requires at least one segment")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    model.to(device).train()
    selector.to(device).train()

    params = list(model.parameters()) + list(selector.parameters())
    optimizer = torch.optim.Adam(
        params, lr=cfg.max_lr, betas=(cfg.adam_beta1, cfg.adam_beta2)
    )
    n_train = len(data.train)
    steps_per_epoch = math.ceil(n_train / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    selector_width = data.train[0].eeg.shape[0]

    rng = np.random.default_rng(cfg.seed)
    log: list[dict] = []
    log_path = out_dir / "train_log.jsonl" if out_dir is not None else None
    log_fh = open(log_path, "w") if log_path is not None else None

    def emit(record: dict):
        log.append(record)
        if log_fh is not None:
            log_fh.write(json.dumps(record) + "\n")
            log_fh.flush()

    best_val = -math.inf
    best_states = (
        copy.deepcopy(model.state_dict()),
        copy.deepcopy(selector.state_dict()),
    )
    step = 0
    try:
        for epoch in range(cfg.epochs):
            model.train()
            selector.train()
            order = rng.permutation(n_train)
            for start in range(0, n_train, cfg.batch_size):
                batch_segments = [data.train[i] for i in order[start : start + cfg.batch_size]]
                batch = collate_segments(batch_segments, device)
                lr = lr_at(step, total_steps, cfg)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                optimizer.zero_grad()
                estimate, target, gates = _forward_batch(model, selector, batch)
                loss, parts = total_loss(
                    estimate, target, gates, cfg.weights, cfg.reg_cfg, selector_width
                )
                if not torch.isfinite(loss):
                    _dump_bad_batch(out_dir, batch, step, parts)
                    msg = f"non-finite loss at step {step} (components {parts})"
                    if out_dir is not None:
                        msg += "; offending batch dumped to nan_batch.pt"
                    raise NumericalError(msg)
                loss.backward()
                if cfg.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
                optimizer.step()
                if step % log_every == 0:
                    emit(
                        {
                            "step": step,
                            "epoch": epoch,
                            "lr": lr,
                            "loss": float(loss.detach()),
                            **parts,
                        }
                    )
                step += 1
            if data.val:
                val_si = evaluate_si_sdr(
                    model, selector, data.val, cfg.batch_size, device
                )
                emit({"step": step, "epoch": epoch, "val_si_sdr": val_si})
                if val_si > best_val:
                    best_val = val_si
                    best_states = (
                        copy.deepcopy(model.state_dict()),
                        copy.deepcopy(selector.state_dict()),
                    )
            else:
                best_states = (
                    copy.deepcopy(model.state_dict()),
                    copy.deepcopy(selector.state_dict()),
                )
    finally:
        if log_fh is not None:
            log_fh.close()

    model.load_state_dict(best_states[0])
    selector.load_state_dict(best_states[1])
    checkpoint_path = None
    if out_dir is not None:
        checkpoint_path = save_checkpoint(
            out_dir / "checkpoint.pt",
            model,
            selector,
            cfg,
            extra={"best_val_si_sdr": best_val if data.val else None},
        )
    return TrainResult(
        log=log,
        best_val_si_sdr=best_val,
        steps=step,
        checkpoint_path=checkpoint_path,
        model=model,
        selector=selector,
    )


def _dump_bad_batch(out_dir, batch, step, parts):
    if out_dir is None:
        return
    mixture, target, eeg = batch
    torch.save(
        {
            "step": step,
            "components": parts,
            "mixture": mixture.detach().cpu(),
            "target": target.detach().cpu(),
            "eeg": eeg.detach().cpu(),
        },
        Path(out_dir) / "nan_batch.pt",
    )


def gamma_sweep(
    gammas,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    data: DataBundle,
    candidate: CandidateSet | None = None,
    threshold: float = 0.5,
    out_dir=None,
    device: str = "cpu",
    selector_kwargs: dict | None = None,
) -> list[dict]:
    """One independent training per gamma, then subset extraction and scoring.

    Every run restarts from the same seed; failures are isolated per row.
    Writes `sweep.csv` and a short human-readable summary when `out_dir`
    is given.
    """
    rows = []
    out_dir = Path(out_dir) if out_dir is not None else None
    for gamma in gammas:
        row = {
            "gamma": float(gamma),
            "n_selected": None,
            "si_sdr": None,
            "val_si_sdr": None,
            "subset": None,
            "error": None,
        }
        try:
            cfg = replace(train_cfg, weights=replace(train_cfg.weights, gamma=float(gamma)))
            model = build_network(model_cfg, seed=cfg.seed)
            selector = build_selector(
                model_cfg.eeg_in_channels, seed=cfg.seed, **(selector_kwargs or {})
            )
            run_dir = out_dir / f"gamma_{gamma:g}" if out_dir is not None else None
            result = train(model, selector, data, cfg, out_dir=run_dir, device=device)
            subset_source = data.val if data.val else data.train
            subset = finalize_subset(
                result.selector, subset_source, threshold, candidate, device
            )
            eval_segments = data.test if data.test else subset_source
            hard_gates = None
            if cfg.fine_tune_subset:
                hard_gates = _subset_gates(subset, device)
                fine_cfg = replace(cfg, epochs=cfg.fine_tune_epochs)
                _fine_tune_hard(result.model, result.selector, data, fine_cfg, hard_gates, device)
            score = evaluate_si_sdr(
                result.model,
                result.selector,
                eval_segments,
                cfg.batch_size,
                device,
                hard_gates=hard_gates,
            )
            row.update(
                {
                    "n_selected": len(subset),
                    "si_sdr": score,
                    "val_si_sdr": result.best_val_si_sdr if data.val else None,
                    "subset": list(subset.indices),
                    "mean_selection": list(subset.mean_values),
                }
            )
        except Exception as exc:  # isolate per-row failures
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_sweep_outputs(out_dir, rows)
    return rows


def _subset_gates(subset, device) -> torch.Tensor:
    width = len(subset.candidate_indices)
    gates = torch.zeros(width, device=device)
    index_by_channel = {idx: pos for pos, idx in enumerate(subset.candidate_indices)}
    for idx in subset.indices:
        gates[index_by_channel[idx]] = 1.0
    return gates


def _fine_tune_hard(model, selector, data, cfg, hard_gates, device):
    """Short adaptation pass with the thresholded binary gates frozen in."""
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.max_lr, betas=(cfg.adam_beta1, cfg.adam_beta2)
    )
    rng = np.random.default_rng(cfg.seed)
    model.train()
    n_train = len(data.train)
    for _ in range(cfg.epochs):
        order = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            batch = collate_segments(
                [data.train[i] for i in order[start : start + cfg.batch_size]], device
            )
            optimizer.zero_grad()
            estimate, target, gates = _forward_batch(model, selector, batch, hard_gates)
            loss = -batch_si_sdr(estimate, target).mean()
            if not torch.isfinite(loss):
                raise NumericalError("non-finite loss during subset fine-tune")
            loss.backward()
            optimizer.step()


def _write_sweep_outputs(out_dir: Path, rows: list[dict]):
    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "n_selected", "si_sdr", "val_si_sdr", "subset", "error"])
        for row in rows:
            subset = ";".join(str(i) for i in row["subset"]) if row["subset"] else ""
            writer.writerow(
                [
                    row["gamma"],
                    row["n_selected"] if row["n_selected"] is not None else "",
                    f"{row['si_sdr']:.4f}" if row["si_sdr"] is not None else "",
                    f"{row['val_si_sdr']:.4f}" if row["val_si_sdr"] is not None else "",
                    subset,
                    row["error"] or "",
                ]
            )
    lines = ["gamma sweep summary", "-------------------"]
    for row in rows:
        if row["error"]:
            lines.append(f"gamma={row['gamma']:g}: FAILED ({row['error']})")
        else:
            lines.append(
                f"gamma={row['gamma']:g}: {row['n_selected']} channels, "
                f"SI-SDR {row['si_sdr']:.2f} dB"
            )
    (out_dir / "sweep_summary.txt").write_text("\n".join(lines) + "\n")


@dataclass
class GradCheckReport:
    max_rel_err: float
    n_probes: int
    worst: tuple | None = None  # (target name, flat index, analytic, numeric)


def grad_check(
    fn,
    targets: dict[str, torch.Tensor],
    n_probes: int = 24,
    eps: float = 1e-6,
    seed: int = 0,
) -> GradCheckReport:
    """Central finite differences vs autograd on randomly probed coordinates.

    `fn` is a zero-argument closure returning a scalar tensor built from the
    (float64, requires_grad) tensors in `targets`.
    """
    names = list(targets)
    tensors = [targets[n] for n in names]
    for name, t in zip(names, tensors):
        if not t.dtype.is_floating_point:
            raise ConfigError(f"grad_check target {name!r} must be floating point")
        t.requires_grad_(True)
    out = fn()
    grads = torch.autograd.grad(out, tensors, allow_unused=False)
    rng = np.random.default_rng(seed)
    max_rel, worst = 0.0, None
    for _ in range(n_probes):
        which = int(rng.integers(len(tensors)))
        tensor, grad = tensors[which], grads[which]
        flat_index = int(rng.integers(tensor.numel()))
        with torch.no_grad():
            original = tensor.view(-1)[flat_index].item()
            tensor.view(-1)[flat_index] = original + eps
        f_plus = float(fn())
        with torch.no_grad():
            tensor.view(-1)[flat_index] = original - eps
        f_minus = float(fn())
        with torch.no_grad():
            tensor.view(-1)[flat_index] = original
        numeric = (f_plus - f_minus) / (2.0 * eps)
        analytic = float(grad.view(-1)[flat_index])
        rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-12)
        if rel > max_rel:
            max_rel = rel
            worst = (names[which], flat_index, analytic, numeric)
    return GradCheckReport(max_rel_err=max_rel, n_probes=n_probes, worst=worst)
