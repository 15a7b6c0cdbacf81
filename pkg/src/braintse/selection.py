"""Soft EEG channel selection over the hard candidate set.

A small convolutional network maps each EEG example to a per-channel gate
vector in [0, 1]. Training pushes the gates binary (discreteness loss) and
sparse (cardinality loss); deployment extracts a static subset by averaging
gates over validation data and thresholding.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, DataError
from .geometry import CandidateSet
from .model.blocks import DepthConvBlock
from .validation import check_probability_vector


@dataclass(frozen=True)
class RegularizerConfig:
    """Scaling constants of the selection regularisers.

    The bias `b` = 0.25 places the minimum of the discreteness loss at 0
    for exactly binary gate vectors.
    """

    k1: float = 100.0
    k2: float = 0.25
    b: float = 0.25

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ConfigError("k1 and k2 must be positive")


@dataclass(frozen=True)
class SelectionVector:
    """Per-example soft gates, one value in [0, 1] per candidate channel."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", check_probability_vector(self.values))

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SelectedSubset:
    """The deployment subset extracted from averaged selection vectors."""

    indices: tuple[int, ...]
    threshold: float
    mean_values: tuple[float, ...] = ()
    candidate_indices: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if self.candidate_indices:
            if not set(self.indices) <= set(self.candidate_indices):
                raise DataError("selected subset must lie inside the candidate set")

    def __len__(self) -> int:
        return len(self.indices)


class ConvChannelSelector(nn.Module):
    """Depthwise-separable convolution stack -> pooled linear gate scores."""

    def __init__(
        self,
        in_channels: int,
        hidden: int | None = None,
        n_blocks: int = 2,
        kernel: int = 5,
        bias: bool = True,
    ):
        super().__init__()
        if in_channels < 1:
            raise ConfigError("selector needs at least one input channel")
        hidden = hidden or 2 * in_channels
        self.in_channels = in_channels
        self.init_config = {
            "in_channels": in_channels,
            "hidden": hidden,
            "n_blocks": n_blocks,
            "kernel": kernel,
            "bias": bias,
        }
        self.blocks = nn.ModuleList(
            DepthConvBlock(in_channels, hidden, kernel, 2**i, bias)
            for i in range(n_blocks)
        )
        self.head = nn.Linear(in_channels, in_channels)

    def forward(self, eeg: torch.Tensor) -> torch.Tensor:
        """(B, |S|, T_e) or (|S|, T_e) -> selection vector(s) in [0, 1]."""
        squeeze = eeg.dim() == 2
        if squeeze:
            eeg = eeg.unsqueeze(0)
        if eeg.shape[1] != self.in_channels:
            raise DataError(
                f"selector expects {self.in_channels} channels, got {eeg.shape[1]}"
            )
        x = eeg
        for block in self.blocks:
            x = block(x)
        pooled = x.mean(dim=-1)
        gates = torch.sigmoid(self.head(pooled))
        return gates.squeeze(0) if squeeze else gates


def build_selector(in_channels: int, seed: int = 0, **kwargs) -> ConvChannelSelector:
    torch.manual_seed(seed)
    return ConvChannelSelector(in_channels, **kwargs)


def apply_selection(eeg: torch.Tensor, sel: torch.Tensor) -> torch.Tensor:
    """Scale EEG row c by gate sel[c]; differentiable channel masking."""
    if eeg.dim() == 2 and sel.dim() == 1:
        if eeg.shape[0] != sel.shape[0]:
            raise DataError(
                f"gate length {sel.shape[0]} does not match {eeg.shape[0]} channels"
            )
        return eeg * sel[:, None]
    if eeg.dim() == 3 and sel.dim() in (1, 2):
        gates = sel if sel.dim() == 2 else sel.unsqueeze(0).expand(eeg.shape[0], -1)
        if gates.shape[1] != eeg.shape[1]:
            raise DataError(
                f"gate length {gates.shape[1]} does not match {eeg.shape[1]} channels"
            )
        return eeg * gates[:, :, None]
    raise DataError(f"unsupported shapes eeg={tuple(eeg.shape)}, sel={tuple(sel.shape)}")


def _as_matrix(sel_batch) -> torch.Tensor:
    t = torch.as_tensor(sel_batch)
    if t.dim() == 1:
        t = t.unsqueeze(0)
    if t.dim() != 2 or t.shape[0] < 1:
        raise DataError(f"selection batch must be (B, |S|), got {tuple(t.shape)}")
    return t


def discretization_loss(sel_batch, reg_cfg: RegularizerConfig, normalizer_n: int):
    """Penalty pulling gates toward {0, 1}: zero for binary, k1*b at 0.5."""
    sel = _as_matrix(sel_batch)
    if normalizer_n < 1:
        raise DataError("normalizer_n must be at least 1")
    batch = sel.shape[0]
    divergence = sel - 0.5
    return reg_cfg.k1 * (
        -(divergence * divergence).sum() / (normalizer_n * batch) + reg_cfg.b
    )


def cardinality_loss(sel_batch, reg_cfg: RegularizerConfig):
    """Squared-norm shrinkage on the gates, averaged over the batch."""
    sel = _as_matrix(sel_batch)
    return reg_cfg.k2 * (sel * sel).sum(dim=1).mean()


def mean_selection(
    selector: ConvChannelSelector, segments, device: str = "cpu"
) -> np.ndarray:
    """Average the selector output over a collection of segments."""
    if not segments:
        raise DataError("need at least one segment to average selection over")
    selector = selector.to(device)
    was_training = selector.training
    selector.eval()
    total = None
    with torch.no_grad():
        for seg in segments:
            eeg = torch.as_tensor(seg.eeg, dtype=torch.float32, device=device)
            gates = selector(eeg)
            total = gates if total is None else total + gates
    if was_training:
        selector.train()
    return (total / len(segments)).cpu().numpy().astype(np.float64)


def finalize_subset(
    selector: ConvChannelSelector,
    segments,
    threshold: float = 0.5,
    candidate: CandidateSet | None = None,
    device: str = "cpu",
) -> SelectedSubset:
    """Average gates over validation segments and threshold into a subset.

    Falls back to the single highest-mean channel (with a warning) when no
    channel clears the threshold. Positions are mapped through `candidate`
    to layout indices when it is provided.
    """
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    means = mean_selection(selector, segments, device=device)
    positions = [int(i) for i in np.flatnonzero(means >= threshold)]
    if not positions:
        best = int(np.argmax(means))
        warnings.warn(
            f"no channel reached threshold {threshold}; "
            f"falling back to best channel {best} (mean {means[best]:.3f})",
            stacklevel=2,
        )
        positions = [best]
    if candidate is not None:
        if len(means) != len(candidate):
            raise DataError(
                f"selector width {len(means)} does not match candidate set size "
                f"{len(candidate)}"
            )
        indices = tuple(candidate.indices[p] for p in positions)
        cand_indices = candidate.indices
    else:
        indices = tuple(positions)
        cand_indices = tuple(range(len(means)))
    return SelectedSubset(
        indices=indices,
        threshold=float(threshold),
        mean_values=tuple(float(v) for v in means),
        candidate_indices=cand_indices,
    )


def write_subset_report(
    path,
    subset: SelectedSubset,
    labels: list[str] | None = None,
    gamma: float | None = None,
) -> Path:
    """Structured-text report: candidate labels, mean gates, threshold, subset."""
    path = Path(path)
    channels = []
    for pos, (idx, mean) in enumerate(zip(subset.candidate_indices, subset.mean_values)):
        channels.append(
            {
                "index": int(idx),
                "label": labels[pos] if labels else str(idx),
                "mean_selection": round(float(mean), 6),
                "selected": int(idx) in set(subset.indices),
            }
        )
    report = {
        "threshold": subset.threshold,
        "gamma": gamma,
        "n_candidates": len(subset.candidate_indices),
        "n_selected": len(subset.indices),
        "selected_indices": list(subset.indices),
        "channels": channels,
    }
    path.write_text(json.dumps(report, indent=2))
    return path
