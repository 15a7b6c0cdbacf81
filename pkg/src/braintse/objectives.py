"""Scale-invariant SDR, the combined training loss and the metric registry.

SI-SDR here follows the projection form literally: the estimate is projected
onto the reference, the residual is their difference, and no mean is removed
from either signal (`center` stays False by default; many toolkits differ).
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DataError
from .selection import RegularizerConfig, cardinality_loss, discretization_loss
from .validation import as_float_array, check_same_length

EPSILON = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Component weights of the total loss; gamma controls selection sparsity."""

    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ConfigError("loss weights must be non-negative")


def si_sdr(estimate, reference, center: bool = False) -> float:
    """Scale-invariant signal-to-distortion ratio in dB.

    Raises on an identically-zero reference; an all-zero estimate returns
    the epsilon floor (-120 dB) instead of -inf.
    """
    est = as_float_array(estimate, "estimate", ndim=1)
    ref = as_float_array(reference, "reference", ndim=1)
    check_same_length(est, ref, "estimate and reference")
    if center:
        est = est - est.mean()
        ref = ref - ref.mean()
    ref_energy = float(ref @ ref)
    if ref_energy == 0.0:
        raise DataError("reference signal is identically zero")
    scale = float(est @ ref) / ref_energy
    x_target = scale * ref
    x_res = x_target - est
    ratio = float(x_target @ x_target) / (float(x_res @ x_res) + EPSILON)
    return float(10.0 * np.log10(max(ratio, EPSILON)))


def batch_si_sdr(estimate: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Differentiable SI-SDR per batch row; inputs are (B, T) tensors."""
    if estimate.shape != reference.shape:
        raise DataError(
            f"shape mismatch: estimate {tuple(estimate.shape)} vs "
            f"reference {tuple(reference.shape)}"
        )
    ref_energy = (reference * reference).sum(dim=-1, keepdim=True)
    scale = (estimate * reference).sum(dim=-1, keepdim=True) / ref_energy.clamp_min(
        EPSILON
    )
    x_target = scale * reference
    x_res = x_target - estimate
    ratio = (x_target * x_target).sum(dim=-1) / (
        (x_res * x_res).sum(dim=-1) + EPSILON
    )
    return 10.0 * torch.log10(ratio.clamp_min(EPSILON))


def total_loss(
    estimate: torch.Tensor,
    reference: torch.Tensor,
    sel_batch: torch.Tensor,
    weights: LossWeights,
    reg_cfg: RegularizerConfig,
    normalizer_n: int,
):
    """Combined objective: -alpha*SI-SDR + beta*L_d + gamma*L_reg.

    Returns the scalar loss and the detached component values for logging.
    """
    si = batch_si_sdr(estimate, reference).mean()
    l_d = discretization_loss(sel_batch, reg_cfg, normalizer_n)
    l_reg = cardinality_loss(sel_batch, reg_cfg)
    loss = -weights.alpha * si + weights.beta * l_d + weights.gamma * l_reg
    parts = {
        "si_sdr": float(si.detach()),
        "l_d": float(l_d.detach()),
        "l_reg": float(l_reg.detach()),
    }
    return loss, parts


class MetricRegistry:
    """Named evaluators mapping (estimate, reference) waveforms to scalars."""

    def __init__(self):
        self._evaluators = {}

    def register(self, name: str, fn) -> None:
        self._evaluators[name] = fn

    def register_external(self, name: str, command: str) -> None:
        """Register a tool invoked as `command` with {estimate} {reference}
        {rate} placeholders; it must print the score as its last stdout token.
        """
        self._evaluators[name] = _ExternalEvaluator(command)

    def names(self) -> list[str]:
        return sorted(self._evaluators)

    def __contains__(self, name: str) -> bool:
        return name in self._evaluators

    def __getitem__(self, name: str):
        return self._evaluators[name]


class _ExternalEvaluator:
    def __init__(self, command: str):
        if "{estimate}" not in command or "{reference}" not in command:
            raise ConfigError(
                "external evaluator command needs {estimate} and {reference} "
                "placeholders"
            )
        self.command = command

    def __call__(self, estimate, reference) -> float:
        from .dataio.storage import write_waveform

        with tempfile.TemporaryDirectory() as tmp:
            est_path = Path(tmp) / "estimate.wav"
            ref_path = Path(tmp) / "reference.wav"
            write_waveform(est_path, estimate)
            write_waveform(ref_path, reference)
            cmd = self.command.format(
                estimate=est_path, reference=ref_path, rate=int(estimate.rate_hz)
            )
            result = subprocess.run(
                shlex.split(cmd), capture_output=True, text=True, timeout=300
            )
        if result.returncode != 0:
            raise RuntimeError(
                f"external evaluator failed (exit {result.returncode}): "
                f"{result.stderr.strip()[:200]}"
            )
        tokens = result.stdout.split()
        if not tokens:
            raise RuntimeError("external evaluator produced no output")
        return float(tokens[-1])


def default_registry() -> MetricRegistry:
    registry = MetricRegistry()
    registry.register("si_sdr", lambda est, ref: si_sdr(est.samples, ref.samples))
    return registry


def evaluate_metrics(estimate, reference, registry: MetricRegistry | None = None) -> dict:
    """Run every registered evaluator; failures become per-metric error entries."""
    registry = registry if registry is not None else default_registry()
    results = {}
    for name in registry.names():
        try:
            results[name] = {"value": float(registry[name](estimate, reference))}
        except Exception as exc:
            results[name] = {"error": f"{type(exc).__name__}: {exc}"}
    return results
