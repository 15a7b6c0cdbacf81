"""Separator building blocks: normalisation, depthwise-separable convolution
and its weighted multi-dilation variant.

The multi-dilation block runs several depthwise convolutions with different
dilations over the same entry features and mixes them with attention weights
computed by a squeeze-and-excite branch scorer. With a single dilation the
block reduces exactly to the standard depthwise-separable block.
"""

from __future__ import annotations

import torch
from torch import nn


class GlobalLayerNorm(nn.Module):
    """Normalise over channels and time jointly, per-channel affine."""

    def __init__(self, channels: int, eps: float = 1e-8):
        super().__init__()
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(channels, 1))
        self.beta = nn.Parameter(torch.zeros(channels, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=(1, 2), keepdim=True)
        var = x.var(dim=(1, 2), keepdim=True, unbiased=False)
        return (x - mean) / torch.sqrt(var + self.eps) * self.gamma + self.beta


def _depthwise(channels: int, kernel: int, dilation: int, bias: bool) -> nn.Conv1d:
    # symmetric padding keeps the temporal length unchanged
    pad = dilation * (kernel - 1) // 2
    return nn.Conv1d(
        channels,
        channels,
        kernel,
        groups=channels,
        dilation=dilation,
        padding=pad,
        bias=bias,
    )


class SqueezeExciteWeights(nn.Module):
    """Simplex weights over convolution branches.

    Each branch is squeezed by global average pooling over time, pushed
    through a shared bottleneck of width `channels // reduction`, and the
    per-branch scores are softmax-normalised.
    """

    def __init__(self, channels: int, reduction: int):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, 1)

    def forward(self, branch_stack: torch.Tensor) -> torch.Tensor:
        """(n_branches, C, T) or (B, n_branches, C, T) -> weights per branch."""
        squeeze_batch = branch_stack.dim() == 3
        if squeeze_batch:
            branch_stack = branch_stack.unsqueeze(0)
        pooled = branch_stack.mean(dim=-1)  # (B, n, C)
        scores = self.fc2(torch.relu(self.fc1(pooled))).squeeze(-1)  # (B, n)
        weights = torch.softmax(scores, dim=-1)
        return weights.squeeze(0) if squeeze_batch else weights


class DepthConvBlock(nn.Module):
    """Standard residual depthwise-separable convolution block."""

    def __init__(
        self,
        channels: int,
        hidden: int,
        kernel: int = 3,
        dilation: int = 1,
        bias: bool = True,
    ):
        super().__init__()
        self.entry = nn.Conv1d(channels, hidden, 1, bias=bias)
        self.entry_act = nn.PReLU()
        self.entry_norm = GlobalLayerNorm(hidden)
        self.depthwise = _depthwise(hidden, kernel, dilation, bias)
        self.exit_act = nn.PReLU()
        self.exit_norm = GlobalLayerNorm(hidden)
        self.exit = nn.Conv1d(hidden, channels, 1, bias=bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.entry_norm(self.entry_act(self.entry(x)))
        y = self.depthwise(y)
        y = self.exit_norm(self.exit_act(y))
        return x + self.exit(y)


class WeightedMultiDilationBlock(nn.Module):
    """Residual block mixing several dilated depthwise branches.

    The entry and exit stages match `DepthConvBlock`; only the depthwise
    stage differs, replacing the single convolution by an attention-weighted
    sum over dilation branches.
    """

    def __init__(
        self,
        channels: int,
        hidden: int,
        dilations: tuple[int, ...],
        kernel: int = 3,
        se_reduction: int = 4,
        bias: bool = True,
    ):
        super().__init__()
        if not dilations:
            raise ValueError("need at least one dilation branch")
        self.entry = nn.Conv1d(channels, hidden, 1, bias=bias)
        self.entry_act = nn.PReLU()
        self.entry_norm = GlobalLayerNorm(hidden)
        self.branches = nn.ModuleList(
            _depthwise(hidden, kernel, d, bias) for d in dilations
        )
        self.branch_weights = SqueezeExciteWeights(hidden, se_reduction)
        self.exit_act = nn.PReLU()
        self.exit_norm = GlobalLayerNorm(hidden)
        self.exit = nn.Conv1d(hidden, channels, 1, bias=bias)

    def mix_branches(self, y: torch.Tensor) -> torch.Tensor:
        stack = torch.stack([branch(y) for branch in self.branches], dim=1)
        weights = self.branch_weights(stack)  # (B, n)
        return (stack * weights[:, :, None, None]).sum(dim=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.entry_norm(self.entry_act(self.entry(x)))
        y = self.mix_branches(y)
        y = self.exit_norm(self.exit_act(y))
        return x + self.exit(y)
