"""The full extraction network: audio/EEG encoders, fused separator, decoder.

The forward path follows encode -> separate -> decode: the separator fuses
audio frames with multi-level EEG features through cross attention, a stack
of weighted multi-dilation blocks estimates a sigmoid mask over the audio
embedding, and the decoder reconstructs the masked embedding back to a
waveform of exactly the input length.
"""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F

from ..errors import DataError
from .blocks import DepthConvBlock, GlobalLayerNorm, WeightedMultiDilationBlock
from .config import ModelConfig


def frame_count(n_samples: int, kernel: int, stride: int) -> int:
    if n_samples < kernel:
        raise DataError(
            f"input of {n_samples} samples is shorter than the encoder kernel {kernel}"
        )
    return (n_samples - kernel) // stride + 1


class AudioEncoder(nn.Module):
    """Strided front-end convolution plus a couple of depthwise blocks."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.kernel = cfg.enc_kernel
        self.stride = cfg.enc_stride
        self.front = nn.Conv1d(
            1, cfg.feat_dim, cfg.enc_kernel, stride=cfg.enc_stride, bias=False
        )
        self.blocks = nn.ModuleList(
            DepthConvBlock(
                cfg.feat_dim, cfg.conv_hidden_dim, cfg.conv_kernel, 1, cfg.conv_bias
            )
            for _ in range(cfg.enc_blocks)
        )

    def forward(self, mixture: torch.Tensor) -> torch.Tensor:
        """(B, T) waveform -> (B, feat_dim, n_frames) embedding."""
        frame_count(mixture.shape[-1], self.kernel, self.stride)
        w = self.front(mixture.unsqueeze(1))
        for block in self.blocks:
            w = block(w)
        return w


class AudioDecoder(nn.Module):
    """Mirror of the encoder: depthwise blocks then a transposed convolution."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.blocks = nn.ModuleList(
            DepthConvBlock(
                cfg.feat_dim, cfg.conv_hidden_dim, cfg.conv_kernel, 1, cfg.conv_bias
            )
            for _ in range(cfg.enc_blocks)
        )
        self.back = nn.ConvTranspose1d(
            cfg.feat_dim, 1, cfg.enc_kernel, stride=cfg.enc_stride, bias=False
        )

    def forward(self, masked: torch.Tensor, out_len: int) -> torch.Tensor:
        """(B, feat_dim, n_frames) -> (B, out_len) waveform."""
        y = masked
        for block in self.blocks:
            y = block(y)
        wav = self.back(y).squeeze(1)
        if wav.shape[-1] > out_len:
            wav = wav[..., :out_len]
        elif wav.shape[-1] < out_len:
            wav = F.pad(wav, (0, out_len - wav.shape[-1]))
        return wav


class EEGEncoder(nn.Module):
    """Downsampling convolution followed by residual depthwise blocks.

    Returns one feature level per block; level k is level k-1 plus the
    block's refinement, so later levels carry increasingly mixed context.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.in_channels = cfg.eeg_in_channels
        self.front = nn.Conv1d(
            cfg.eeg_in_channels,
            cfg.eeg_feat_dim,
            cfg.eeg_kernel,
            stride=cfg.eeg_downsample_stride,
            padding=(cfg.eeg_kernel - 1) // 2,
            bias=cfg.conv_bias,
        )
        self.blocks = nn.ModuleList(
            DepthConvBlock(
                cfg.eeg_feat_dim, cfg.eeg_hidden_dim, cfg.conv_kernel, 2**i, cfg.conv_bias
            )
            for i in range(cfg.eeg_n_blocks)
        )

    def forward(self, eeg: torch.Tensor) -> list[torch.Tensor]:
        """(B, |S|, T_e) -> list of (B, eeg_feat_dim, T_e') feature levels."""
        if eeg.shape[1] != self.in_channels:
            raise DataError(
                f"expected {self.in_channels} EEG channels, got {eeg.shape[1]}"
            )
        x = self.front(eeg)
        levels = []
        for block in self.blocks:
            x = block(x)
            levels.append(x)
        return levels


class CrossModalFusion(nn.Module):
    """Cross attention from audio frames onto each EEG feature level.

    EEG levels are linearly interpolated up to the audio frame rate, each
    level gets its own key/value projections, the per-level attention
    outputs are averaged and residual-added to a projection of the audio
    pathway.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.att_dim = cfg.att_dim
        self.audio_proj = nn.Conv1d(cfg.feat_dim, cfg.bottleneck_dim, 1, bias=cfg.conv_bias)
        self.query_proj = nn.Conv1d(cfg.feat_dim, cfg.att_dim, 1, bias=cfg.conv_bias)
        self.key_projs = nn.ModuleList(
            nn.Conv1d(cfg.eeg_feat_dim, cfg.att_dim, 1, bias=cfg.conv_bias)
            for _ in range(cfg.eeg_n_blocks)
        )
        self.value_projs = nn.ModuleList(
            nn.Conv1d(cfg.eeg_feat_dim, cfg.bottleneck_dim, 1, bias=cfg.conv_bias)
            for _ in range(cfg.eeg_n_blocks)
        )

    def forward(
        self,
        audio: torch.Tensor,
        eeg_levels: list[torch.Tensor],
        return_attention: bool = False,
    ):
        if len(eeg_levels) != len(self.key_projs):
            raise DataError(
                f"expected {len(self.key_projs)} EEG levels, got {len(eeg_levels)}"
            )
        n_frames = audio.shape[-1]
        if n_frames < 1 or any(lvl.shape[-1] < 1 for lvl in eeg_levels):
            raise DataError("cannot align empty feature sequences")
        query = self.query_proj(audio)
        base = self.audio_proj(audio)
        scale = 1.0 / math.sqrt(self.att_dim)
        outputs = []
        attentions = []
        for key_proj, value_proj, level in zip(self.key_projs, self.value_projs, eeg_levels):
            if level.shape[-1] != n_frames:
                level = F.interpolate(
                    level, size=n_frames, mode="linear", align_corners=False
                )
            keys = key_proj(level)
            values = value_proj(level)
            logits = torch.einsum("bat,bau->btu", query, keys) * scale
            attn = torch.softmax(logits, dim=-1)
            outputs.append(torch.einsum("btu,bcu->bct", attn, values))
            if return_attention:
                attentions.append(attn)
        fused = base + sum(outputs) / len(outputs)
        if return_attention:
            return fused, attentions
        return fused


class Separator(nn.Module):
    """Mask estimator: fuse modalities, run the block stack, squash to [0, 1]."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.input_norm = GlobalLayerNorm(cfg.feat_dim)
        self.fusion = CrossModalFusion(cfg)
        self.blocks = nn.ModuleList(
            WeightedMultiDilationBlock(
                cfg.bottleneck_dim,
                cfg.conv_hidden_dim,
                cfg.dilation_set_per_block[b],
                cfg.conv_kernel,
                cfg.se_reduction,
                cfg.conv_bias,
            )
            for _ in range(cfg.n_repeats)
            for b in range(cfg.n_blocks)
        )
        self.mask_act = nn.PReLU()
        self.mask_proj = nn.Conv1d(cfg.bottleneck_dim, cfg.feat_dim, 1, bias=cfg.conv_bias)

    def forward(self, w_x: torch.Tensor, eeg_levels: list[torch.Tensor]) -> torch.Tensor:
        y = self.fusion(self.input_norm(w_x), eeg_levels)
        for block in self.blocks:
            y = block(y)
        return torch.sigmoid(self.mask_proj(self.mask_act(y)))


class ExtractionNetwork(nn.Module):
    """End-to-end target speaker extraction from a mixture and matched EEG."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.audio_encoder = AudioEncoder(cfg)
        self.eeg_encoder = EEGEncoder(cfg)
        self.separator = Separator(cfg)
        self.decoder = AudioDecoder(cfg)

    def forward(self, mixture: torch.Tensor, eeg: torch.Tensor) -> torch.Tensor:
        """(B, T) mixture + (B, |S|, T_e) EEG -> (B, T) estimate."""
        out_len = mixture.shape[-1]
        w_x = self.audio_encoder(mixture)
        levels = self.eeg_encoder(eeg)
        mask = self.separator(w_x, levels)
        return self.decoder(w_x * mask, out_len)


def build_network(cfg: ModelConfig, seed: int = 0) -> ExtractionNetwork:
    """Construct the network with seed-deterministic initialisation."""
    torch.manual_seed(seed)
    return ExtractionNetwork(cfg)
