"""Architecture hyperparameters and parameter counting."""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

from ..errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    """All architecture knobs in one place.

    The defaults define the full-size profile (~0.69M trainable parameters);
    tests use much smaller instances. `dilation_set_per_block` defaults to
    two branches per block, a local one and one whose dilation doubles with
    block depth.
    """

    enc_kernel: int = 16
    enc_stride: int = 8
    feat_dim: int = 128
    bottleneck_dim: int = 64
    conv_hidden_dim: int = 216
    conv_kernel: int = 3
    n_blocks: int = 4
    n_repeats: int = 2
    dilation_set_per_block: tuple[tuple[int, ...], ...] | None = None
    se_reduction: int = 4
    att_dim: int = 64
    enc_blocks: int = 2
    eeg_in_channels: int = 30
    eeg_feat_dim: int = 64
    eeg_hidden_dim: int = 128
    eeg_n_blocks: int = 3
    eeg_kernel: int = 5
    eeg_downsample_stride: int = 2
    audio_rate_hz: float = 14700.0
    eeg_rate_hz: float = 128.0
    conv_bias: bool = True

    def __post_init__(self):
        for name in (
            "enc_kernel",
            "enc_stride",
            "feat_dim",
            "bottleneck_dim",
            "conv_hidden_dim",
            "conv_kernel",
            "n_blocks",
            "n_repeats",
            "se_reduction",
            "att_dim",
            "enc_blocks",
            "eeg_in_channels",
            "eeg_feat_dim",
            "eeg_hidden_dim",
            "eeg_n_blocks",
            "eeg_kernel",
            "eeg_downsample_stride",
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"ModelConfig.{name} must be a positive integer, got {value!r}")
        if self.conv_kernel % 2 == 0 or self.eeg_kernel % 2 == 0:
            raise ConfigError("convolution kernels must be odd for symmetric padding")
        if self.audio_rate_hz <= 0 or self.eeg_rate_hz <= 0:
            raise ConfigError("sample rates must be positive")
        dilations = self.dilation_set_per_block
        if dilations is None:
            dilations = tuple((1, 2 ** (b + 1)) for b in range(self.n_blocks))
        else:
            dilations = tuple(tuple(int(d) for d in ds) for ds in dilations)
            if len(dilations) != self.n_blocks:
                raise ConfigError(
                    f"need {self.n_blocks} dilation lists, got {len(dilations)}"
                )
            for ds in dilations:
                if not ds or any(d < 1 for d in ds):
                    raise ConfigError(f"invalid dilation list {ds!r}")
        object.__setattr__(self, "dilation_set_per_block", dilations)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown ModelConfig fields: {sorted(unknown)}")
        if data.get("dilation_set_per_block") is not None:
            data = dict(data)
            data["dilation_set_per_block"] = tuple(
                tuple(ds) for ds in data["dilation_set_per_block"]
            )
        return cls(**data)


def count_parameters(module) -> int:
    """Exact number of trainable scalars in a torch module."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def param_count(cfg: ModelConfig) -> int:
    """Trainable parameter count of the full network built from `cfg`."""
    from .network import build_network

    return count_parameters(build_network(cfg, seed=0))
