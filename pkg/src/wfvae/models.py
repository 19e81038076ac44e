"""
Wavelet-Flow VAE.

The encoder is a stack of causal 3D convolution stages. At every stage
resolution the low-frequency Haar band of the input clip is projected by a
1×1×1 convolution and added to the backbone activation (the energy-flow
shortcut); a final shortcut adds the band straight into the latent moments.
The decoder mirrors this, injecting a Haar-synthesized upsampling of a
learned low-frequency estimate at every resolution.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import torch
from torch import nn

from config.constants import (
    KL_WEIGHT,
    LATENT_CHANNELS,
    LOGVAR_RANGE,
    SPATIAL_COMPRESSION,
    TEMPORAL_COMPRESSION,
    VAE_BASE_CHANNELS,
    WAVELET_LEVELS,
)
from exceptions import ConfigError, ShapeError
from numerics.clips import VideoClip
from numerics.layers import CausalConv3d, ChannelNorm, gelu
from validators import is_power_of_two
from wavelet.haar import causal_lowpass, causal_upsample
from wfvae.tiling import plan_tiles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VaeConfig:
    in_channels: int = 1
    latent_channels: int = LATENT_CHANNELS
    temporal_compression: int = TEMPORAL_COMPRESSION
    spatial_compression: int = SPATIAL_COMPRESSION
    base_channels: int = VAE_BASE_CHANNELS
    wavelet_levels: int = WAVELET_LEVELS
    kl_weight: float = KL_WEIGHT

    def __post_init__(self):
        for name in ("temporal_compression", "spatial_compression"):
            if not is_power_of_two(getattr(self, name)):
                raise ConfigError("must be a power of two", f"vae.{name}")
        if self.latent_channels < 1:
            raise ConfigError("must be at least 1", "vae.latent_channels")
        if self.kl_weight < 0:
            raise ConfigError("must be non-negative", "vae.kl_weight")

    @property
    def spatial_stages(self) -> int:
        return int(math.log2(self.spatial_compression))

    @property
    def temporal_stages(self) -> int:
        return int(math.log2(self.temporal_compression))

    @property
    def stage_count(self) -> int:
        return max(self.spatial_stages, self.temporal_stages)

    def stage_strides(self) -> list[tuple[int, int]]:
        """
        (temporal, spatial) stride per encoder stage; temporal strides come first.
        """
        return [
            (2 if i < self.temporal_stages else 1, 2 if i < self.spatial_stages else 1)
            for i in range(self.stage_count)
        ]

    def stage_widths(self) -> list[int]:
        return [self.base_channels * min(2**i, 4) for i in range(self.stage_count + 1)]

    def check_video(self, frames: int, height: int, width: int) -> None:
        if (frames - 1) % self.temporal_compression:
            raise ShapeError(
                f"{frames} frames do not fit temporal compression "
                f"{self.temporal_compression}: need 1 + k·{self.temporal_compression}"
            )
        if height % self.spatial_compression or width % self.spatial_compression:
            raise ShapeError(
                f"frame size {height}x{width} is not divisible by spatial "
                f"compression {self.spatial_compression}"
            )

    def latent_shape(self, frames: int, height: int, width: int) -> tuple[int, int, int, int]:
        self.check_video(frames, height, width)
        return (
            self.latent_channels,
            (frames - 1) // self.temporal_compression + 1,
            height // self.spatial_compression,
            width // self.spatial_compression,
        )

    def video_shape(self, latent_frames: int, height: int, width: int) -> tuple[int, int, int, int]:
        return (
            self.in_channels,
            (latent_frames - 1) * self.temporal_compression + 1,
            height * self.spatial_compression,
            width * self.spatial_compression,
        )


@dataclass
class LatentStats:
    mu: torch.Tensor
    logvar: torch.Tensor

    def __post_init__(self):
        if self.mu.shape != self.logvar.shape:
            raise ShapeError(
                f"mu {tuple(self.mu.shape)} and logvar {tuple(self.logvar.shape)} differ"
            )

    @property
    def std(self) -> torch.Tensor:
        return torch.exp(0.5 * self.logvar)


def causal_repeat(x: torch.Tensor, temporal: int, spatial: int) -> torch.Tensor:
    """
    Nearest-neighbour upsampling; T frames become (T - 1)·temporal + 1.
    """
    if spatial > 1:
        x = x.repeat_interleave(spatial, dim=-1).repeat_interleave(spatial, dim=-2)
    if temporal > 1:
        x = x.repeat_interleave(temporal, dim=-3)[..., temporal - 1 :, :, :]
    return x


class EncoderStage(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: tuple[int, int]):
        super().__init__()
        temporal, spatial = stride
        self.down = CausalConv3d(in_channels, out_channels, stride=(temporal, spatial, spatial))
        self.norm = ChannelNorm(out_channels)
        self.refine = CausalConv3d(out_channels, out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = gelu(self.norm(self.down(x)))
        return h + self.refine(h)


class DecoderStage(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, scale: tuple[int, int]):
        super().__init__()
        self.scale = scale
        self.conv = CausalConv3d(in_channels, out_channels)
        self.norm = ChannelNorm(out_channels)
        self.refine = CausalConv3d(out_channels, out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = gelu(self.norm(self.conv(causal_repeat(x, *self.scale))))
        return h + self.refine(h)


def _cumulative_levels(strides: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """
    (spatial, temporal) Haar levels reached after each stage.
    """
    levels, spatial, temporal = [], 0, 0
    for t_stride, s_stride in strides:
        spatial += s_stride == 2
        temporal += t_stride == 2
        levels.append((spatial, temporal))
    return levels


class WaveletFlowEncoder(nn.Module):
    def __init__(self, config: VaeConfig):
        super().__init__()
        widths = config.stage_widths()
        strides = config.stage_strides()
        self.levels = _cumulative_levels(strides)
        self.band_levels = (config.spatial_stages, config.temporal_stages)
        self.conv_in = CausalConv3d(config.in_channels, widths[0])
        self.stages = nn.ModuleList(
            EncoderStage(widths[i], widths[i + 1], stride) for i, stride in enumerate(strides)
        )
        injected = min(config.wavelet_levels, len(strides))
        self.energy_flow = nn.ModuleList(
            CausalConv3d(config.in_channels, widths[i + 1], kernel_size=(1, 1, 1))
            for i in range(injected)
        )
        self.conv_out = CausalConv3d(widths[-1], 2 * config.latent_channels)
        self.latent_flow = CausalConv3d(
            config.in_channels, 2 * config.latent_channels, kernel_size=(1, 1, 1)
        )

    def stage_outputs(self, x: torch.Tensor) -> list[torch.Tensor]:
        h = self.conv_in(x)
        outputs = []
        for i, stage in enumerate(self.stages):
            h = stage(h)
            if i < len(self.energy_flow):
                h = h + self.energy_flow[i](causal_lowpass(x, *self.levels[i]))
            outputs.append(h)
        return outputs

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.stage_outputs(x)[-1] if self.stages else self.conv_in(x)
        return self.conv_out(h) + self.latent_flow(causal_lowpass(x, *self.band_levels))


class WaveletFlowDecoder(nn.Module):
    def __init__(self, config: VaeConfig):
        super().__init__()
        widths = list(reversed(config.stage_widths()))
        scales = list(reversed(config.stage_strides()))
        self.levels = _cumulative_levels(scales)
        self.conv_in = CausalConv3d(config.latent_channels, widths[0])
        self.low_estimate = CausalConv3d(
            config.latent_channels, config.in_channels, kernel_size=(1, 1, 1)
        )
        self.stages = nn.ModuleList(
            DecoderStage(widths[i], widths[i + 1], scale) for i, scale in enumerate(scales)
        )
        self.energy_flow = nn.ModuleList(
            CausalConv3d(config.in_channels, widths[i + 1], kernel_size=(1, 1, 1))
            for i in range(len(scales))
        )
        self.conv_out = CausalConv3d(widths[-1], config.in_channels)
        self.output_flow = CausalConv3d(config.in_channels, config.in_channels, kernel_size=(1, 1, 1))

    @property
    def receptive_radius(self) -> int:
        """
        Spatial dependency radius of one output pixel, in latent pixels.
        """
        reach = self.conv_out.spatial_radius
        for stage in reversed(self.stages):
            reach += stage.conv.spatial_radius + stage.refine.spatial_radius
            reach = math.ceil(reach / stage.scale[1])
        return reach + self.conv_in.spatial_radius

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        estimate = self.low_estimate(z)
        h = self.conv_in(z)
        for i, stage in enumerate(self.stages):
            h = stage(h) + self.energy_flow[i](causal_upsample(estimate, *self.levels[i]))
        levels = self.levels[-1] if self.levels else (0, 0)
        logits = self.conv_out(h) + self.output_flow(causal_upsample(estimate, *levels))
        return torch.sigmoid(logits)


class WaveletFlowVAE(nn.Module):
    def __init__(self, config: Optional[VaeConfig] = None):
        super().__init__()
        self.config = config or VaeConfig()
        self.encoder = WaveletFlowEncoder(self.config)
        self.decoder = WaveletFlowDecoder(self.config)

    @staticmethod
    def _as_batch(video: Union[VideoClip, torch.Tensor]) -> torch.Tensor:
        if isinstance(video, VideoClip):
            return video.batched()
        if video.dim() == 4:
            return video.unsqueeze(0)
        return video

    def encode(self, video: Union[VideoClip, torch.Tensor]) -> LatentStats:
        x = self._as_batch(video)
        if x.dim() != 5 or x.shape[1] != self.config.in_channels:
            raise ShapeError(
                f"encoder expects N·{self.config.in_channels}·T·H·W, got {tuple(x.shape)}"
            )
        self.config.check_video(*x.shape[2:])
        if x.min() < 0 or x.max() > 1:
            raise ShapeError("encoder input pixels must lie in [0, 1]")
        moments = self.encoder(x)
        mu, logvar = moments.chunk(2, dim=1)
        return LatentStats(mu, logvar.clamp(*LOGVAR_RANGE))

    @staticmethod
    def reparameterize(stats: LatentStats, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        eps = torch.randn(
            stats.mu.shape, generator=generator, dtype=stats.mu.dtype, device=stats.mu.device
        )
        return stats.mu + stats.std * eps

    def _check_latent(self, z: torch.Tensor) -> None:
        if z.dim() != 5 or z.shape[1] != self.config.latent_channels:
            raise ShapeError(
                f"decoder expects N·{self.config.latent_channels}·Tz·Hz·Wz latents, "
                f"got {tuple(z.shape)}"
            )

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        """
        Latents (N·Cz·Tz·Hz·Wz) → clips (N·C·T·H·W) with pixels in [0, 1].
        """
        self._check_latent(z)
        return self.decoder(z)

    def decode_tiled(self, z: torch.Tensor, tile: tuple[int, int], overlap: int) -> VideoClip:
        """
        Decodes one latent (Cz·Tz·Hz·Wz, or a batch of one) as spatial tiles
        widened by ``overlap`` latent pixels on each side and stitches their
        margin-cropped interiors into a clip.
        """
        if z.dim() == 4:
            z = z.unsqueeze(0)
        self._check_latent(z)
        if z.shape[0] != 1:
            raise ShapeError(f"tiled decoding takes one latent at a time, got a batch of {z.shape[0]}")
        return VideoClip.from_batch(self._decode_tiles(z, tile, overlap))

    def _decode_tiles(self, z: torch.Tensor, tile: tuple[int, int], overlap: int) -> torch.Tensor:
        radius = self.decoder.receptive_radius
        if overlap < radius:
            raise ShapeError(
                f"tile overlap {overlap} is smaller than the decoder receptive-field "
                f"radius {radius}; tiled output cannot match the untiled decode"
            )
        if min(tile) < radius:
            raise ShapeError(f"tile {tuple(tile)} is smaller than the receptive-field radius {radius}")
        height, width = z.shape[-2:]
        if tile[0] >= height and tile[1] >= width:
            return self.decode(z)
        scale = self.config.spatial_compression
        output = None
        for window in plan_tiles((height, width), tile, overlap):
            (y0, y1), (x0, x1) = window.core
            (ya, yb), (xa, xb) = window.padded
            piece = self.decoder(z[..., ya:yb, xa:xb])
            if output is None:
                output = piece.new_empty(*piece.shape[:3], height * scale, width * scale)
            output[..., y0 * scale : y1 * scale, x0 * scale : x1 * scale] = piece[
                ...,
                (y0 - ya) * scale : (y1 - ya) * scale,
                (x0 - xa) * scale : (x1 - xa) * scale,
            ]
            logger.debug("decoded tile rows %d:%d cols %d:%d", y0, y1, x0, x1)
        return output

    def forward(
        self, video: Union[VideoClip, torch.Tensor], generator: Optional[torch.Generator] = None
    ) -> tuple[torch.Tensor, LatentStats]:
        stats = self.encode(video)
        return self.decode(self.reparameterize(stats, generator)), stats
