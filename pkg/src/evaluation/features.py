"""
Feature extractors for the distribution and perceptual metrics.

``features`` maps a batch of clips to one vector each; ``layers`` maps a
batch of single frames to the feature maps the perceptual distance compares.
"""

import math
from typing import Optional, Union

import torch
from torch import nn

from config.constants import DEFAULT_SEED, FEATURE_DIM
from exceptions import ConfigError, ShapeError
from numerics.clips import VideoClip
from wfvae.models import WaveletFlowVAE

VideoBatch = Union[VideoClip, torch.Tensor]


def as_video_batch(videos: VideoBatch) -> torch.Tensor:
    tensor = videos.batched() if isinstance(videos, VideoClip) else videos
    if tensor.dim() == 4:
        tensor = tensor.unsqueeze(0)
    if tensor.dim() != 5:
        raise ShapeError(f"expected N·C·T·H·W clips, got {tuple(tensor.shape)}")
    return tensor.to(torch.float32)


class FeatureExtractor:
    name = ""

    def features(self, videos: VideoBatch) -> torch.Tensor:
        raise NotImplementedError

    def layers(self, frames: torch.Tensor) -> list[torch.Tensor]:
        raise NotImplementedError


class RandomConvPyramid(nn.Module):
    """
    Fixed, seeded 2D conv stack; every stage halves the resolution.
    """

    def __init__(self, in_channels: int = 1, widths: tuple[int, ...] = (8, 16, 32), seed: int = DEFAULT_SEED):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.stages = nn.ModuleList()
        channels = in_channels
        for width in widths:
            conv = nn.Conv2d(channels, width, kernel_size=3, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=generator) / math.sqrt(9 * channels))
                conv.bias.zero_()
            self.stages.append(conv)
            channels = width
        self.requires_grad_(False)

    def forward(self, frames: torch.Tensor) -> list[torch.Tensor]:
        maps, h = [], frames
        for conv in self.stages:
            h = torch.relu(conv(h))
            maps.append(h)
            if min(h.shape[-2:]) >= 2:
                h = nn.functional.avg_pool2d(h, 2)
        return maps


class RandomProjectionExtractor(FeatureExtractor):
    """
    Training-free baseline: raw pixels times a seeded Gaussian matrix.
    """

    name = "rand-proj"

    def __init__(self, dim: int = FEATURE_DIM, seed: int = DEFAULT_SEED, in_channels: int = 1):
        if dim < 1:
            raise ConfigError("must be at least 1", "eval.feature_dim")
        self.dim = dim
        self.seed = seed
        self.pyramid = RandomConvPyramid(in_channels, seed=seed)
        self._projections: dict[int, torch.Tensor] = {}

    def projection(self, pixels: int) -> torch.Tensor:
        if pixels not in self._projections:
            generator = torch.Generator().manual_seed(self.seed)
            self._projections[pixels] = torch.randn(pixels, self.dim, generator=generator, dtype=torch.float64) / math.sqrt(pixels)
        return self._projections[pixels]

    def features(self, videos: VideoBatch) -> torch.Tensor:
        batch = as_video_batch(videos).to(torch.float64).flatten(1)
        return batch @ self.projection(batch.shape[1])

    @torch.no_grad()
    def layers(self, frames: torch.Tensor) -> list[torch.Tensor]:
        return self.pyramid(frames.to(torch.float32))


class VaePooledExtractor(FeatureExtractor):
    """
    Posterior means of a trained WF-VAE averaged over time and space; the
    encoder stages double as perceptual layers.
    """

    name = "vae-pooled"

    def __init__(self, vae: WaveletFlowVAE):
        self.vae = vae.eval()
        self.dim = vae.config.latent_channels

    @torch.no_grad()
    def features(self, videos: VideoBatch) -> torch.Tensor:
        stats = self.vae.encode(as_video_batch(videos))
        return stats.mu.mean(dim=(2, 3, 4)).to(torch.float64)

    @torch.no_grad()
    def layers(self, frames: torch.Tensor) -> list[torch.Tensor]:
        # A single frame is a valid causal clip of length one.
        outputs = self.vae.encoder.stage_outputs(frames.unsqueeze(2).to(torch.float32))
        return [output.squeeze(2) for output in outputs]


def build_extractor(
    name: str, vae: Optional[WaveletFlowVAE] = None, dim: int = FEATURE_DIM, seed: int = DEFAULT_SEED
) -> FeatureExtractor:
    if name == RandomProjectionExtractor.name:
        return RandomProjectionExtractor(dim, seed)
    if name == VaePooledExtractor.name:
        if vae is None:
            raise ConfigError("the vae-pooled extractor needs a trained VAE checkpoint", "eval.extractor")
        return VaePooledExtractor(vae)
    raise ConfigError(f"unknown feature extractor {name!r}", "eval.extractor")
