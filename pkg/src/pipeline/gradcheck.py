"""
Finite-difference suite: every layer and both full training losses at toy
shapes, in float64.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import torch
from torch import nn

from config.constants import GRADCHECK_STEP, GRADCHECK_TOLERANCE
from diffusion.sampling import diffusion_loss
from diffusion.schedule import NoiseSchedule
from dit.models import CrossDiT, DitConfig, TextEncoder
from dit.vocabulary import VOCABULARY
from numerics.autograd import finite_difference_check, layer_params
from numerics.layers import (
    CausalConv3d,
    ChannelNorm,
    FeedForward,
    LayerNorm,
    MultiHeadAttention,
    attention,
    gelu,
)
from wfvae.losses import vae_loss
from wfvae.models import VaeConfig, WaveletFlowVAE

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradcheckResult:
    name: str
    error: float

    @property
    def passed(self) -> bool:
        return self.error < GRADCHECK_TOLERANCE


def _jitter(module: nn.Module, generator: torch.Generator, scale: float = 0.1) -> nn.Module:
    # Zero-initialised gates and heads leave most gradients at exactly zero.
    with torch.no_grad():
        for parameter in module.parameters():
            parameter.add_(scale * torch.randn(parameter.shape, generator=generator, dtype=parameter.dtype))
    return module


def _randn(generator: torch.Generator, *shape: int) -> torch.Tensor:
    return torch.randn(*shape, dtype=torch.float64, generator=generator)


def _causal_conv3d(generator):
    conv = CausalConv3d(2, 3, stride=(2, 2, 2)).double()
    x = _randn(generator, 1, 2, 5, 4, 4).requires_grad_()
    return lambda: conv(x).pow(2).sum(), {**layer_params(conv), "input": x}


def _attention(generator):
    q, k, v = (_randn(generator, 1, 2, 3, 4).requires_grad_() for _ in range(3))
    mask = torch.tensor([[True, True, False]])
    return lambda: attention(q, k, v, mask).pow(2).sum(), {"q": q, "k": k, "v": v}


def _layer_norm(generator):
    norm = _jitter(LayerNorm(6).double(), generator)
    x = _randn(generator, 3, 6).requires_grad_()
    target = _randn(generator, 3, 6)
    return lambda: (norm(x) * target).sum(), {**layer_params(norm), "input": x}


def _channel_norm(generator):
    norm = _jitter(ChannelNorm(3).double(), generator)
    x = _randn(generator, 1, 3, 2, 2, 2).requires_grad_()
    target = _randn(generator, 1, 3, 2, 2, 2)
    return lambda: (norm(x) * target).sum(), {**layer_params(norm), "input": x}


def _gelu(generator):
    x = _randn(generator, 7).requires_grad_()
    return lambda: gelu(x).pow(2).sum(), {"input": x}


def _multi_head_attention(generator):
    layer = MultiHeadAttention(4, 2, context_dim=6).double()
    x, context = _randn(generator, 1, 3, 4).requires_grad_(), _randn(generator, 1, 5, 6)
    return lambda: layer(x, context).pow(2).sum(), {**layer_params(layer), "input": x}


def _feed_forward(generator):
    layer = FeedForward(4, mult=2).double()
    x = _randn(generator, 2, 4).requires_grad_()
    return lambda: layer(x).pow(2).sum(), {**layer_params(layer), "input": x}


def _vae_loss(generator):
    vae = WaveletFlowVAE(
        VaeConfig(latent_channels=2, base_channels=2, temporal_compression=2, spatial_compression=2, wavelet_levels=1)
    ).double()
    video = torch.rand(1, 1, 3, 4, 4, dtype=torch.float64, generator=generator)

    def loss():
        recon, stats = vae(video, torch.Generator().manual_seed(1))
        return vae_loss(video, recon, stats, 0.1)

    return loss, layer_params(vae)


def _dit_loss(generator):
    config = DitConfig(
        hidden_size=8,
        depth=1,
        heads=2,
        patch_size=(1, 2, 2),
        text_max_length=4,
        text_blocks=1,
        latent_channels=2,
        latent_extents=(2, 2, 2),
        train_timesteps=10,
    )
    dit = _jitter(CrossDiT(config).double(), generator)
    text_encoder = TextEncoder(config).double()
    schedule = NoiseSchedule.linear(10)
    z0 = _randn(generator, 2, 2, 2, 2, 2)
    prompt = VOCABULARY.encode("left eye, leakage", max_length=4).batched()

    def loss():
        cond = text_encoder(prompt).expand(2, -1, -1)
        return diffusion_loss(dit, z0, cond, None, torch.Generator().manual_seed(2), schedule, 0.0)

    params = {f"dit.{k}": v for k, v in layer_params(dit).items()}
    params.update({f"text.{k}": v for k, v in layer_params(text_encoder).items()})
    return loss, params


SUITE: dict[str, Callable] = {
    "causal_conv3d": _causal_conv3d,
    "attention": _attention,
    "layer_norm": _layer_norm,
    "channel_norm": _channel_norm,
    "gelu": _gelu,
    "multi_head_attention": _multi_head_attention,
    "feed_forward": _feed_forward,
    "vae_loss": _vae_loss,
    "dit_loss": _dit_loss,
}


def run_gradcheck(seed: int = 0) -> list[GradcheckResult]:
    results = []
    for name, build in SUITE.items():
        generator = torch.Generator().manual_seed(seed)
        torch.manual_seed(seed)
        loss_fn, params = build(generator)
        error = finite_difference_check(loss_fn, params, step=GRADCHECK_STEP, generator=generator)
        logger.info("gradcheck %s: max relative error %.3e", name, error)
        results.append(GradcheckResult(name, error))
    return results
