import logging
from dataclasses import dataclass
from typing import Optional

import torch

from config.constants import GUIDANCE_SCALE, SAMPLING_STEPS
from diffusion.sampling import ddim_sample
from diffusion.schedule import NoiseSchedule
from dit.models import CrossDiT, DitConfig, TextEncoder
from dit.vocabulary import PromptTokens
from exceptions import ConfigError
from numerics.clips import VideoClip
from wfvae.models import VaeConfig, WaveletFlowVAE

logger = logging.getLogger(__name__)


@dataclass
class ModelBundle:
    """
    Everything generation needs: the autoencoder, the denoiser with its text
    encoder, the noise schedule, and the factor latents are multiplied by
    before diffusion.
    """

    vae: WaveletFlowVAE
    dit: CrossDiT
    text_encoder: TextEncoder
    schedule: NoiseSchedule
    latent_scale: float = 1.0

    @classmethod
    def build(
        cls, vae_config: VaeConfig, dit_config: DitConfig, schedule: Optional[NoiseSchedule] = None
    ) -> "ModelBundle":
        if dit_config.latent_channels != vae_config.latent_channels:
            raise ConfigError(
                f"{dit_config.latent_channels} latent channels, the autoencoder has "
                f"{vae_config.latent_channels}",
                "dit.latent_channels",
            )
        schedule = schedule or NoiseSchedule.linear(dit_config.train_timesteps)
        if schedule.train_timesteps != dit_config.train_timesteps:
            raise ConfigError("schedule length differs from the denoiser's", "diffusion.train_timesteps")
        return cls(
            vae=WaveletFlowVAE(vae_config),
            dit=CrossDiT(dit_config),
            text_encoder=TextEncoder(dit_config),
            schedule=schedule,
        )

    @property
    def latent_shape(self) -> tuple[int, ...]:
        config = self.dit.config
        return (config.latent_channels, *config.latent_extents)

    def denoiser(self, z_t: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        return self.dit(z_t, t, cond)

    def eval(self) -> "ModelBundle":
        for module in (self.vae, self.dit, self.text_encoder):
            module.eval()
        return self


@torch.no_grad()
def generate(
    bundle: Optional[ModelBundle],
    prompt: PromptTokens,
    steps: int = SAMPLING_STEPS,
    guidance: Optional[float] = GUIDANCE_SCALE,
    generator: Optional[torch.Generator] = None,
    tile: Optional[tuple[int, int]] = None,
    overlap: Optional[int] = None,
) -> VideoClip:
    """
    Prompt → video: text encoding, implicit sampling in latent space, tiled
    decoding. Deterministic per (seed, prompt, weights).
    """
    if bundle is None:
        raise ConfigError("no trained model bundle loaded", "diffusion.checkpoint")
    bundle.eval()
    generator = generator or torch.Generator().manual_seed(0)
    cond = bundle.text_encoder(prompt)
    z = ddim_sample(
        bundle.denoiser,
        cond,
        (1, *bundle.latent_shape),
        steps,
        guidance,
        generator,
        bundle.schedule,
    )
    z = z / bundle.latent_scale
    extents = bundle.latent_shape[2:]
    tile = tile or extents
    radius = bundle.vae.decoder.receptive_radius
    overlap = radius if overlap is None else overlap
    clip = bundle.vae.decode_tiled(z, tile, overlap)
    logger.debug("generated %s from %d prompt terms", clip.shape, int(prompt.mask.sum()))
    return clip
