import itertools
import logging
import sys
from typing import Optional

import torch
from tqdm import tqdm

from config.constants import ADAM_BETAS, LEARNING_RATE, P_UNCOND
from diffusion.pipeline import ModelBundle
from diffusion.sampling import diffusion_loss
from dit.vocabulary import PromptTokens
from numerics.layers import ensure_finite
from wfvae.models import WaveletFlowVAE

logger = logging.getLogger(__name__)


@torch.no_grad()
def encode_latents(vae: WaveletFlowVAE, videos: torch.Tensor, batch_size: int = 8) -> torch.Tensor:
    """
    Posterior means of ``videos`` (N·C·T·H·W), computed batch by batch.
    """
    vae.eval()
    return torch.cat(
        [vae.encode(videos[i : i + batch_size]).mu for i in range(0, len(videos), batch_size)]
    )


def latent_scale_for(latents: torch.Tensor) -> float:
    """
    Factor that brings the latents to unit standard deviation.
    """
    std = latents.double().std().item()
    return 1.0 / std if std > 1e-8 else 1.0


def train_dit(
    bundle: ModelBundle,
    latents: torch.Tensor,
    prompts: PromptTokens,
    steps: int,
    batch_size: int = 8,
    lr: float = LEARNING_RATE,
    p_uncond: float = P_UNCOND,
    generator: Optional[torch.Generator] = None,
    log_every: int = 50,
) -> list[float]:
    """
    Adam on the ε-prediction objective over the denoiser and its text
    encoder. ``latents`` are unscaled posterior means; ``prompts`` is the
    batched PromptTokens of the same records.
    """
    generator = generator or torch.Generator().manual_seed(0)
    prompts = prompts.batched()
    latents = latents * bundle.latent_scale
    parameters = itertools.chain(bundle.dit.parameters(), bundle.text_encoder.parameters())
    optimizer = torch.optim.Adam(parameters, lr=lr, betas=ADAM_BETAS)
    bundle.dit.train()
    bundle.text_encoder.train()
    history = []
    progress = tqdm(range(steps), desc="train-dit", disable=not sys.stderr.isatty())
    for step in progress:
        index = torch.randint(len(latents), (min(batch_size, len(latents)),), generator=generator)
        batch = PromptTokens(prompts.ids[index], prompts.mask[index])
        cond = bundle.text_encoder(batch)
        loss = diffusion_loss(
            bundle.denoiser, latents[index], cond, None, generator, bundle.schedule, p_uncond
        )
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        history.append(ensure_finite(loss.detach(), "train_dit").item())
        if log_every and (step + 1) % log_every == 0:
            logger.info("dit step %d/%d loss %.6f", step + 1, steps, history[-1])
            progress.set_postfix(loss=f"{history[-1]:.5f}")
    bundle.eval()
    return history


@torch.no_grad()
def evaluate_dit(
    bundle: ModelBundle,
    latents: torch.Tensor,
    prompts: PromptTokens,
    generator: Optional[torch.Generator] = None,
    batch_size: int = 8,
) -> float:
    """
    Mean ε-prediction loss with random steps and no condition dropout.
    """
    generator = generator or torch.Generator().manual_seed(0)
    bundle.eval()
    prompts = prompts.batched()
    latents = latents * bundle.latent_scale
    total = 0.0
    for start in range(0, len(latents), batch_size):
        batch = PromptTokens(
            prompts.ids[start : start + batch_size], prompts.mask[start : start + batch_size]
        )
        cond = bundle.text_encoder(batch)
        z0 = latents[start : start + batch_size]
        loss = diffusion_loss(bundle.denoiser, z0, cond, None, generator, bundle.schedule, 0.0)
        total += loss.item() * len(z0)
    return total / max(len(latents), 1)
