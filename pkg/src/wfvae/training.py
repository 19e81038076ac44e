import logging
import sys
from typing import Optional

import torch
from tqdm import tqdm

from config.constants import ADAM_BETAS, LEARNING_RATE
from numerics.layers import ensure_finite
from wfvae.losses import vae_loss
from wfvae.models import WaveletFlowVAE

logger = logging.getLogger(__name__)


def train_vae(
    model: WaveletFlowVAE,
    videos: torch.Tensor,
    steps: int,
    batch_size: int = 8,
    lr: float = LEARNING_RATE,
    generator: Optional[torch.Generator] = None,
    log_every: int = 50,
) -> list[float]:
    """
    Adam on the reconstruction + KL objective over minibatches drawn from
    ``videos`` (N·C·T·H·W). Returns the loss of every step.
    """
    generator = generator or torch.Generator().manual_seed(0)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr, betas=ADAM_BETAS)
    model.train()
    history = []
    progress = tqdm(range(steps), desc="train-vae", disable=not sys.stderr.isatty())
    for step in progress:
        index = torch.randint(len(videos), (min(batch_size, len(videos)),), generator=generator)
        batch = videos[index]
        recon, stats = model(batch, generator)
        loss = ensure_finite(vae_loss(batch, recon, stats, model.config.kl_weight), "vae_loss")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        history.append(loss.item())
        if log_every and (step + 1) % log_every == 0:
            logger.info("vae step %d/%d loss %.6f", step + 1, steps, history[-1])
            progress.set_postfix(loss=f"{history[-1]:.5f}")
    model.eval()
    return history


@torch.no_grad()
def evaluate_vae(model: WaveletFlowVAE, videos: torch.Tensor, batch_size: int = 8) -> float:
    """
    Mean loss on ``videos`` with the posterior mean as latent.
    """
    model.eval()
    total = 0.0
    for start in range(0, len(videos), batch_size):
        batch = videos[start : start + batch_size]
        stats = model.encode(batch)
        recon = model.decode(stats.mu)
        total += vae_loss(batch, recon, stats, model.config.kl_weight).item() * len(batch)
    return total / max(len(videos), 1)
