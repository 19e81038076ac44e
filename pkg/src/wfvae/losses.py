import torch

from exceptions import ConfigError, ShapeError
from wfvae.models import LatentStats


def kl_terms(stats: LatentStats) -> torch.Tensor:
    """
    Elementwise KL(N(mu, σ²) ‖ N(0, 1)) = ½(mu² + σ² − log σ² − 1).
    """
    return 0.5 * (stats.mu.pow(2) + stats.logvar.exp() - stats.logvar - 1)


def vae_loss(
    video: torch.Tensor, recon: torch.Tensor, stats: LatentStats, beta: float
) -> torch.Tensor:
    if video.shape != recon.shape:
        raise ShapeError(
            f"reconstruction {tuple(recon.shape)} does not match video {tuple(video.shape)}"
        )
    if beta < 0:
        raise ConfigError("must be non-negative", "vae.kl_weight")
    reconstruction = (recon - video).pow(2).mean()
    return reconstruction + beta * kl_terms(stats).mean()
