"""
ε-prediction objective and the deterministic implicit sampler.

A denoiser is any callable ``model(z_t, t, cond) -> ε̂`` taking a B-long
tensor of steps; the all-zero condition is the unconditional embedding.
"""

import logging
import sys
from typing import Callable, Optional, Sequence

import torch
from tqdm import tqdm

from config.constants import P_UNCOND
from diffusion.schedule import NoiseSchedule, q_sample
from exceptions import ConfigError, ShapeError
from numerics.layers import ensure_finite

logger = logging.getLogger(__name__)

Denoiser = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]


def drop_condition(
    cond: torch.Tensor, p_uncond: float, generator: torch.Generator
) -> torch.Tensor:
    """
    Replaces each sample's condition by zeros with probability ``p_uncond``.
    """
    if not 0 <= p_uncond <= 1:
        raise ConfigError(f"must lie in [0, 1], got {p_uncond}", "train.p_uncond")
    dropped = torch.rand(cond.shape[0], generator=generator) < p_uncond
    return cond.masked_fill(dropped[:, None, None], 0.0)


def diffusion_loss(
    model: Denoiser,
    z0: torch.Tensor,
    cond: torch.Tensor,
    t: Optional[torch.Tensor],
    generator: torch.Generator,
    schedule: NoiseSchedule,
    p_uncond: float = P_UNCOND,
) -> torch.Tensor:
    """
    mean‖ε̂(q_sample(z0, t, ε), t, c) − ε‖² with ε ~ N(0, 1) from ``generator``.
    Steps are drawn uniformly when ``t`` is None.
    """
    batch = z0.shape[0]
    if t is None:
        t = torch.randint(schedule.train_timesteps, (batch,), generator=generator)
    t = torch.as_tensor(t, dtype=torch.long).expand(batch)
    eps = torch.randn(z0.shape, generator=generator, dtype=z0.dtype)
    cond = drop_condition(cond, p_uncond, generator)
    prediction = model(q_sample(z0, t, eps, schedule), t, cond)
    return ensure_finite((prediction - eps).pow(2).mean(), "diffusion_loss")


def sampling_timesteps(train_timesteps: int, steps: int) -> list[int]:
    """
    Uniform-stride sub-schedule, highest step first.
    """
    if not 1 <= steps <= train_timesteps:
        raise ConfigError(
            f"must lie in [1, {train_timesteps}], got {steps}", "diffusion.sampling_steps"
        )
    stride = train_timesteps // steps
    return list(range(0, stride * steps, stride))[::-1]


def guided_prediction(
    model: Denoiser,
    z: torch.Tensor,
    t: torch.Tensor,
    cond: torch.Tensor,
    guidance: Optional[float],
) -> torch.Tensor:
    if not guidance:
        return model(z, t, cond)
    unconditional = model(z, t, torch.zeros_like(cond))
    conditional = model(z, t, cond)
    return unconditional + guidance * (conditional - unconditional)


@torch.no_grad()
def ddim_sample(
    model: Denoiser,
    cond: torch.Tensor,
    shape: Sequence[int],
    steps: int,
    guidance: Optional[float],
    generator: torch.Generator,
    schedule: NoiseSchedule,
    noise: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Deterministic (η = 0) sampling from z ~ N(0, 1), or from ``noise`` when
    given. Each step predicts ẑ0 from ε̂ and moves to the next step of the
    sub-schedule; the step after the last one has ᾱ = 1.
    """
    if guidance is not None and guidance < 0:
        raise ConfigError(f"must be non-negative, got {guidance}", "diffusion.guidance")
    timesteps = sampling_timesteps(schedule.train_timesteps, steps)
    if noise is None:
        z = torch.randn(tuple(shape), generator=generator)
    elif tuple(noise.shape) != tuple(shape):
        raise ShapeError(f"initial noise {tuple(noise.shape)} does not match {tuple(shape)}")
    else:
        z = noise.clone()
    if cond.shape[0] != z.shape[0]:
        raise ShapeError(f"{cond.shape[0]} conditions for a batch of {z.shape[0]}")
    progress = tqdm(timesteps, desc="ddim", disable=not sys.stderr.isatty(), leave=False)
    for i, step in enumerate(progress):
        t = torch.full((z.shape[0],), step, dtype=torch.long)
        eps = ensure_finite(guided_prediction(model, z, t, cond, guidance), "denoiser")
        alpha_bar = schedule.alpha_bars[step].item()
        alpha_bar_next = schedule.alpha_bars[timesteps[i + 1]].item() if i + 1 < len(timesteps) else 1.0
        z0_hat = (z - (1 - alpha_bar) ** 0.5 * eps) / alpha_bar**0.5
        z = alpha_bar_next**0.5 * z0_hat + (1 - alpha_bar_next) ** 0.5 * eps
    logger.debug("ddim finished %d steps (guidance %s)", steps, guidance)
    return ensure_finite(z, "ddim_sample")
