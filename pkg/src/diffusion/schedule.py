from dataclasses import dataclass
from typing import Union

import torch

from config.constants import BETA_END, BETA_START, TRAIN_TIMESTEPS
from exceptions import ConfigError, ShapeError


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Forward-process variances β_t and their cumulative products
    ᾱ_t = Π_{i≤t}(1 − β_i), both kept in float64.
    """

    betas: torch.Tensor

    def __post_init__(self):
        if self.betas.dim() != 1 or len(self.betas) == 0:
            raise ConfigError("betas must be a non-empty sequence", "diffusion.train_timesteps")
        if not torch.all((self.betas > 0) & (self.betas < 1)):
            raise ConfigError("every beta must lie in (0, 1)", "diffusion.beta_start")
        object.__setattr__(self, "betas", self.betas.to(torch.float64))
        object.__setattr__(self, "alpha_bars", torch.cumprod(1 - self.betas, dim=0))

    @classmethod
    def linear(
        cls,
        train_timesteps: int = TRAIN_TIMESTEPS,
        beta_start: float = BETA_START,
        beta_end: float = BETA_END,
    ) -> "NoiseSchedule":
        if train_timesteps < 1:
            raise ConfigError("must be at least 1", "diffusion.train_timesteps")
        if not 0 < beta_start <= beta_end < 1:
            raise ConfigError("need 0 < beta_start <= beta_end < 1", "diffusion.beta_end")
        return cls(torch.linspace(beta_start, beta_end, train_timesteps, dtype=torch.float64))

    @property
    def train_timesteps(self) -> int:
        return len(self.betas)

    def check_timesteps(self, t: torch.Tensor) -> None:
        if t.numel() and (t.min() < 0 or t.max() >= self.train_timesteps):
            raise ShapeError(f"timesteps must lie in [0, {self.train_timesteps})")

    def alpha_bar(self, t: Union[int, torch.Tensor]) -> torch.Tensor:
        t = torch.as_tensor(t, dtype=torch.long)
        self.check_timesteps(t)
        return self.alpha_bars[t]


def _per_sample(values: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    values = values.to(like.dtype)
    if values.dim() == 0:
        return values
    return values.view(-1, *([1] * (like.dim() - 1)))


def q_sample(
    z0: torch.Tensor, t: Union[int, torch.Tensor], eps: torch.Tensor, schedule: NoiseSchedule
) -> torch.Tensor:
    """
    z_t = √ᾱ_t·z0 + √(1 − ᾱ_t)·eps, with ``t`` a scalar or one step per sample.
    """
    if eps.shape != z0.shape:
        raise ShapeError(f"noise {tuple(eps.shape)} does not match latent {tuple(z0.shape)}")
    alpha_bar = schedule.alpha_bar(t)
    if alpha_bar.dim() == 1 and alpha_bar.shape[0] != z0.shape[0]:
        raise ShapeError(f"{alpha_bar.shape[0]} timesteps for a batch of {z0.shape[0]}")
    signal = _per_sample(alpha_bar.sqrt(), z0)
    noise = _per_sample((1 - alpha_bar).sqrt(), z0)
    return signal * z0 + noise * eps
