import math
from dataclasses import dataclass, field
from typing import Union

import torch
from einops import rearrange
from torch import nn

from config.constants import (
    DIT_DEPTH,
    DIT_HEADS,
    DIT_HIDDEN_SIZE,
    DIT_PATCH_SIZE,
    LATENT_CHANNELS,
    TEXT_BLOCKS,
    TEXT_MAX_LENGTH,
    TIMESTEP_MAX_PERIOD,
    TRAIN_TIMESTEPS,
)
from dit.vocabulary import VOCABULARY, PromptTokens
from exceptions import ConfigError, ShapeError
from numerics.layers import FeedForward, LayerNorm, MultiHeadAttention, gelu


@dataclass(frozen=True)
class DitConfig:
    hidden_size: int = DIT_HIDDEN_SIZE
    depth: int = DIT_DEPTH
    heads: int = DIT_HEADS
    patch_size: tuple[int, int, int] = DIT_PATCH_SIZE
    vocab_size: int = len(VOCABULARY)
    text_max_length: int = TEXT_MAX_LENGTH
    text_blocks: int = TEXT_BLOCKS
    latent_channels: int = LATENT_CHANNELS
    latent_extents: tuple[int, int, int] = field(default=(5, 16, 16))
    train_timesteps: int = TRAIN_TIMESTEPS

    def __post_init__(self):
        if self.hidden_size < 2 or self.hidden_size % 2:
            raise ConfigError(f"must be even and at least 2, got {self.hidden_size}", "dit.hidden_size")
        if self.heads < 1 or self.hidden_size % self.heads:
            raise ConfigError(
                f"hidden size {self.hidden_size} is not divisible by {self.heads} heads", "dit.heads"
            )
        if self.depth < 1:
            raise ConfigError(f"must be at least 1, got {self.depth}", "dit.depth")
        if self.vocab_size < 1 or self.text_max_length < 1:
            raise ConfigError("vocabulary and text length must be positive", "dit.text_max_length")
        if len(self.patch_size) != 3 or len(self.latent_extents) != 3:
            raise ConfigError("patch and latent extents need three axes", "dit.patch_size")
        for extent, step in zip(self.latent_extents, self.patch_size):
            if step < 1 or extent % step:
                raise ConfigError(
                    f"patch {tuple(self.patch_size)} does not divide latent extents "
                    f"{tuple(self.latent_extents)}",
                    "dit.patch_size",
                )

    @property
    def token_grid(self) -> tuple[int, int, int]:
        return tuple(e // p for e, p in zip(self.latent_extents, self.patch_size))

    @property
    def token_count(self) -> int:
        return math.prod(self.token_grid)

    @property
    def patch_dim(self) -> int:
        return self.latent_channels * math.prod(self.patch_size)


def sinusoidal_embedding(
    t: Union[int, torch.Tensor], dim: int, max_period: float = TIMESTEP_MAX_PERIOD
) -> torch.Tensor:
    """
    [sin(t·f_0), ..., sin(t·f_{h-1}), cos(t·f_0), ..., cos(t·f_{h-1})] with
    h = dim / 2 and frequencies f_i = max_period^(-i / (h - 1)) spanning 1 down
    to 1 / max_period. Returns B·dim for a 1-D ``t`` and dim for a scalar.
    """
    if dim < 2 or dim % 2:
        raise ShapeError(f"timestep embedding width must be even, got {dim}")
    t = torch.as_tensor(t, dtype=torch.float32)
    half = dim // 2
    exponent = torch.arange(half, dtype=torch.float32) / max(half - 1, 1)
    freqs = torch.exp(-math.log(max_period) * exponent)
    angles = t[..., None] * freqs
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)


class TimestepEmbedder(nn.Module):
    def __init__(self, hidden_size: int):
        super().__init__()
        self.hidden_size = hidden_size
        self.fc_in = nn.Linear(hidden_size, hidden_size)
        self.fc_out = nn.Linear(hidden_size, hidden_size)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        frequencies = sinusoidal_embedding(t, self.hidden_size).to(self.fc_in.weight.dtype)
        return self.fc_out(gelu(self.fc_in(frequencies)))


class TextBlock(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads)
        self.norm2 = LayerNorm(dim)
        self.ff = FeedForward(dim)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), key_mask=key_mask)
        return x + self.ff(self.norm2(x))


class TextEncoder(nn.Module):
    """
    Trainable encoder over the closed vocabulary: token and position
    embeddings through a few pre-norm self-attention blocks. Padded positions
    come out as exact zeros, so the all-padding prompt is the unconditional
    embedding.
    """

    def __init__(self, config: DitConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.hidden_size)
        self.position_embedding = nn.Parameter(
            0.02 * torch.randn(config.text_max_length, config.hidden_size)
        )
        self.blocks = nn.ModuleList(
            [TextBlock(config.hidden_size, config.heads) for _ in range(config.text_blocks)]
        )

    def forward(self, prompt: PromptTokens) -> torch.Tensor:
        prompt = prompt.batched()
        if prompt.length != self.config.text_max_length:
            raise ShapeError(
                f"prompt length {prompt.length} does not match {self.config.text_max_length}"
            )
        if prompt.ids.numel() and (prompt.ids.min() < 0 or prompt.ids.max() >= self.config.vocab_size):
            raise ShapeError(
                f"token ids must lie in [0, {self.config.vocab_size}), "
                f"got range [{prompt.ids.min().item()}, {prompt.ids.max().item()}]"
            )
        x = self.token_embedding(prompt.ids) + self.position_embedding
        for block in self.blocks:
            x = block(x, prompt.mask)
        return x * prompt.mask[..., None].to(x.dtype)


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale[:, None]) + shift[:, None]


class CrossDiTBlock(nn.Module):
    """
    Gated self-attention, cross-attention and feed-forward. The timestep
    embedding sets shift/scale of each sublayer input; the three gates start
    at zero so a fresh block is the identity.
    """

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = LayerNorm(dim, affine=False)
        self.self_attn = MultiHeadAttention(dim, heads)
        self.norm2 = LayerNorm(dim, affine=False)
        self.cross_attn = MultiHeadAttention(dim, heads, context_dim=dim)
        self.norm3 = LayerNorm(dim, affine=False)
        self.ff = FeedForward(dim)
        self.modulation = nn.Linear(dim, 6 * dim)
        self.gates = nn.Parameter(torch.zeros(3))
        nn.init.zeros_(self.modulation.weight)
        nn.init.zeros_(self.modulation.bias)

    def forward(self, x: torch.Tensor, temb: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        shift1, scale1, shift2, scale2, shift3, scale3 = self.modulation(gelu(temb)).chunk(6, dim=-1)
        x = x + self.gates[0] * self.self_attn(modulate(self.norm1(x), shift1, scale1))
        x = x + self.gates[1] * self.cross_attn(modulate(self.norm2(x), shift2, scale2), cond)
        return x + self.gates[2] * self.ff(modulate(self.norm3(x), shift3, scale3))


class CrossDiT(nn.Module):
    """
    Noise predictor over latent videos B·Cz·Tz·Hz·Wz.
    """

    def __init__(self, config: DitConfig):
        super().__init__()
        self.config = config
        d = config.hidden_size
        self.patch_embed = nn.Linear(config.patch_dim, d)
        self.position_embedding = nn.Parameter(0.02 * torch.randn(config.token_count, d))
        self.t_embedder = TimestepEmbedder(d)
        self.blocks = nn.ModuleList([CrossDiTBlock(d, config.heads) for _ in range(config.depth)])
        self.final_norm = LayerNorm(d, affine=False)
        self.final_modulation = nn.Linear(d, 2 * d)
        self.head = nn.Linear(d, config.patch_dim)
        for layer in (self.final_modulation, self.head):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def patchify(self, z: torch.Tensor) -> torch.Tensor:
        pt, ph, pw = self.config.patch_size
        return rearrange(
            z, "b c (t pt) (h ph) (w pw) -> b (t h w) (pt ph pw c)", pt=pt, ph=ph, pw=pw
        )

    def unpatchify(self, tokens: torch.Tensor) -> torch.Tensor:
        pt, ph, pw = self.config.patch_size
        t, h, w = self.config.token_grid
        return rearrange(
            tokens,
            "b (t h w) (pt ph pw c) -> b c (t pt) (h ph) (w pw)",
            t=t, h=h, w=w, pt=pt, ph=ph, pw=pw,
        )

    def _check_inputs(self, z_t: torch.Tensor, t: torch.Tensor, cond: torch.Tensor):
        expected = (self.config.latent_channels, *self.config.latent_extents)
        if z_t.dim() != 5 or tuple(z_t.shape[1:]) != expected:
            raise ShapeError(f"latent must be B·{'·'.join(map(str, expected))}, got {tuple(z_t.shape)}")
        if t.shape != (z_t.shape[0],):
            raise ShapeError(f"expected one timestep per sample, got {tuple(t.shape)}")
        if t.min() < 0 or t.max() >= self.config.train_timesteps:
            raise ShapeError(f"timesteps must lie in [0, {self.config.train_timesteps})")
        if cond.dim() != 3 or cond.shape[0] != z_t.shape[0] or cond.shape[2] != self.config.hidden_size:
            raise ShapeError(
                f"conditioning must be B·L·{self.config.hidden_size}, got {tuple(cond.shape)}"
            )

    def forward(
        self, z_t: torch.Tensor, t: Union[int, torch.Tensor], cond: torch.Tensor
    ) -> torch.Tensor:
        t = torch.as_tensor(t, dtype=torch.long)
        if t.dim() == 0:
            t = t.expand(z_t.shape[0])
        if cond.dim() == 2:
            cond = cond.unsqueeze(0).expand(z_t.shape[0], -1, -1)
        self._check_inputs(z_t, t, cond)
        x = self.patch_embed(self.patchify(z_t)) + self.position_embedding
        temb = self.t_embedder(t)
        for block in self.blocks:
            x = block(x, temb, cond)
        shift, scale = self.final_modulation(gelu(temb)).chunk(2, dim=-1)
        return self.unpatchify(self.head(modulate(self.final_norm(x), shift, scale)))
