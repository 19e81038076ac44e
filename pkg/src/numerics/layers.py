"""
Functional tensor ops shared by every model, plus the thin ``nn.Module``
wrappers that own their parameters.

All ops take and return ``torch.Tensor`` in NCTHW (video) or B·H·L·d
(attention) layouts and verify their preconditions before touching data.
"""

import math
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from config.constants import LAYER_NORM_EPS
from exceptions import NumericError, ShapeError

MASKED_LOGIT = -1e9


def ensure_finite(tensor: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(tensor).all():
        raise NumericError(f"non-finite values produced by {where}")
    return tensor


def causal_conv3d(
    input: torch.Tensor,
    weight: torch.Tensor,
    bias: Optional[torch.Tensor] = None,
    stride: Sequence[int] = (1, 1, 1),
) -> torch.Tensor:
    """
    3D convolution that only looks at the past along the frame axis.

    The first frame is replicated kt-1 times in front of the clip, spatial
    padding is symmetric zeros. Output length along time is
    floor((T - 1) / st) + 1 and frame tau only depends on frames <= tau * st.
    """
    if input.dim() != 5 or weight.dim() != 5:
        raise ShapeError(
            f"causal_conv3d expects NCTHW input and OC·IC·kt·kh·kw weight, "
            f"got {tuple(input.shape)} and {tuple(weight.shape)}"
        )
    if input.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"input has {input.shape[1]} channels but weight expects {weight.shape[1]} "
            f"(input {tuple(input.shape)}, weight {tuple(weight.shape)})"
        )
    kt, kh, kw = weight.shape[2:]
    if kt % 2 == 0 or kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel extents must be odd, got {(kt, kh, kw)}")
    st, sh, sw = stride
    height, width = input.shape[3], input.shape[4]
    if height % sh or width % sw:
        raise ShapeError(
            f"spatial extents {(height, width)} are not divisible by stride {(sh, sw)}"
        )
    if kt > 1:
        past = input[:, :, :1].expand(-1, -1, kt - 1, -1, -1)
        input = torch.cat([past, input], dim=2)
    output = F.conv3d(input, weight, bias, stride=(st, sh, sw), padding=(0, kh // 2, kw // 2))
    return ensure_finite(output, "causal_conv3d")


def attention_weights(
    q: torch.Tensor, k: torch.Tensor, key_mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    if q.dim() != 4 or k.dim() != 4:
        raise ShapeError(f"attention expects B·H·L·d tensors, got {tuple(q.shape)}, {tuple(k.shape)}")
    if q.shape[:2] != k.shape[:2] or q.shape[-1] != k.shape[-1]:
        raise ShapeError(
            f"query {tuple(q.shape)} and key {tuple(k.shape)} disagree on batch/head/key-dim"
        )
    d = q.shape[-1]
    if d == 0 or k.shape[2] == 0:
        raise ShapeError("attention needs a non-empty key dimension and at least one key")
    logits = q @ k.transpose(-2, -1) / math.sqrt(d)
    if key_mask is not None:
        logits = logits.masked_fill(~key_mask[:, None, None, :], MASKED_LOGIT)
    logits = logits - logits.amax(dim=-1, keepdim=True).detach()
    weights = logits.exp()
    return weights / weights.sum(dim=-1, keepdim=True)


def attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    key_mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    softmax(q·kᵀ/√d)·v over B·H·L·d tensors.

    ``key_mask`` (B·Lk, True = visible) hides padded keys.
    """
    if v.shape[:3] != k.shape[:3]:
        raise ShapeError(f"value {tuple(v.shape)} does not match key {tuple(k.shape)}")
    output = attention_weights(q, k, key_mask) @ v
    return ensure_finite(output, "attention")


def layer_norm(
    x: torch.Tensor,
    scale: torch.Tensor,
    shift: torch.Tensor,
    eps: float = LAYER_NORM_EPS,
) -> torch.Tensor:
    """
    Normalizes over the trailing axis with the population variance.
    """
    if x.shape[-1] == 0:
        raise ShapeError("layer_norm feature axis is empty")
    if eps <= 0:
        raise ShapeError(f"layer_norm eps must be positive, got {eps}")
    mean = x.mean(dim=-1, keepdim=True)
    var = (x - mean).pow(2).mean(dim=-1, keepdim=True)
    output = (x - mean) / torch.sqrt(var + eps) * scale + shift
    return ensure_finite(output, "layer_norm")


def gelu(x: torch.Tensor) -> torch.Tensor:
    return F.gelu(x, approximate="tanh")


class CausalConv3d(nn.Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: Sequence[int] = (3, 3, 3),
        stride: Sequence[int] = (1, 1, 1),
    ):
        super().__init__()
        self.stride = tuple(stride)
        self.kernel_size = tuple(kernel_size)
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, *self.kernel_size))
        self.bias = nn.Parameter(torch.empty(out_channels))
        nn.init.kaiming_uniform_(self.weight, a=math.sqrt(5))
        fan_in = in_channels * math.prod(self.kernel_size)
        bound = 1 / math.sqrt(fan_in)
        nn.init.uniform_(self.bias, -bound, bound)

    @property
    def spatial_radius(self) -> int:
        return self.kernel_size[1] // 2

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return causal_conv3d(x, self.weight, self.bias, self.stride)


class LayerNorm(nn.Module):
    def __init__(self, features: int, affine: bool = True):
        super().__init__()
        self.features = features
        if affine:
            self.scale = nn.Parameter(torch.ones(features))
            self.shift = nn.Parameter(torch.zeros(features))
        else:
            self.register_buffer("scale", torch.ones(features), persistent=False)
            self.register_buffer("shift", torch.zeros(features), persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layer_norm(x, self.scale, self.shift)


class ChannelNorm(LayerNorm):
    """
    Layer norm over the channel axis of an NCTHW tensor, position by position.
    """

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return super().forward(x.movedim(1, -1)).movedim(-1, 1)


class MultiHeadAttention(nn.Module):
    """
    Self-attention when ``context`` is omitted, cross-attention otherwise.
    """

    def __init__(self, dim: int, heads: int, context_dim: Optional[int] = None):
        super().__init__()
        if dim % heads:
            raise ShapeError(f"width {dim} is not divisible by {heads} heads")
        context_dim = context_dim or dim
        self.heads = heads
        self.to_q = nn.Linear(dim, dim)
        self.to_k = nn.Linear(context_dim, dim)
        self.to_v = nn.Linear(context_dim, dim)
        self.to_out = nn.Linear(dim, dim)

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, dim = x.shape
        return x.view(batch, length, self.heads, dim // self.heads).transpose(1, 2)

    def forward(
        self,
        x: torch.Tensor,
        context: Optional[torch.Tensor] = None,
        key_mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        context = x if context is None else context
        q = self._split_heads(self.to_q(x))
        k = self._split_heads(self.to_k(context))
        v = self._split_heads(self.to_v(context))
        out = attention(q, k, v, key_mask).transpose(1, 2).flatten(2)
        return self.to_out(out)


class FeedForward(nn.Module):
    def __init__(self, dim: int, mult: int = 4):
        super().__init__()
        self.fc_in = nn.Linear(dim, dim * mult)
        self.fc_out = nn.Linear(dim * mult, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc_out(gelu(self.fc_in(x)))
