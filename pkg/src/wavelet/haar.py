"""
Orthonormal Haar analysis/synthesis over the (t, h, w) trailing axes.

Band names list the filter applied along t, h and w in that order, so
``"LHH"`` is temporally low-passed and spatially high-passed.
"""

import math
from dataclasses import dataclass, field

import torch

from config.constants import WAVELET_LEVELS
from exceptions import ShapeError

SQRT2 = math.sqrt(2.0)
OCTANTS = ("LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH")
DETAIL_BANDS = OCTANTS[1:]
T_AXIS, H_AXIS, W_AXIS = -3, -2, -1


def haar_analysis(x: torch.Tensor, dim: int) -> tuple[torch.Tensor, torch.Tensor]:
    if x.shape[dim] % 2:
        raise ShapeError(f"Haar analysis needs an even extent on axis {dim}, got {x.shape[dim]}")
    moved = x.movedim(dim, -1)
    even, odd = moved[..., 0::2], moved[..., 1::2]
    return ((even + odd) / SQRT2).movedim(-1, dim), ((even - odd) / SQRT2).movedim(-1, dim)


def haar_synthesis(low: torch.Tensor, high: torch.Tensor, dim: int) -> torch.Tensor:
    if low.shape != high.shape:
        raise ShapeError(
            f"Haar synthesis bands disagree: {tuple(low.shape)} vs {tuple(high.shape)}"
        )
    low, high = low.movedim(dim, -1), high.movedim(dim, -1)
    even, odd = (low + high) / SQRT2, (low - high) / SQRT2
    return torch.stack([even, odd], dim=-1).flatten(-2).movedim(-1, dim)


@dataclass
class WaveletPyramid:
    """
    ``subbands[0]`` is the finest level. Every level keeps all eight octants;
    the LLL of a non-final level is the input of the next one, so only the
    detail bands plus ``top`` count as coefficients.
    """

    levels: int
    subbands: list[dict[str, torch.Tensor]] = field(default_factory=list)

    @property
    def top(self) -> torch.Tensor:
        return self.subbands[-1]["LLL"]

    def coefficients(self) -> list[torch.Tensor]:
        details = [level[name] for level in self.subbands for name in DETAIL_BANDS]
        return details + [self.top]

    def coefficient_count(self) -> int:
        return sum(c.numel() for c in self.coefficients())

    def energy(self) -> float:
        return sum(c.double().pow(2).sum().item() for c in self.coefficients())

    def map(self, fn) -> "WaveletPyramid":
        return WaveletPyramid(
            self.levels, [{name: fn(band) for name, band in level.items()} for level in self.subbands]
        )


def _analyze_octants(x: torch.Tensor) -> dict[str, torch.Tensor]:
    bands = {}
    for w_key, x_w in zip("LH", haar_analysis(x, W_AXIS)):
        for h_key, x_h in zip("LH", haar_analysis(x_w, H_AXIS)):
            for t_key, x_t in zip("LH", haar_analysis(x_h, T_AXIS)):
                bands[t_key + h_key + w_key] = x_t
    return {name: bands[name] for name in OCTANTS}


def _synthesize_octants(bands: dict[str, torch.Tensor]) -> torch.Tensor:
    by_w = {}
    for w_key in "LH":
        by_h = {
            h_key: haar_synthesis(bands["L" + h_key + w_key], bands["H" + h_key + w_key], T_AXIS)
            for h_key in "LH"
        }
        by_w[w_key] = haar_synthesis(by_h["L"], by_h["H"], H_AXIS)
    return haar_synthesis(by_w["L"], by_w["H"], W_AXIS)


def dwt3d(video: torch.Tensor, levels: int = WAVELET_LEVELS) -> WaveletPyramid:
    """
    Multi-level separable Haar decomposition of a (..., T, H, W) tensor.
    """
    if levels < 1:
        raise ShapeError(f"levels must be positive, got {levels}")
    if video.dim() < 3:
        raise ShapeError(f"dwt3d expects (..., T, H, W), got shape {tuple(video.shape)}")
    block = 2**levels
    extents = tuple(video.shape[-3:])
    if any(extent % block for extent in extents):
        raise ShapeError(
            f"extents (T, H, W) = {extents} must each be divisible by 2^{levels} = {block}"
        )
    pyramid = WaveletPyramid(levels)
    current = video
    for _ in range(levels):
        bands = _analyze_octants(current)
        pyramid.subbands.append(bands)
        current = bands["LLL"]
    return pyramid


def idwt3d(pyramid: WaveletPyramid) -> torch.Tensor:
    if len(pyramid.subbands) != pyramid.levels:
        raise ShapeError(
            f"pyramid declares {pyramid.levels} levels but holds {len(pyramid.subbands)}"
        )
    current = pyramid.top
    for depth in reversed(range(pyramid.levels)):
        bands = dict(pyramid.subbands[depth])
        for name in DETAIL_BANDS:
            if bands[name].shape != current.shape:
                raise ShapeError(
                    f"level {depth} band {name} has shape {tuple(bands[name].shape)}, "
                    f"expected {tuple(current.shape)}"
                )
        bands["LLL"] = current
        current = _synthesize_octants(bands)
    return current


def _held_axes(spatial: bool, temporal: bool) -> list[int]:
    return [axis for axis, active in ((T_AXIS, temporal), (H_AXIS, spatial), (W_AXIS, spatial)) if not active]


def lowpass_level(x: torch.Tensor, spatial: bool, temporal: bool) -> torch.Tensor:
    """
    LLL band of one ``dwt3d`` level. A held axis pairs every sample with
    itself, so its low band is the input scaled by sqrt(2).
    """
    held = _held_axes(spatial, temporal)
    for axis in held:
        x = x.repeat_interleave(2, dim=axis)
    return dwt3d(x, levels=1).top / SQRT2 ** len(held)


def synthesis_level(x: torch.Tensor, spatial: bool, temporal: bool) -> torch.Tensor:
    """
    ``idwt3d`` of one level whose detail bands are all zero; held axes keep
    their extent.
    """
    bands = {name: x if name == "LLL" else torch.zeros_like(x) for name in OCTANTS}
    y = idwt3d(WaveletPyramid(1, [bands]))
    for axis in _held_axes(spatial, temporal):
        y = y.movedim(axis, -1)[..., 0::2].movedim(-1, axis) * SQRT2
    return y


def causal_lowpass(x: torch.Tensor, spatial_levels: int, temporal_levels: int) -> torch.Tensor:
    """
    LLL chain for causal clips of any frame count.

    Before each temporal step the first frame is replicated and a trailing
    unpaired frame is dropped, so output frame j only sees input frames <= 2j
    and T frames become floor((T - 1) / 2) + 1.
    """
    for level in range(max(spatial_levels, temporal_levels)):
        temporal = level < temporal_levels
        if temporal:
            x = torch.cat([x[..., :1, :, :], x], dim=T_AXIS)
            if x.shape[T_AXIS] % 2:
                x = x[..., :-1, :, :]
        x = lowpass_level(x, level < spatial_levels, temporal)
    return x


def causal_upsample(x: torch.Tensor, spatial_levels: int, temporal_levels: int) -> torch.Tensor:
    """
    Zero-detail synthesis, the inverse geometry of ``causal_lowpass``:
    Tz frames become 2·Tz − 1 per temporal level.
    """
    for level in range(max(spatial_levels, temporal_levels)):
        temporal = level < temporal_levels
        x = synthesis_level(x, level < spatial_levels, temporal)
        if temporal:
            x = x[..., 1:, :, :]
    return x
