import math
from typing import Union

import torch

from config.constants import FULL_FRAME_COUNT, VESSEL_MARGIN
from exceptions import ShapeError
from numerics.clips import VideoClip


def interpolate_frames(first: torch.Tensor, second: torch.Tensor, t: float) -> torch.Tensor:
    """
    Convex blend (1 − t)·first + t·second.
    """
    return (1 - t) * first + t * second


def standardize_frames(
    video: Union[VideoClip, torch.Tensor], target: int = FULL_FRAME_COUNT
) -> VideoClip:
    """
    Brings a clip to exactly ``target`` frames.

    Longer clips keep their last ``target`` frames in forward order. Shorter
    ones are resampled at p_j = j·(N − 1)/(target − 1) by blending the two
    frames around each position.
    """
    clip = video if isinstance(video, VideoClip) else VideoClip(video)
    count = clip.frames
    if count < 2:
        raise ShapeError(f"standardizing needs at least 2 frames, got {count}")
    if target < 2:
        raise ShapeError(f"target frame count must be at least 2, got {target}")
    if count == target:
        return clip
    if count > target:
        return VideoClip(clip.tensor[:, count - target :].contiguous(), clip.value_range)

    source = clip.tensor.to(torch.float64)
    frames = []
    for j in range(target):
        position = j * (count - 1) / (target - 1)
        i = math.floor(position)
        t = position - i
        if i >= count - 1:
            i, t = count - 2, 1.0
        frames.append(interpolate_frames(source[:, i], source[:, i + 1], t))
    resampled = torch.stack(frames, dim=1).to(clip.tensor.dtype)
    return VideoClip(resampled, clip.value_range)


def vessel_area_ratio(frame: torch.Tensor, margin: float = VESSEL_MARGIN) -> float:
    """
    Fraction of pixels brighter than the frame median by more than ``margin``.
    """
    if frame.dim() != 2:
        raise ShapeError(f"expected one H·W frame, got shape {tuple(frame.shape)}")
    if frame.numel() == 0:
        return 0.0
    background = torch.median(frame)
    return (frame > background + margin).sum().item() / frame.numel()


def min_vessel_area_ratio(video: Union[VideoClip, torch.Tensor]) -> float:
    clip = video if isinstance(video, VideoClip) else VideoClip(video)
    return min(
        vessel_area_ratio(clip.tensor[channel, index])
        for channel in range(clip.channels)
        for index in range(clip.frames)
    )
