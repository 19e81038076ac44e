from dataclasses import dataclass

import torch

from exceptions import ShapeError


@dataclass(frozen=True)
class VideoClip:
    """
    A single video as a (channels, frames, height, width) float32 tensor.
    """

    tensor: torch.Tensor
    value_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.tensor.dim() != 4:
            raise ShapeError(
                f"VideoClip expects (C, T, H, W), got shape {tuple(self.tensor.shape)}"
            )

    @property
    def channels(self) -> int:
        return self.tensor.shape[0]

    @property
    def frames(self) -> int:
        return self.tensor.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        return self.tensor.shape[2], self.tensor.shape[3]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.tensor.shape)

    def batched(self) -> torch.Tensor:
        return self.tensor.unsqueeze(0)

    @classmethod
    def from_batch(cls, batch: torch.Tensor, index: int = 0) -> "VideoClip":
        return cls(batch[index].detach().to(torch.float32).contiguous())
