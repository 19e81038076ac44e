from dataclasses import dataclass
from typing import Iterator

import torch
from torch import nn


@dataclass(frozen=True)
class TileWindow:
    core: tuple[tuple[int, int], tuple[int, int]]
    padded: tuple[tuple[int, int], tuple[int, int]]


def plan_tiles(
    extents: tuple[int, int], tile: tuple[int, int], overlap: int
) -> Iterator[TileWindow]:
    """
    Row-major tiles covering ``extents``; ``padded`` widens each core by
    ``overlap`` on every side, clipped to the frame.
    """
    height, width = extents
    for y0 in range(0, height, tile[0]):
        y1 = min(y0 + tile[0], height)
        for x0 in range(0, width, tile[1]):
            x1 = min(x0 + tile[1], width)
            yield TileWindow(
                core=((y0, y1), (x0, x1)),
                padded=(
                    (max(0, y0 - overlap), min(height, y1 + overlap)),
                    (max(0, x0 - overlap), min(width, x1 + overlap)),
                ),
            )


class ActivationMeter:
    """
    Records the largest activation (in elements) produced by any submodule
    while the context is open.
    """

    def __init__(self, module: nn.Module):
        self.module = module
        self.peak = 0
        self._handles = []

    def _record(self, _module, _inputs, output):
        if isinstance(output, torch.Tensor):
            self.peak = max(self.peak, output.numel())

    def __enter__(self) -> "ActivationMeter":
        self._handles = [m.register_forward_hook(self._record) for m in self.module.modules()]
        return self

    def __exit__(self, *exc_info):
        for handle in self._handles:
            handle.remove()
        self._handles = []
