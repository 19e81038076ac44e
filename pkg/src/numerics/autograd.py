import logging
from typing import Callable, Mapping, Optional

import torch
from torch import nn

from config.constants import GRADCHECK_SAMPLES, GRADCHECK_STEP
from exceptions import ShapeError

logger = logging.getLogger(__name__)

LayerParams = dict[str, torch.Tensor]


def layer_params(module: nn.Module) -> LayerParams:
    """
    Parameter-path → tensor map; paths are the stable ``named_parameters`` names.
    """
    return dict(module.named_parameters())


def backward(loss: torch.Tensor, params: Mapping[str, torch.Tensor]) -> LayerParams:
    """
    ∂loss/∂p for every entry of ``params``; parameters outside the recorded
    graph get exact zeros.
    """
    if loss.dim() != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    grads = {name: torch.zeros_like(p) for name, p in params.items()}
    tracked = [(name, p) for name, p in params.items() if p.requires_grad]
    if not loss.requires_grad or not tracked:
        return grads
    found = torch.autograd.grad(
        loss, [p for _, p in tracked], allow_unused=True, retain_graph=False
    )
    for (name, _), grad in zip(tracked, found):
        if grad is not None:
            grads[name] = grad.detach()
    return grads


def finite_difference_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Mapping[str, torch.Tensor],
    step: float = GRADCHECK_STEP,
    samples: int = GRADCHECK_SAMPLES,
    generator: Optional[torch.Generator] = None,
) -> float:
    """
    Max relative error between ``backward`` and central differences.

    ``loss_fn`` must be a pure closure over ``params``. The error of one
    tensor is ‖analytic − numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞, 1e-8),
    measured on up to ``samples`` seeded coordinates.
    """
    generator = generator or torch.Generator().manual_seed(0)
    analytic = backward(loss_fn(), params)
    worst = 0.0
    with torch.no_grad():
        for name, tensor in params.items():
            if not tensor.is_contiguous():
                raise ShapeError(f"parameter {name} must be contiguous to be perturbed in place")
            flat = tensor.view(-1)
            count = min(samples, flat.numel())
            picked = torch.randperm(flat.numel(), generator=generator)[:count]
            numeric = []
            for index in picked.tolist():
                original = flat[index].item()
                flat[index] = original + step
                upper = loss_fn().item()
                flat[index] = original - step
                lower = loss_fn().item()
                flat[index] = original
                numeric.append((upper - lower) / (2 * step))
            expected = analytic[name].reshape(-1)[picked].double()
            measured = torch.tensor(numeric, dtype=torch.float64)
            scale = max(expected.abs().max().item(), measured.abs().max().item(), 1e-8)
            error = (expected - measured).abs().max().item() / scale
            logger.debug("gradcheck %s: relative error %.3e", name, error)
            worst = max(worst, error)
    return worst
