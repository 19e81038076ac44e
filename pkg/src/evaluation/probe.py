"""
Lesion probe: a small convolutional multi-label classifier trained on real
renderer videos and used to read lesions back out of generated ones.
"""

import logging
import sys
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import torch
import torch.nn.functional as F
from scipy.stats import binomtest
from torch import nn
from tqdm import tqdm

from config.constants import ADAM_BETAS, ALIGNMENT_GATE_P, PROBE_THRESHOLD, TEXT_MAX_LENGTH
from dataset.reports import report_text
from dit.vocabulary import LATERALITIES, LESIONS, VOCABULARY, parse_report
from evaluation.features import VideoBatch, as_video_batch
from exceptions import ConfigError, ProbeNotTrainedError, ShapeError
from numerics.layers import CausalConv3d, ensure_finite, gelu

logger = logging.getLogger(__name__)


class LesionProbe(nn.Module):
    def __init__(self, lesions: Sequence[str] = LESIONS, width: int = 16):
        super().__init__()
        self.lesions = tuple(lesions)
        # Input channels: the clip and its frame-to-frame change.
        self.conv_in = CausalConv3d(2, width, stride=(1, 2, 2))
        self.conv_mid = CausalConv3d(width, width, stride=(1, 2, 2))
        self.head = nn.Linear(2 * width, len(self.lesions))
        self.trained = False

    def forward(self, videos: torch.Tensor) -> torch.Tensor:
        change = torch.cat([torch.zeros_like(videos[:, :, :1]), videos.diff(dim=2)], dim=2)
        h = gelu(self.conv_in(torch.cat([videos, change], dim=1)))
        h = gelu(self.conv_mid(h))
        pooled = torch.cat([h.amax(dim=(2, 3, 4)), h.mean(dim=(2, 3, 4))], dim=1)
        return self.head(pooled)

    @torch.no_grad()
    def predict(self, videos: VideoBatch, threshold: float = PROBE_THRESHOLD) -> torch.Tensor:
        if not self.trained:
            raise ProbeNotTrainedError("the lesion probe has not been trained on real videos")
        self.eval()
        return torch.sigmoid(self(as_video_batch(videos))) > threshold


def lesion_labels(reports: Iterable[str], lesions: Sequence[str] = LESIONS) -> torch.Tensor:
    parsed = [parse_report(report).lesions for report in reports]
    return torch.tensor([[lesion in found for lesion in lesions] for found in parsed], dtype=torch.bool)


def train_probe(
    videos: torch.Tensor,
    labels: torch.Tensor,
    lesions: Sequence[str] = LESIONS,
    steps: int = 300,
    batch_size: int = 16,
    lr: float = 3e-3,
    generator: Optional[torch.Generator] = None,
) -> LesionProbe:
    """
    Fits a probe on real videos (N·1·T·H·W) with their N·L lesion labels.
    """
    if labels.shape != (len(videos), len(lesions)):
        raise ShapeError(f"labels {tuple(labels.shape)} do not match {len(videos)} videos × {len(lesions)} lesions")
    if steps < 1:
        raise ConfigError("must be at least 1", "eval.probe_steps")
    generator = generator or torch.Generator().manual_seed(0)
    # Initial weights come from ``generator``; the global RNG is left untouched.
    init_seed = int(torch.randint(2**31 - 1, (1,), generator=generator))
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(init_seed)
        probe = LesionProbe(lesions)
    optimizer = torch.optim.Adam(probe.parameters(), lr=lr, betas=ADAM_BETAS)
    targets = labels.float()
    probe.train()
    progress = tqdm(range(steps), desc="probe", disable=not sys.stderr.isatty())
    for _ in progress:
        index = torch.randint(len(videos), (min(batch_size, len(videos)),), generator=generator)
        loss = F.binary_cross_entropy_with_logits(probe(videos[index]), targets[index])
        ensure_finite(loss, "probe loss")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
    probe.eval()
    probe.trained = True
    logger.info("lesion probe trained for %d steps, final loss %.4f", steps, loss.item())
    return probe


def probe_agreement(probe: LesionProbe, videos: VideoBatch, labels: torch.Tensor) -> torch.Tensor:
    predicted = probe.predict(videos)
    if predicted.shape != labels.shape:
        raise ShapeError(f"probe predicts {tuple(predicted.shape)} but labels are {tuple(labels.shape)}")
    return predicted == labels


def per_lesion_accuracy(probe: LesionProbe, videos: VideoBatch, labels: torch.Tensor) -> dict[str, float]:
    agreement = probe_agreement(probe, videos, labels).float().mean(dim=0)
    return dict(zip(probe.lesions, agreement.tolist()))


def lesion_probe_alignment(probe: LesionProbe, videos: VideoBatch, prompt_labels: torch.Tensor) -> float:
    """
    Mean per-lesion agreement between the probe's reading of each video and
    the lesion set its prompt asked for.
    """
    return probe_agreement(probe, videos, prompt_labels).float().mean().item()


@dataclass(frozen=True)
class GateResult:
    successes: int
    trials: int
    chance: float
    p_value: float
    passed: bool


def alignment_gate(
    agreement: torch.Tensor, chance: float = 0.5, alpha: float = ALIGNMENT_GATE_P
) -> GateResult:
    """
    One-sided binomial test that agreements exceed ``chance``.
    """
    successes, trials = int(agreement.sum()), agreement.numel()
    if trials == 0:
        raise ShapeError("the alignment gate needs at least one trial")
    p_value = binomtest(successes, trials, chance, alternative="greater").pvalue
    return GateResult(successes, trials, chance, float(p_value), bool(p_value < alpha))


def readback_token_ids(
    probe: LesionProbe, videos: VideoBatch, lateralities: Sequence[Optional[str]], max_length: int = TEXT_MAX_LENGTH
) -> list[list[int]]:
    """
    Reports written from the probe's reading of each video, as real token ids.
    """
    predicted = probe.predict(videos)
    reports = []
    for laterality, row in zip(lateralities, predicted.tolist()):
        found = {lesion for lesion, present in zip(probe.lesions, row) if present}
        tokens = VOCABULARY.encode(report_text(laterality or LATERALITIES[0], found), max_length)
        reports.append(tokens.ids[tokens.mask].tolist())
    return reports
