"""
The evaluation battery: generate one video per test prompt with a fixed seed
schedule, then score the videos against their real counterparts.
"""

import logging
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
import torch
from tqdm import tqdm

from config.constants import ALIGNMENT_METRIC, GUIDANCE_SCALE, RECALL_KS, SAMPLING_STEPS
from diffusion.pipeline import ModelBundle, generate
from dit.vocabulary import PromptTokens, parse_report
from evaluation.api.serializers import MetricsReportSerializer, PrivacyAuditSerializer
from evaluation.features import FeatureExtractor, as_video_batch
from evaluation.metrics import (
    GaussianFit,
    ReportSimilarity,
    frechet_distance,
    perceptual_patch_distance,
    recall_curve,
    report_similarity,
)
from evaluation.probe import (
    LesionProbe,
    alignment_gate,
    lesion_probe_alignment,
    probe_agreement,
    readback_token_ids,
)
from exceptions import AngioditError, ProbeNotTrainedError
from numerics.clips import VideoClip

logger = logging.getLogger(__name__)

# (index in the test set, prompt, seed) -> video
VideoGenerator = Callable[[int, PromptTokens, int], VideoClip]

METRIC_FAILURES = (AngioditError, np.linalg.LinAlgError, ValueError, RuntimeError)


def model_generator(
    bundle: ModelBundle, steps: int = SAMPLING_STEPS, guidance: Optional[float] = GUIDANCE_SCALE
) -> VideoGenerator:
    def run(_index: int, prompt: PromptTokens, seed: int) -> VideoClip:
        return generate(bundle, prompt, steps, guidance, torch.Generator().manual_seed(seed))

    return run


def copy_stub(real_videos: torch.Tensor) -> VideoGenerator:
    """
    Returns the real video of every prompt: the perfect-memorization bound.
    """

    def run(index: int, _prompt: PromptTokens, _seed: int) -> VideoClip:
        return VideoClip(real_videos[index].clone())

    return run


def noise_stub(shape: tuple[int, ...]) -> VideoGenerator:
    """
    Uniform noise clips of ``shape`` (C·T·H·W), seeded per prompt.
    """

    def run(_index: int, _prompt: PromptTokens, seed: int) -> VideoClip:
        return VideoClip(torch.rand(shape, generator=torch.Generator().manual_seed(seed)))

    return run


def generate_videos(
    video_generator: VideoGenerator, prompts: PromptTokens, seed: int
) -> torch.Tensor:
    clips = []
    for index in tqdm(range(prompts.ids.shape[0]), desc="generate", disable=not sys.stderr.isatty()):
        prompt = PromptTokens(prompts.ids[index], prompts.mask[index])
        clips.append(video_generator(index, prompt, seed + index).tensor)
    return torch.stack(clips)


@dataclass
class MetricsReport:
    frechet: Optional[float] = None
    perceptual_mean: Optional[float] = None
    probe_alignment: Optional[float] = None
    alignment_p_value: Optional[float] = None
    alignment_metric: str = ALIGNMENT_METRIC
    report_similarity: Optional[ReportSimilarity] = None
    recall_at: dict = field(default_factory=dict)
    average_recall: Optional[float] = None
    extractor: str = ""
    generator: str = ""
    counts: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return MetricsReportSerializer(self).data


def _prompt_labels(prompts: PromptTokens, lesions: Iterable[str]) -> torch.Tensor:
    rows = []
    for index in range(prompts.ids.shape[0]):
        found = parse_report(PromptTokens(prompts.ids[index], prompts.mask[index])).lesions
        rows.append([lesion in found for lesion in lesions])
    return torch.tensor(rows, dtype=torch.bool)


def _record_failure(report: MetricsReport, metric: str, exc: Exception) -> None:
    logger.warning("metric %s failed: %s", metric, exc)
    report.errors[metric] = str(exc)


def evaluate_run(
    real_videos: torch.Tensor,
    prompts: PromptTokens,
    video_generator: VideoGenerator,
    extractor: FeatureExtractor,
    probe: Optional[LesionProbe],
    embeddings: torch.Tensor,
    ks: Iterable[int] = RECALL_KS,
    seed: int = 0,
    generator_name: str = "model",
    config: Optional[dict] = None,
) -> MetricsReport:
    """
    Scores generated videos against ``real_videos``; a failing metric is
    reported in ``errors`` and the others still run.
    """
    real = as_video_batch(real_videos)
    generated = generate_videos(video_generator, prompts, seed)
    report = MetricsReport(
        extractor=extractor.name,
        generator=generator_name,
        counts={"videos": len(real)},
        config=config or {},
    )

    try:
        real_features = extractor.features(real)
        generated_features = extractor.features(generated)
    except METRIC_FAILURES as exc:
        for metric in ("frechet", "recall"):
            _record_failure(report, metric, exc)
        real_features = generated_features = None

    if real_features is not None:
        try:
            report.frechet = frechet_distance(GaussianFit.fit(real_features), GaussianFit.fit(generated_features))
        except METRIC_FAILURES as exc:
            _record_failure(report, "frechet", exc)
        try:
            report.recall_at, report.average_recall = recall_curve(generated_features, real_features, ks)
        except METRIC_FAILURES as exc:
            _record_failure(report, "recall", exc)

    try:
        report.perceptual_mean = perceptual_patch_distance(generated, real, extractor)
    except METRIC_FAILURES as exc:
        _record_failure(report, "perceptual", exc)

    try:
        if probe is None:
            raise ProbeNotTrainedError("no lesion probe was trained for this run")
        labels = _prompt_labels(prompts, probe.lesions)
        report.probe_alignment = lesion_probe_alignment(probe, generated, labels)
        gate = alignment_gate(probe_agreement(probe, generated, labels))
        report.alignment_p_value = gate.p_value
        report.counts["alignment_trials"] = gate.trials
        report.counts["alignment_successes"] = gate.successes
    except METRIC_FAILURES as exc:
        _record_failure(report, "probe_alignment", exc)

    try:
        if probe is None:
            raise ProbeNotTrainedError("report readback needs a trained lesion probe")
        lateralities = [
            parse_report(PromptTokens(prompts.ids[i], prompts.mask[i])).laterality for i in range(len(real))
        ]
        candidates = readback_token_ids(probe, generated, lateralities, prompts.length)
        scores = [
            report_similarity(candidate, prompts.ids[i][prompts.mask[i]].tolist(), embeddings)
            for i, candidate in enumerate(candidates)
        ]
        report.report_similarity = ReportSimilarity(
            float(np.mean([s.precision for s in scores])),
            float(np.mean([s.recall for s in scores])),
            float(np.mean([s.f1 for s in scores])),
        )
    except METRIC_FAILURES as exc:
        _record_failure(report, "report_similarity", exc)

    logger.info(
        "evaluated %d %s videos: frechet %s, alignment %s, average recall %s",
        len(real), generator_name, report.frechet, report.probe_alignment, report.average_recall,
    )
    return report


@dataclass
class PrivacyAudit:
    model: dict
    copy_stub: dict
    noise_stub: dict
    average_recall: float
    stub_order_holds: bool
    extractor: str
    videos: int

    def as_dict(self) -> dict:
        return PrivacyAuditSerializer(self).data


def audit_privacy(
    real_videos: torch.Tensor,
    prompts: PromptTokens,
    video_generator: VideoGenerator,
    extractor: FeatureExtractor,
    ks: Iterable[int] = RECALL_KS,
    seed: int = 0,
) -> PrivacyAudit:
    """
    Recall@K of generated videos against their sources, bracketed by the
    copy stub (full linkage) and the noise stub (none).
    """
    ks = list(ks)
    real = as_video_batch(real_videos)
    real_features = extractor.features(real)

    def curve(candidate: VideoGenerator) -> tuple[dict, float]:
        return recall_curve(extractor.features(generate_videos(candidate, prompts, seed)), real_features, ks)

    model, average = curve(video_generator)
    copied, _ = curve(copy_stub(real))
    noise, _ = curve(noise_stub(tuple(real.shape[1:])))
    holds = all(copied[k] >= noise[k] for k in ks)
    return PrivacyAudit(model, copied, noise, average, holds, extractor.name, len(real))
