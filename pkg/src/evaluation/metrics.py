import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch

from config.constants import COVARIANCE_EPS, RECALL_KS
from evaluation.features import FeatureExtractor, VideoBatch, as_video_batch
from exceptions import ShapeError

logger = logging.getLogger(__name__)


def _as_matrix(features) -> np.ndarray:
    values = features.detach().cpu().numpy() if isinstance(features, torch.Tensor) else np.asarray(features)
    values = values.astype(np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected an N·D feature matrix, got shape {values.shape}")
    return values


def _symmetric_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = np.linalg.eigh((matrix + matrix.T) / 2)
    return (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        dim = self.mean.shape[0]
        if self.mean.ndim != 1 or self.covariance.shape != (dim, dim):
            raise ShapeError(
                f"mean {self.mean.shape} and covariance {self.covariance.shape} do not describe one Gaussian"
            )

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def of(cls, mean: Sequence[float], covariance: Sequence[Sequence[float]]) -> "GaussianFit":
        return cls(np.asarray(mean, dtype=np.float64), np.asarray(covariance, dtype=np.float64))

    @classmethod
    def fit(cls, features, eps: float = COVARIANCE_EPS) -> "GaussianFit":
        """
        Sample mean and covariance; fewer than D + 1 samples cannot give a
        full-rank covariance, so ``eps·I`` is added in that case.
        """
        values = _as_matrix(features)
        count, dim = values.shape
        if count == 0:
            raise ShapeError("cannot fit a Gaussian to zero samples")
        mean = values.mean(axis=0)
        if count > 1:
            covariance = np.atleast_2d(np.cov(values, rowvar=False))
        else:
            covariance = np.zeros((dim, dim))
        if count < dim + 1:
            logger.debug("regularizing a %d-dim covariance fitted from %d samples", dim, count)
            covariance = covariance + eps * np.eye(dim)
        return cls(mean, covariance)


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    """
    ‖μa − μb‖² + Tr(Σa + Σb − 2(Σa^½ Σb Σa^½)^½), clamped at zero.
    """
    if a.dim != b.dim:
        raise ShapeError(f"Gaussian fits have dimensions {a.dim} and {b.dim}")
    root_a = _symmetric_sqrt(a.covariance)
    cross = root_a @ b.covariance @ root_a
    eigenvalues = np.linalg.eigvalsh((cross + cross.T) / 2)
    trace_root = np.sqrt(np.clip(eigenvalues, 0.0, None)).sum()
    delta = a.mean - b.mean
    distance = delta @ delta + np.trace(a.covariance) + np.trace(b.covariance) - 2 * trace_root
    return max(float(distance), 0.0)


def _unit_channels(maps: torch.Tensor) -> torch.Tensor:
    norm = maps.pow(2).sum(dim=1, keepdim=True).sqrt()
    return maps / (norm + 1e-10)


def perceptual_patch_distance(x: VideoBatch, y: VideoBatch, extractor: FeatureExtractor) -> float:
    """
    Per frame: channel-normalized maps from every extractor layer, squared
    differences summed over channels and averaged over positions, summed over
    layers; averaged over frames and clips.
    """
    x, y = as_video_batch(x), as_video_batch(y)
    if x.shape != y.shape:
        raise ShapeError(f"clips differ in shape: {tuple(x.shape)} vs {tuple(y.shape)}")
    n, c, t, h, w = x.shape
    frames_x = x.permute(0, 2, 1, 3, 4).reshape(n * t, c, h, w)
    frames_y = y.permute(0, 2, 1, 3, 4).reshape(n * t, c, h, w)
    total = torch.zeros(n * t, dtype=torch.float64)
    for map_x, map_y in zip(extractor.layers(frames_x), extractor.layers(frames_y)):
        diff = (_unit_channels(map_x.double()) - _unit_channels(map_y.double())).pow(2).sum(dim=1)
        total += diff.mean(dim=(1, 2))
    return float(total.mean())


@dataclass(frozen=True)
class ReportSimilarity:
    precision: float
    recall: float
    f1: float


def report_similarity(
    candidate: Sequence[int], reference: Sequence[int], embeddings: torch.Tensor
) -> ReportSimilarity:
    """
    Greedy max-cosine token matching between two token id sequences.
    """
    candidate, reference = list(candidate), list(reference)
    if not candidate or not reference:
        raise ShapeError("report similarity needs non-empty candidate and reference token sequences")
    table = embeddings.detach().to(torch.float64)
    table = table / table.norm(dim=1, keepdim=True).clamp_min(1e-12)
    similarity = table[candidate] @ table[reference].T
    recall = similarity.max(dim=0).values.mean().item()
    precision = similarity.max(dim=1).values.mean().item()
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return ReportSimilarity(precision, recall, f1)


def _cosine_matrix(gen: np.ndarray, gt: np.ndarray) -> np.ndarray:
    gen = gen / np.maximum(np.linalg.norm(gen, axis=1, keepdims=True), 1e-12)
    gt = gt / np.maximum(np.linalg.norm(gt, axis=1, keepdims=True), 1e-12)
    return gen @ gt.T


def retrieval_ranks(gen_features, gt_features) -> np.ndarray:
    """
    Zero-based rank of each generated row's true counterpart among all
    ground-truth rows; ties go to the lower index.
    """
    gen, gt = _as_matrix(gen_features), _as_matrix(gt_features)
    if gen.shape != gt.shape:
        raise ShapeError(f"generated {gen.shape} and ground-truth {gt.shape} features must pair up row by row")
    similarity = _cosine_matrix(gen, gt)
    own = np.diag(similarity)[:, None]
    count = similarity.shape[0]
    earlier = np.arange(count)[None, :] < np.arange(count)[:, None]
    return ((similarity > own) | ((similarity == own) & earlier)).sum(axis=1)


def recall_at_k(gen_features, gt_features, k: int) -> float:
    ranks = retrieval_ranks(gen_features, gt_features)
    if not 1 <= k <= len(ranks):
        raise ShapeError(f"recall@{k} needs 1 <= k <= N, got N = {len(ranks)}")
    return float((ranks < k).mean())


def recall_curve(gen_features, gt_features, ks: Iterable[int] = RECALL_KS) -> tuple[dict[int, float], float]:
    """
    recall@k for every configured k and their mean (average recall).
    """
    ks = list(ks)
    if not ks:
        raise ShapeError("at least one k is required")
    ranks = retrieval_ranks(gen_features, gt_features)
    recalls = {}
    for k in ks:
        if not 1 <= k <= len(ranks):
            raise ShapeError(f"recall@{k} needs 1 <= k <= N, got N = {len(ranks)}")
        recalls[k] = float((ranks < k).mean())
    return recalls, float(np.mean(list(recalls.values())))
