"""
Corpus-level pipelines over the manifest: rendering a synthetic corpus,
standardizing its frame counts and loading a split for training.
"""

import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from config.constants import FULL_FRAME_COUNT, RAW_FRAMES_RANGE, TEXT_MAX_LENGTH
from dataset.manifest import DatasetManifest, ManifestRecord
from dataset.preprocess import standardize_frames
from dataset.reports import case_to_report
from dataset.synth import LESION_RATE, SyntheticCase, random_case, synth_render
from dit.vocabulary import LESIONS, PromptTokens
from exceptions import AngioditError, ConfigError, DatasetError
from pipeline.formats import read_tvid, write_tvid
from storage import PathLike

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
VIDEO_DIR = "videos"


def case_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def case_lesions(
    index: int, pool: Sequence[str], balanced: bool, drawn: frozenset
) -> frozenset:
    """
    Balanced corpora cycle through ``pool`` with one lesion per case;
    otherwise the drawn lesions are restricted to ``pool``.
    """
    if balanced:
        return frozenset({pool[index % len(pool)]})
    return drawn & frozenset(pool)


def corpus_case(
    seed: int,
    index: int,
    lesion_pool: Sequence[str] = LESIONS,
    balanced: bool = False,
    lesion_rate: float = LESION_RATE,
) -> SyntheticCase:
    drawn = random_case(case_seed(seed, index), lesion_rate=lesion_rate)
    # Redrawing with fixed lesions replays the same generator, so only the lesion set changes.
    return random_case(drawn.seed, case_lesions(index, lesion_pool, balanced, drawn.lesions), lesion_rate)


def synthesize_corpus(
    directory: PathLike,
    count: int,
    seed: int,
    size: tuple[int, int],
    frames_range: tuple[int, int] = RAW_FRAMES_RANGE,
    lesion_pool: Sequence[str] = LESIONS,
    balanced: bool = False,
    lesion_rate: float = LESION_RATE,
    max_length: int = TEXT_MAX_LENGTH,
) -> DatasetManifest:
    """
    Renders ``count`` cases with raw frame counts drawn from ``frames_range``
    and writes them with their manifest under ``directory``.
    """
    unknown = sorted(set(lesion_pool) - set(LESIONS))
    if unknown:
        raise ConfigError(f"unknown lesions {unknown}", "data.lesions")
    if balanced and not lesion_pool:
        raise ConfigError("a balanced corpus needs at least one lesion", "data.lesions")
    low, high = frames_range
    if not 2 <= low <= high:
        raise ConfigError(f"raw frame range must satisfy 2 <= low <= high, got {frames_range}", "data.raw_frames")

    directory = Path(directory)
    rng = np.random.default_rng(seed)
    records = []
    for index in tqdm(range(count), desc="synth", disable=not sys.stderr.isatty()):
        frames = int(rng.integers(low, high + 1))
        case = corpus_case(seed, index, lesion_pool, balanced, lesion_rate)
        text, tokens = case_to_report(case, max_length)
        record_id = f"case_{index:05d}"
        relative = f"{VIDEO_DIR}/{record_id}.tvid"
        write_tvid(directory / relative, synth_render(case, frames, size))
        records.append(
            ManifestRecord(
                id=record_id, video_path=relative, report=text, token_ids=tokens.ids.tolist()
            )
        )
    manifest = DatasetManifest(records, directory)
    manifest.save(directory / MANIFEST_NAME)
    logger.info("rendered %d cases into %s", count, directory)
    return manifest


def standardize_corpus(
    manifest: DatasetManifest, directory: PathLike, target: int = FULL_FRAME_COUNT
) -> DatasetManifest:
    """
    Writes a ``target``-frame copy of every kept video under ``directory``.
    Records whose video cannot be read are flagged instead.
    """
    directory = Path(directory)
    records = []
    for record in tqdm(manifest, desc="preprocess", disable=not sys.stderr.isatty()):
        if not record.kept:
            records.append(record)
            continue
        try:
            clip = standardize_frames(read_tvid(manifest.resolve(record)), target)
        except AngioditError as exc:
            logger.warning("record %s: %s", record.id, exc)
            records.append(replace(record, kept=False, note=str(exc)))
            continue
        relative = f"{VIDEO_DIR}/{record.id}.tvid"
        write_tvid(directory / relative, clip)
        records.append(replace(record, video_path=relative))
    return DatasetManifest(records, directory)


def load_split(
    manifest: DatasetManifest, split: Optional[str], limit: Optional[int] = None
) -> tuple[list[ManifestRecord], torch.Tensor, PromptTokens]:
    """
    Loads the kept videos of ``split`` (all kept videos when None) as an
    N·C·T·H·W batch with their stacked prompt tokens.
    """
    records = manifest.kept() if split is None else manifest.in_split(split)
    if limit is not None:
        records = records[:limit]
    if not records:
        raise DatasetError(f"no kept records in split {split!r}")
    videos = torch.stack([read_tvid(manifest.resolve(record)).tensor for record in records])
    tokens = PromptTokens.stack([PromptTokens.from_ids(record.token_ids) for record in records])
    return records, videos, tokens
