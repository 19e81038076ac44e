import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from rest_framework import serializers

from config.constants import SPLIT_FRACTIONS, SPLIT_NAMES, VESSEL_AREA_THRESHOLD
from dataset.api.serializers import ManifestRecordSerializer
from dataset.preprocess import min_vessel_area_ratio
from exceptions import AngioditError, ArtifactIOError, ConfigError, DatasetError
from numerics.clips import VideoClip
from pipeline.formats import read_tvid
from storage import PathLike, atomic_write_text, read_bytes
from validators import validate_fractions

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    video_path: str
    report: str
    token_ids: list[int] = field(default_factory=list)
    split: Optional[str] = None
    min_vessel_area_ratio: Optional[float] = None
    kept: bool = True
    note: str = ""


class DatasetManifest:
    """
    Ordered records persisted as one JSON object per line. Video paths are
    stored relative to the manifest's directory when possible.
    """

    def __init__(self, records: Iterable[ManifestRecord] = (), root: Optional[PathLike] = None):
        self.records = list(records)
        self.root = Path(root) if root is not None else Path(".")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def with_records(self, records: Iterable[ManifestRecord]) -> "DatasetManifest":
        return DatasetManifest(records, self.root)

    def resolve(self, record: ManifestRecord) -> Path:
        path = Path(record.video_path)
        return path if path.is_absolute() else self.root / path

    def kept(self) -> list[ManifestRecord]:
        return [record for record in self.records if record.kept]

    def in_split(self, split: str) -> list[ManifestRecord]:
        return [record for record in self.records if record.kept and record.split == split]

    def dumps(self) -> str:
        return "".join(json.dumps(asdict(record), sort_keys=True) + "\n" for record in self.records)

    def save(self, path: PathLike) -> Path:
        return atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path: PathLike) -> "DatasetManifest":
        path = Path(path)
        records = []
        for number, line in enumerate(read_bytes(path).decode("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ArtifactIOError(f"{path}:{number}: not a JSON object ({exc.msg})") from exc
            serializer = ManifestRecordSerializer(data=payload)
            if not serializer.is_valid():
                raise ArtifactIOError(f"{path}:{number}: invalid record {dict(serializer.errors)}")
            records.append(ManifestRecord(**serializer.validated_data))
        return cls(records, path.parent)


def filter_dataset(
    manifest: DatasetManifest,
    threshold: float = VESSEL_AREA_THRESHOLD,
    load_video: Callable[[Path], VideoClip] = read_tvid,
) -> DatasetManifest:
    """
    Flags records whose least-vascular frame falls below ``threshold``.
    Unreadable videos are flagged with a note; nothing is removed.
    """
    records = []
    for record in manifest:
        try:
            ratio = min_vessel_area_ratio(load_video(manifest.resolve(record)))
        except AngioditError as exc:
            logger.warning("record %s: %s", record.id, exc)
            records.append(replace(record, kept=False, min_vessel_area_ratio=None, note=str(exc)))
            continue
        records.append(replace(record, min_vessel_area_ratio=ratio, kept=ratio >= threshold, note=""))
    kept = sum(record.kept for record in records)
    logger.info("kept %d of %d records at vessel-area threshold %g", kept, len(records), threshold)
    return manifest.with_records(records)


def split_dataset(
    manifest: DatasetManifest,
    fractions: Sequence[float] = SPLIT_FRACTIONS,
    seed: int = 0,
) -> DatasetManifest:
    """
    Shuffles the distinct reports of kept records and cuts them at the
    cumulative fractions; every video follows its report.
    """
    try:
        validate_fractions(fractions)
    except serializers.ValidationError as exc:
        raise ConfigError(" ".join(str(d) for d in exc.detail), "data.split_fractions") from exc
    reports = list(dict.fromkeys(record.report for record in manifest.kept()))
    if len(reports) < len(SPLIT_NAMES):
        raise DatasetError(f"splitting needs at least {len(SPLIT_NAMES)} distinct reports, got {len(reports)}")
    order = np.random.default_rng(seed).permutation(len(reports))
    cutoffs, cumulative = [], 0.0
    for fraction in fractions[:-1]:
        cumulative += fraction
        cutoffs.append(math.floor(cumulative * len(reports) + 0.5))
    cutoffs.append(len(reports))
    assignment, start = {}, 0
    for name, stop in zip(SPLIT_NAMES, cutoffs):
        for position in order[start:stop]:
            assignment[reports[position]] = name
        start = stop
    records = [
        replace(record, split=assignment[record.report] if record.kept else None) for record in manifest
    ]
    return manifest.with_records(records)
