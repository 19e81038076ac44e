"""
On-disk formats: ``.tvid`` videos, checkpoints and PGM frame dumps.

Every integer is a little-endian u32 and every real a little-endian float32.
"""

import io
import json
import logging
import math
import struct
from pathlib import Path
from typing import Any, Mapping, Union

import numpy as np
import torch
from PIL import Image

from config.constants import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    TVID_DTYPE_FLOAT32,
    TVID_MAGIC,
    TVID_VERSION,
)
from exceptions import ArtifactIOError, ShapeError
from numerics.clips import VideoClip
from storage import PathLike, atomic_write_bytes, read_bytes

logger = logging.getLogger(__name__)

TVID_HEADER = struct.Struct("<4s7I")
CHECKPOINT_PREAMBLE = struct.Struct("<4s2I")
FLOAT32_LE = np.dtype("<f4")


def _as_batch(video: Union[VideoClip, torch.Tensor]) -> torch.Tensor:
    tensor = video.batched() if isinstance(video, VideoClip) else video
    if tensor.dim() == 4:
        tensor = tensor.unsqueeze(0)
    if tensor.dim() != 5:
        raise ShapeError(f"expected a clip or an N·C·T·H·W batch, got {tuple(tensor.shape)}")
    return tensor


def encode_tvid(video: Union[VideoClip, torch.Tensor]) -> bytes:
    batch = _as_batch(video)
    header = TVID_HEADER.pack(TVID_MAGIC, TVID_VERSION, *batch.shape, TVID_DTYPE_FLOAT32)
    body = batch.detach().to(torch.float32).contiguous().numpy().astype(FLOAT32_LE, copy=False)
    return header + body.tobytes()


def decode_tvid(data: bytes, source: str = "<bytes>") -> torch.Tensor:
    """
    Parses a .tvid payload into an N·C·T·H·W float32 tensor.
    """
    if len(data) < TVID_HEADER.size:
        raise ArtifactIOError(
            f"{source}: truncated header, expected {TVID_HEADER.size} bytes, got {len(data)}"
        )
    magic, version, *extents, dtype = TVID_HEADER.unpack_from(data)
    if magic != TVID_MAGIC:
        raise ArtifactIOError(f"{source}: offset 0: bad magic {magic!r}, expected {TVID_MAGIC!r}")
    if version != TVID_VERSION:
        raise ArtifactIOError(f"{source}: offset 4: unsupported version {version}")
    for index, extent in enumerate(extents):
        if extent == 0:
            raise ArtifactIOError(f"{source}: offset {8 + 4 * index}: zero extent in {tuple(extents)}")
    if dtype != TVID_DTYPE_FLOAT32:
        raise ArtifactIOError(f"{source}: offset 28: unsupported dtype code {dtype}")
    expected = int(np.prod(extents)) * FLOAT32_LE.itemsize
    actual = len(data) - TVID_HEADER.size
    if actual != expected:
        raise ArtifactIOError(
            f"{source}: offset {TVID_HEADER.size}: body should be {expected} bytes, got {actual}"
        )
    body = np.frombuffer(data, dtype=FLOAT32_LE, offset=TVID_HEADER.size)
    return torch.from_numpy(body.astype(np.float32).reshape(extents))


def write_tvid(path: PathLike, video: Union[VideoClip, torch.Tensor]) -> Path:
    return atomic_write_bytes(path, encode_tvid(video))


def read_tvid_batch(path: PathLike) -> torch.Tensor:
    return decode_tvid(read_bytes(path), str(path))


def read_tvid(path: PathLike) -> VideoClip:
    batch = read_tvid_batch(path)
    if batch.shape[0] != 1:
        raise ArtifactIOError(f"{path}: holds {batch.shape[0]} clips, expected one")
    return VideoClip.from_batch(batch)


def encode_checkpoint(state: Mapping[str, torch.Tensor], config: Mapping[str, Any]) -> bytes:
    """
    Preamble (magic, version, header length), a JSON header with the config
    echo and the parameter directory, then every parameter's float32 bytes
    in directory order.
    """
    directory, chunks, offset = {}, [], 0
    for name in sorted(state):
        values = state[name].detach().to(torch.float32).contiguous().numpy().astype(FLOAT32_LE, copy=False)
        raw = values.tobytes()
        directory[name] = {"shape": list(values.shape), "offset": offset, "length": len(raw)}
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"version": CHECKPOINT_VERSION, "config": config, "parameters": directory}, sort_keys=True
    ).encode("utf-8")
    preamble = CHECKPOINT_PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header))
    return preamble + header + b"".join(chunks)


def _directory(header: Any, source: str, start: int) -> list[tuple[str, int, int, list[int]]]:
    """
    Parameter entries as (name, offset, length, shape), sorted by offset.
    """
    parameters = header.get("parameters", {}) if isinstance(header, dict) else None
    if not isinstance(parameters, dict):
        raise ArtifactIOError(f"{source}: offset {start}: header has no parameter directory")
    entries = []
    for name, entry in parameters.items():
        try:
            offset, length, shape = entry["offset"], entry["length"], list(entry["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ArtifactIOError(f"{source}: offset {start}: malformed entry for parameter {name!r}") from exc
        if not all(isinstance(v, int) and v >= 0 for v in (offset, length, *shape)):
            raise ArtifactIOError(f"{source}: offset {start}: parameter {name!r} has a negative or non-integer field")
        if length != 4 * math.prod(shape):
            raise ArtifactIOError(
                f"{source}: offset {start}: parameter {name!r} declares {length} bytes for shape {shape}"
            )
        entries.append((name, offset, length, shape))
    return sorted(entries, key=lambda item: item[1])


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> tuple[dict[str, torch.Tensor], dict]:
    if len(data) < CHECKPOINT_PREAMBLE.size:
        raise ArtifactIOError(f"{source}: truncated checkpoint preamble ({len(data)} bytes)")
    magic, version, header_length = CHECKPOINT_PREAMBLE.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise ArtifactIOError(f"{source}: offset 0: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise ArtifactIOError(f"{source}: offset 4: unsupported checkpoint version {version}")
    start = CHECKPOINT_PREAMBLE.size
    body_start = start + header_length
    if len(data) < body_start:
        raise ArtifactIOError(
            f"{source}: offset {start}: header should be {header_length} bytes, "
            f"got {len(data) - start}"
        )
    try:
        header = json.loads(data[start:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactIOError(f"{source}: offset {start}: unreadable header ({exc})") from exc
    body = memoryview(data)[body_start:]
    state, covered = {}, 0
    for name, offset, length, shape in _directory(header, source, start):
        if offset != covered or offset + length > len(body):
            raise ArtifactIOError(
                f"{source}: offset {body_start + offset}: parameter {name!r} overlaps or "
                f"exceeds the body ({len(body)} bytes)"
            )
        values = np.frombuffer(body, dtype=FLOAT32_LE, count=length // 4, offset=offset)
        state[name] = torch.from_numpy(values.astype(np.float32).reshape(shape))
        covered = offset + length
    if covered != len(body):
        raise ArtifactIOError(f"{source}: {len(body) - covered} trailing bytes after the last parameter")
    return state, header


def save_checkpoint(path: PathLike, state: Mapping[str, torch.Tensor], config: Mapping[str, Any]) -> Path:
    return atomic_write_bytes(path, encode_checkpoint(state, config))


def load_checkpoint(path: PathLike) -> tuple[dict[str, torch.Tensor], dict]:
    return decode_checkpoint(read_bytes(path), str(path))


def quantize(frame: torch.Tensor) -> tuple[np.ndarray, int]:
    """
    round-half-up(v·255) as uint8; returns the bytes and how many pixels
    had to be clamped into [0, 1] first.
    """
    values = frame.detach().to(torch.float64).numpy()
    clamped = int(np.count_nonzero((values < 0) | (values > 1) | np.isnan(values)))
    values = np.clip(np.nan_to_num(values, nan=0.0), 0.0, 1.0)
    return np.floor(values * 255 + 0.5).astype(np.uint8), clamped


def export_frames(video: Union[VideoClip, torch.Tensor], directory: PathLike) -> tuple[list[Path], int]:
    """
    One binary PGM per frame of the first channel, ``frame_000.pgm`` onward.
    Returns the written paths and the clamped-pixel count.
    """
    clip = video if isinstance(video, VideoClip) else VideoClip(video)
    directory = Path(directory)
    paths, clamped = [], 0
    for index in range(clip.frames):
        pixels, count = quantize(clip.tensor[0, index])
        clamped += count
        buffer = io.BytesIO()
        Image.fromarray(pixels).save(buffer, format="PPM")
        paths.append(atomic_write_bytes(directory / f"frame_{index:03d}.pgm", buffer.getvalue()))
    if clamped:
        logger.warning("clamped %d out-of-range pixels while exporting %s", clamped, directory)
    return paths, clamped


def read_pgm(path: PathLike) -> torch.Tensor:
    data = read_bytes(path)
    try:
        with Image.open(io.BytesIO(data)) as image:
            pixels = np.asarray(image.convert("L"), dtype=np.float32)
    except OSError as exc:
        raise ArtifactIOError(f"{path}: not a readable PGM ({exc})") from exc
    return torch.from_numpy(pixels / 255.0)
