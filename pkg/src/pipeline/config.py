import copy
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from django.conf import settings

from diffusion.schedule import NoiseSchedule
from dit.models import DitConfig
from exceptions import ConfigError
from pipeline.api.serializers import PipelineConfigSerializer
from storage import PathLike, read_bytes
from wfvae.models import VaeConfig

logger = logging.getLogger(__name__)

SECTIONS = ("data", "vae", "dit", "diffusion", "train", "eval")


def flatten_errors(detail: Any, prefix: str = "") -> list[tuple[str, str]]:
    """
    DRF error detail → (dotted key path, message) pairs in document order.
    """
    if isinstance(detail, Mapping):
        pairs = []
        for key, value in detail.items():
            path = prefix if key == "non_field_errors" else ".".join(filter(None, (prefix, str(key))))
            pairs.extend(flatten_errors(value, path))
        return pairs
    if isinstance(detail, list):
        pairs = []
        for index, value in enumerate(detail):
            nested = isinstance(value, (Mapping, list))
            pairs.extend(flatten_errors(value, f"{prefix}.{index}" if nested else prefix))
        return pairs
    return [(prefix, str(detail))]


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    output_dir: Optional[str]
    data: dict
    vae: dict
    dit: dict
    diffusion: dict
    train: dict
    eval: dict

    @classmethod
    def from_validated(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        return cls(**{key: copy.deepcopy(value) for key, value in data.items()})

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            **{section: copy.deepcopy(getattr(self, section)) for section in SECTIONS},
        }

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return (self.data["frames"], *self.data["size"])

    def output_path(self, override: Optional[PathLike] = None) -> Path:
        return Path(override or self.output_dir or settings.ANGIODIT_OUTPUT_DIR)

    def vae_config(self) -> VaeConfig:
        return VaeConfig(**self.vae)

    def dit_config(self) -> DitConfig:
        _, *latent_extents = self.vae_config().latent_shape(*self.frame_shape)
        return DitConfig(
            hidden_size=self.dit["hidden_size"],
            depth=self.dit["depth"],
            heads=self.dit["heads"],
            patch_size=tuple(self.dit["patch_size"]),
            text_max_length=self.dit["text_max_length"],
            text_blocks=self.dit["text_blocks"],
            latent_channels=self.vae["latent_channels"],
            latent_extents=tuple(latent_extents),
            train_timesteps=self.diffusion["train_timesteps"],
        )

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.linear(
            self.diffusion["train_timesteps"], self.diffusion["beta_start"], self.diffusion["beta_end"]
        )


def parse_pipeline_config(document: Mapping[str, Any]) -> PipelineConfig:
    if not isinstance(document, Mapping):
        raise ConfigError("the config document must be a JSON object")
    payload = dict(document)
    for section in SECTIONS:
        payload.setdefault(section, {})
    serializer = PipelineConfigSerializer(data=payload)
    if not serializer.is_valid():
        errors = flatten_errors(serializer.errors)
        key_path, message = errors[0]
        if len(errors) > 1:
            message += " (also: " + "; ".join(f"{path}: {text}" for path, text in errors[1:]) + ")"
        raise ConfigError(message, key_path)
    return PipelineConfig.from_validated(serializer.validated_data)


def load_pipeline_config(
    path: Optional[PathLike] = None, overrides: Optional[Mapping[str, Any]] = None
) -> PipelineConfig:
    """
    Reads a JSON config document (defaults only when ``path`` is None) and
    applies top-level ``overrides`` such as the ``--seed`` flag.
    """
    document: dict = {}
    if path is not None:
        try:
            document = json.loads(read_bytes(path).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path} is not valid JSON ({exc})") from exc
        if not isinstance(document, dict):
            raise ConfigError(f"{path} must hold a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            document[key] = value
    config = parse_pipeline_config(document)
    logger.debug("resolved config from %s", path or "defaults")
    return config
