"""
Model persistence on top of the checkpoint format.

A bundle checkpoint stores the autoencoder, the denoiser and the text encoder
under the ``vae.``, ``dit.`` and ``text.`` prefixes; its header echoes the
architecture, the noise schedule, the latent scale and the run config.
"""

import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Mapping, Optional

import torch
from torch import nn

from diffusion.pipeline import ModelBundle
from diffusion.schedule import NoiseSchedule
from dit.models import DitConfig
from exceptions import ArtifactIOError
from pipeline.formats import load_checkpoint, save_checkpoint
from storage import PathLike
from wfvae.models import VaeConfig, WaveletFlowVAE

logger = logging.getLogger(__name__)

VAE_CHECKPOINT = "vae.ckpt"
BUNDLE_CHECKPOINT = "model.ckpt"
PREFIXES = {"vae": "vae.", "dit": "dit.", "text_encoder": "text."}


def _config_echo(config: Any) -> dict:
    return {key: list(value) if isinstance(value, tuple) else value for key, value in asdict(config).items()}


def _dit_config(echo: Mapping[str, Any]) -> DitConfig:
    return DitConfig(**{key: tuple(value) if isinstance(value, list) else value for key, value in echo.items()})


def _load_into(module: nn.Module, state: Mapping[str, torch.Tensor], source: str) -> None:
    expected = module.state_dict()
    missing = sorted(set(expected) - set(state))
    unexpected = sorted(set(state) - set(expected))
    if missing or unexpected:
        raise ArtifactIOError(f"{source}: parameter mismatch, missing {missing}, unexpected {unexpected}")
    for name, tensor in state.items():
        if tuple(tensor.shape) != tuple(expected[name].shape):
            raise ArtifactIOError(
                f"{source}: parameter {name!r} has shape {tuple(tensor.shape)}, "
                f"expected {tuple(expected[name].shape)}"
            )
    module.load_state_dict(dict(state))


def _header_config(header: Mapping[str, Any], source: str, *keys: str) -> dict:
    config = header.get("config", {})
    for key in keys:
        if key not in config:
            raise ArtifactIOError(f"{source}: header has no {key!r} config")
    return config


def save_vae(path: PathLike, vae: WaveletFlowVAE, run_config: Optional[Mapping[str, Any]] = None) -> Path:
    header = {"vae": _config_echo(vae.config), "run": dict(run_config or {})}
    path = save_checkpoint(path, vae.state_dict(), header)
    logger.info("saved autoencoder to %s", path)
    return path


def load_vae(path: PathLike) -> WaveletFlowVAE:
    state, header = load_checkpoint(path)
    config = _header_config(header, str(path), "vae")
    vae = WaveletFlowVAE(VaeConfig(**config["vae"]))
    _load_into(vae, state, str(path))
    return vae.eval()


def save_bundle(path: PathLike, bundle: ModelBundle, run_config: Optional[Mapping[str, Any]] = None) -> Path:
    state = {}
    for attribute, prefix in PREFIXES.items():
        for name, tensor in getattr(bundle, attribute).state_dict().items():
            state[prefix + name] = tensor
    betas = bundle.schedule.betas
    header = {
        "vae": _config_echo(bundle.vae.config),
        "dit": _config_echo(bundle.dit.config),
        "schedule": {
            "train_timesteps": bundle.schedule.train_timesteps,
            "beta_start": float(betas[0]),
            "beta_end": float(betas[-1]),
        },
        "latent_scale": bundle.latent_scale,
        "run": dict(run_config or {}),
    }
    path = save_checkpoint(path, state, header)
    logger.info("saved model bundle to %s", path)
    return path


def load_bundle(path: PathLike) -> ModelBundle:
    state, header = load_checkpoint(path)
    source = str(path)
    config = _header_config(header, source, "vae", "dit", "schedule")
    schedule = NoiseSchedule.linear(**config["schedule"])
    bundle = ModelBundle.build(VaeConfig(**config["vae"]), _dit_config(config["dit"]), schedule)
    bundle.latent_scale = float(config.get("latent_scale", 1.0))
    for attribute, prefix in PREFIXES.items():
        part = {name[len(prefix) :]: tensor for name, tensor in state.items() if name.startswith(prefix)}
        _load_into(getattr(bundle, attribute), part, source)
    stray = [name for name in state if not name.startswith(tuple(PREFIXES.values()))]
    if stray:
        raise ArtifactIOError(f"{source}: unexpected parameters {sorted(stray)}")
    return bundle.eval()
