import logging

import torch

from dataset.corpus import load_split
from diffusion.pipeline import ModelBundle
from diffusion.training import encode_latents, evaluate_dit, latent_scale_for, train_dit
from exceptions import ConfigError, DatasetError
from pipeline.checkpoints import BUNDLE_CHECKPOINT, VAE_CHECKPOINT, load_vae, save_bundle
from pipeline.management.base import PipelineCommand, corpus_manifest

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Train the text-conditioned denoiser on latents of the trained autoencoder."
    pipeline_name = "train-dit"

    def execute_pipeline(self, config, out, options):
        vae = load_vae(out / VAE_CHECKPOINT)
        if vae.config != config.vae_config():
            raise ConfigError("does not match the autoencoder checkpoint; retrain it first", "vae")
        manifest = corpus_manifest(out)
        _, videos, prompts = load_split(manifest, "train")
        train = config.train
        bundle = ModelBundle.build(config.vae_config(), config.dit_config(), config.schedule())
        bundle.vae = vae
        latents = encode_latents(vae, videos, train["batch_size"])
        bundle.latent_scale = latent_scale_for(latents)
        generator = torch.Generator().manual_seed(config.seed)
        history = train_dit(
            bundle,
            latents,
            prompts,
            train["dit_steps"],
            train["batch_size"],
            train["dit_lr"],
            train["p_uncond"],
            generator,
            train["log_every"],
        )
        try:
            _, val_videos, val_prompts = load_split(manifest, "val")
            val_latents = encode_latents(vae, val_videos, train["batch_size"])
            validation = evaluate_dit(
                bundle, val_latents, val_prompts, torch.Generator().manual_seed(config.seed), train["batch_size"]
            )
        except DatasetError as exc:
            logger.warning("no validation loss: %s", exc)
            validation = None
        path = save_bundle(out / BUNDLE_CHECKPOINT, bundle, config.as_dict())
        return {
            "videos": len(videos),
            "steps": len(history),
            "final_loss": history[-1] if history else None,
            "validation_loss": validation,
            "latent_scale": bundle.latent_scale,
            "checkpoint": self.relative(out, path),
        }
