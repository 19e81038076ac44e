import logging

import torch

from dataset.corpus import load_split
from exceptions import DatasetError
from pipeline.checkpoints import VAE_CHECKPOINT, save_vae
from pipeline.management.base import PipelineCommand, corpus_manifest
from wfvae.models import WaveletFlowVAE
from wfvae.training import evaluate_vae, train_vae

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Train the wavelet-flow autoencoder on the train split."
    pipeline_name = "train-vae"

    def execute_pipeline(self, config, out, options):
        manifest = corpus_manifest(out)
        _, videos, _ = load_split(manifest, "train")
        train = config.train
        vae = WaveletFlowVAE(config.vae_config())
        history = train_vae(
            vae,
            videos,
            train["vae_steps"],
            train["batch_size"],
            train["vae_lr"],
            torch.Generator().manual_seed(config.seed),
            train["log_every"],
        )
        try:
            _, val_videos, _ = load_split(manifest, "val")
            validation = evaluate_vae(vae, val_videos, train["batch_size"])
        except DatasetError as exc:
            logger.warning("no validation loss: %s", exc)
            validation = None
        path = save_vae(out / VAE_CHECKPOINT, vae, config.as_dict())
        return {
            "videos": len(videos),
            "steps": len(history),
            "final_loss": history[-1] if history else None,
            "validation_loss": validation,
            "checkpoint": self.relative(out, path),
        }
