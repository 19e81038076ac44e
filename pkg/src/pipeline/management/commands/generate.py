import torch

from diffusion.pipeline import generate
from dit.vocabulary import VOCABULARY
from pipeline.checkpoints import BUNDLE_CHECKPOINT, load_bundle
from pipeline.formats import export_frames, write_tvid
from pipeline.management.base import PipelineCommand
from wfvae.tiling import ActivationMeter

GENERATED_DIR = "generated"


class Command(PipelineCommand):
    help = "Generate one angiography video from a report prompt."
    pipeline_name = "generate"

    def add_pipeline_arguments(self, parser):
        parser.add_argument("--prompt", required=True, help='Report text, e.g. "left eye, leakage, microaneurysms".')
        parser.add_argument("--steps", type=int, default=None, help="Sampling steps; overrides the config.")
        parser.add_argument("--guidance", type=float, default=None, help="Guidance scale; overrides the config.")
        parser.add_argument("--checkpoint", default=None, help="Model checkpoint; defaults to <out>/model.ckpt.")

    def execute_pipeline(self, config, out, options):
        bundle = load_bundle(options["checkpoint"] or out / BUNDLE_CHECKPOINT)
        prompt = VOCABULARY.encode(options["prompt"], bundle.text_encoder.config.text_max_length)
        steps = options["steps"] if options["steps"] is not None else config.diffusion["sampling_steps"]
        guidance = options["guidance"] if options["guidance"] is not None else config.diffusion["guidance"]
        with ActivationMeter(bundle.vae.decoder) as meter:
            clip = generate(bundle, prompt, steps, guidance, torch.Generator().manual_seed(config.seed))
        stem = out / GENERATED_DIR / f"seed_{config.seed}"
        video = write_tvid(stem.with_suffix(".tvid"), clip)
        frames, clamped = export_frames(clip, stem.with_name(f"{stem.name}_frames"))
        return {
            "prompt": options["prompt"],
            "terms": VOCABULARY.decode(prompt),
            "steps": steps,
            "guidance": guidance,
            "shape": list(clip.shape),
            "video": self.relative(out, video),
            "frames": [self.relative(out, path) for path in frames],
            "clamped_pixels": clamped,
            "peak_decoder_activation": meter.peak,
        }
