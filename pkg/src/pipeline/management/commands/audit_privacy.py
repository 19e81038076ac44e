from dataset.corpus import load_split
from evaluation.features import build_extractor
from evaluation.runner import audit_privacy, model_generator
from exceptions import ConfigError, GateFailure
from pipeline.checkpoints import BUNDLE_CHECKPOINT, load_bundle
from pipeline.management.base import PipelineCommand, corpus_manifest
from storage import atomic_write_text, dump_json

PRIVACY_FILE = "privacy.json"


def parse_ks(text: str) -> list[int]:
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}", "eval.ks") from exc
    if not ks or min(ks) < 1:
        raise ConfigError(f"expected positive integers, got {text!r}", "eval.ks")
    return ks


class Command(PipelineCommand):
    help = "Recall@K of generated videos against their source videos, bracketed by the copy and noise stubs."
    pipeline_name = "audit-privacy"

    def add_pipeline_arguments(self, parser):
        parser.add_argument("--k", default=None, help='Comma-separated K values, e.g. "5,10,50".')
        parser.add_argument("--steps", type=int, default=None, help="Sampling steps; overrides the config.")
        parser.add_argument("--guidance", type=float, default=None, help="Guidance scale; overrides the config.")
        parser.add_argument("--checkpoint", default=None, help="Model checkpoint; defaults to <out>/model.ckpt.")

    def execute_pipeline(self, config, out, options):
        ks = parse_ks(options["k"]) if options["k"] else list(config.eval["ks"])
        bundle = load_bundle(options["checkpoint"] or out / BUNDLE_CHECKPOINT)
        _, videos, prompts = load_split(corpus_manifest(out), "test", config.eval["max_videos"])
        if max(ks) > len(videos):
            raise ConfigError(f"K = {max(ks)} exceeds the {len(videos)} test videos", "eval.ks")
        steps = options["steps"] if options["steps"] is not None else config.diffusion["sampling_steps"]
        guidance = options["guidance"] if options["guidance"] is not None else config.diffusion["guidance"]
        audit = audit_privacy(
            videos,
            prompts,
            model_generator(bundle, steps, guidance),
            build_extractor(config.eval["extractor"], bundle.vae, config.eval["feature_dim"], config.seed),
            ks,
            config.seed,
        )
        payload = audit.as_dict()
        path = atomic_write_text(out / PRIVACY_FILE, dump_json(payload))
        return {"privacy": self.relative(out, path), **payload, "gate": config.eval["gate"]}

    def check_summary(self, config, summary):
        if summary["gate"] and not summary["stub_order_holds"]:
            raise GateFailure("copy-stub recall fell below noise-stub recall at some K")
