import logging

import torch

from dataset.corpus import load_split
from dit.vocabulary import LESIONS
from evaluation.features import build_extractor
from evaluation.probe import lesion_labels, per_lesion_accuracy, train_probe
from evaluation.runner import evaluate_run, model_generator
from exceptions import GateFailure
from pipeline.checkpoints import BUNDLE_CHECKPOINT, load_bundle
from pipeline.management.base import PipelineCommand, corpus_manifest
from storage import atomic_write_text, dump_json

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.json"


def probe_lesions(config) -> tuple[str, ...]:
    return tuple(config.data["lesions"]) or LESIONS


class Command(PipelineCommand):
    help = "Score generated videos of the test split and apply the lesion-alignment gate."
    pipeline_name = "evaluate"

    def add_pipeline_arguments(self, parser):
        parser.add_argument("--steps", type=int, default=None, help="Sampling steps; overrides the config.")
        parser.add_argument("--guidance", type=float, default=None, help="Guidance scale; overrides the config.")
        parser.add_argument("--checkpoint", default=None, help="Model checkpoint; defaults to <out>/model.ckpt.")

    def execute_pipeline(self, config, out, options):
        bundle = load_bundle(options["checkpoint"] or out / BUNDLE_CHECKPOINT)
        manifest = corpus_manifest(out)
        evaluation = config.eval
        lesions = probe_lesions(config)

        train_records, train_videos, _ = load_split(manifest, "train")
        train_labels = lesion_labels([record.report for record in train_records], lesions)
        probe = train_probe(
            train_videos,
            train_labels,
            lesions,
            steps=evaluation["probe_steps"],
            generator=torch.Generator().manual_seed(config.seed),
        )
        test_records, test_videos, test_prompts = load_split(manifest, "test", evaluation["max_videos"])
        probe_accuracy = per_lesion_accuracy(
            probe, test_videos, lesion_labels([record.report for record in test_records], lesions)
        )

        steps = options["steps"] if options["steps"] is not None else config.diffusion["sampling_steps"]
        guidance = options["guidance"] if options["guidance"] is not None else config.diffusion["guidance"]
        report = evaluate_run(
            test_videos,
            test_prompts,
            model_generator(bundle, steps, guidance),
            build_extractor(evaluation["extractor"], bundle.vae, evaluation["feature_dim"], config.seed),
            probe,
            bundle.text_encoder.token_embedding.weight.detach(),
            ks=[k for k in evaluation["ks"] if k <= len(test_videos)],
            seed=config.seed,
            generator_name="model",
            config=config.as_dict(),
        )
        metrics = report.as_dict()
        path = atomic_write_text(out / METRICS_FILE, dump_json(metrics))
        p_value = report.alignment_p_value
        return {
            "metrics": self.relative(out, path),
            "probe_accuracy": probe_accuracy,
            "probe_alignment": report.probe_alignment,
            "alignment_p_value": p_value,
            "gate": {
                "enabled": evaluation["gate"],
                "alpha": evaluation["gate_p"],
                "passed": p_value is not None and p_value < evaluation["gate_p"],
            },
            "errors": dict(report.errors),
        }

    def check_summary(self, config, summary):
        gate = summary["gate"]
        if gate["enabled"] and not gate["passed"]:
            raise GateFailure(
                f"lesion-probe alignment {summary['probe_alignment']} is not above chance "
                f"(p = {summary['alignment_p_value']}, alpha = {gate['alpha']})"
            )
