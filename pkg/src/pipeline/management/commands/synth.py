import logging

from dataset.corpus import MANIFEST_NAME, synthesize_corpus
from pipeline.management.base import RAW_DIR, PipelineCommand

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Render the synthetic angiography corpus with its reports and manifest."
    pipeline_name = "synth"

    def execute_pipeline(self, config, out, options):
        data = config.data
        manifest = synthesize_corpus(
            out / RAW_DIR,
            data["count"],
            config.seed,
            tuple(data["size"]),
            frames_range=tuple(data["raw_frames"]),
            lesion_pool=data["lesions"],
            balanced=data["balanced"],
            lesion_rate=data["lesion_rate"],
            max_length=config.dit["text_max_length"],
        )
        logger.info("rendered %d cases", len(manifest))
        return {
            "cases": len(manifest),
            "manifest": f"{RAW_DIR}/{MANIFEST_NAME}",
            "distinct_reports": len({record.report for record in manifest}),
        }
