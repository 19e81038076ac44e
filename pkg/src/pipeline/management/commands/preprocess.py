import logging

from dataset.corpus import MANIFEST_NAME, standardize_corpus
from dataset.manifest import DatasetManifest, filter_dataset
from pipeline.management.base import CORPUS_DIR, RAW_DIR, PipelineCommand

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Filter low-vessel videos and standardize every kept clip to the configured frame count."
    pipeline_name = "preprocess"

    def execute_pipeline(self, config, out, options):
        manifest = DatasetManifest.load(out / RAW_DIR / MANIFEST_NAME)
        filtered = filter_dataset(manifest, config.data["vessel_threshold"])
        standardized = standardize_corpus(filtered, out / CORPUS_DIR, config.data["frames"])
        standardized.save(out / CORPUS_DIR / MANIFEST_NAME)
        kept = len(standardized.kept())
        logger.info("kept %d of %d records", kept, len(standardized))
        return {
            "records": len(standardized),
            "kept": kept,
            "dropped": {record.id: record.note or "below vessel-area threshold" for record in standardized if not record.kept},
            "frames": config.data["frames"],
            "manifest": f"{CORPUS_DIR}/{MANIFEST_NAME}",
        }
