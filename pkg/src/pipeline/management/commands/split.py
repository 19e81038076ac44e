import logging
from collections import Counter

from config.constants import SPLIT_NAMES
from dataset.corpus import MANIFEST_NAME
from dataset.manifest import DatasetManifest, split_dataset
from pipeline.management.base import CORPUS_DIR, PipelineCommand

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Assign kept records to train/val/test so that no report crosses splits."
    pipeline_name = "split"

    def execute_pipeline(self, config, out, options):
        path = out / CORPUS_DIR / MANIFEST_NAME
        manifest = split_dataset(DatasetManifest.load(path), config.data["split_fractions"], config.seed)
        manifest.save(path)
        videos = Counter(record.split for record in manifest.kept())
        reports = {name: len({r.report for r in manifest.in_split(name)}) for name in SPLIT_NAMES}
        logger.info("split videos: %s", ", ".join(f"{name} {videos[name]}" for name in SPLIT_NAMES))
        return {
            "videos": {name: videos[name] for name in SPLIT_NAMES},
            "reports": reports,
            "manifest": f"{CORPUS_DIR}/{MANIFEST_NAME}",
        }
