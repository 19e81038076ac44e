import logging
from pathlib import Path
from typing import Any, Optional

import torch
from django.core.management.base import BaseCommand, CommandError

from dataset.corpus import MANIFEST_NAME
from dataset.manifest import DatasetManifest
from exceptions import AngioditError
from pipeline.config import PipelineConfig, load_pipeline_config
from storage import atomic_write_text, dump_json

logger = logging.getLogger(__name__)

RAW_DIR = "raw"
CORPUS_DIR = "corpus"


class PipelineCommand(BaseCommand):
    """
    Shared surface of every pipeline command: ``--config``, ``--seed`` and
    ``--out``, error → exit-code mapping and the JSON run summary.

    Subclasses implement ``execute_pipeline`` and return the summary fields;
    ``check_summary`` runs after the summary is written and may raise a
    ``GateFailure``.
    """

    pipeline_name = ""

    def add_arguments(self, parser):
        parser.add_argument("--config", default=None, help="JSON config document; defaults apply without one.")
        parser.add_argument("--seed", type=int, default=None, help="Overrides the config seed.")
        parser.add_argument("--out", default=None, help="Output directory; overrides the config.")
        self.add_pipeline_arguments(parser)

    def add_pipeline_arguments(self, parser):
        pass

    def execute_pipeline(self, config: PipelineConfig, out: Path, options: dict[str, Any]) -> dict:
        raise NotImplementedError

    def check_summary(self, config: PipelineConfig, summary: dict) -> None:
        pass

    def relative(self, out: Path, path: Path) -> str:
        try:
            return Path(path).relative_to(out).as_posix()
        except ValueError:
            return str(path)

    def handle(self, *args, **options) -> Optional[str]:
        name = self.pipeline_name
        try:
            config = load_pipeline_config(options["config"], {"seed": options["seed"]})
            out = config.output_path(options["out"])
            torch.manual_seed(config.seed)
            logger.info("%s: writing under %s", name, out)
            summary = {"command": name, "config": config.as_dict(), **self.execute_pipeline(config, out, options)}
            text = dump_json(summary)
            atomic_write_text(out / f"{name}.summary.json", text)
            self.stdout.write(text, ending="")
            self.check_summary(config, summary)
        except AngioditError as exc:
            logger.error("%s failed: %s", name, exc)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        return None


def corpus_manifest(out: Path) -> DatasetManifest:
    return DatasetManifest.load(out / CORPUS_DIR / MANIFEST_NAME)
