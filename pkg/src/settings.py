import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()
# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

DEBUG = os.getenv("DEBUG", "") == "1"

# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "numerics.apps.NumericsConfig",
    "wavelet.apps.WaveletConfig",
    "wfvae.apps.WfvaeConfig",
    "dit.apps.DitAppConfig",
    "diffusion.apps.DiffusionConfig",
    "dataset.apps.DatasetConfig",
    "evaluation.apps.EvaluationConfig",
    "pipeline.apps.PipelineAppConfig",
]

# Every artifact lives on the filesystem; no database is configured.
DATABASES = {}

USE_TZ = True
TIME_ZONE = "UTC"

# Runtime knobs
ANGIODIT_THREADS = int(os.getenv("ANGIODIT_THREADS", "0")) or None
ANGIODIT_OUTPUT_DIR = Path(os.getenv("ANGIODIT_OUTPUT_DIR", BASE_DIR / "runs"))
ANGIODIT_DETERMINISTIC = os.getenv("ANGIODIT_DETERMINISTIC", "1") != "0"
ANGIODIT_LOG_LEVEL = os.getenv("ANGIODIT_LOG_LEVEL", "INFO")
ANGIODIT_CONFIG_DIR = BASE_DIR / "src" / "config"

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "root": {"handlers": ["console"], "level": ANGIODIT_LOG_LEVEL},
}
