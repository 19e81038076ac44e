import logging

import torch
from django.apps import AppConfig
from django.conf import settings

logger = logging.getLogger(__name__)


class NumericsConfig(AppConfig):
    name = "numerics"

    def ready(self):
        if settings.ANGIODIT_THREADS:
            torch.set_num_threads(settings.ANGIODIT_THREADS)
            logger.debug("torch worker threads capped at %d", settings.ANGIODIT_THREADS)
        if settings.ANGIODIT_DETERMINISTIC:
            torch.use_deterministic_algorithms(True)
