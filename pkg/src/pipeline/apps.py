from django.apps import AppConfig


class PipelineAppConfig(AppConfig):
    name = "pipeline"
