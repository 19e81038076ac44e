from django.apps import AppConfig


class WfvaeConfig(AppConfig):
    name = "wfvae"
