from django.apps import AppConfig


class DitAppConfig(AppConfig):
    name = "dit"
