from django.apps import AppConfig


class WaveletConfig(AppConfig):
    name = "wavelet"
