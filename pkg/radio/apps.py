from django.apps import AppConfig


class RadioConfig(AppConfig):
    name = 'radio'
    verbose_name = 'Per-RAT channel models'
