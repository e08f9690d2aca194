from django.apps import AppConfig


class BaselinesConfig(AppConfig):
    name = 'baselines'
    verbose_name = 'Static and TOPSIS mode selectors'
