from django.apps import AppConfig


class ScenarioConfig(AppConfig):
    name = 'scenario'
    verbose_name = 'Highway scenario and mobility'
