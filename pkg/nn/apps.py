from django.apps import AppConfig


class NnConfig(AppConfig):
    name = 'nn'
    verbose_name = 'Multilayer perceptron and Adam'
