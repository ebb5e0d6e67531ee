from django.apps import AppConfig


class EvalmetricsConfig(AppConfig):
    name = "apps.evalmetrics"
