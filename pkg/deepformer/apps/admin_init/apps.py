from django.apps import AppConfig


class AdminInitConfig(AppConfig):
    name = "apps.admin_init"
