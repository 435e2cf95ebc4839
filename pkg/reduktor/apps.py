from django.apps import AppConfig


class ReduktorConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'reduktor'
    verbose_name = 'Stochastic reduction dynamics'
