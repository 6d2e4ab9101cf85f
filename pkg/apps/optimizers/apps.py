# ==============================================
# OPTIMIZERS APP CONFIG
# ==============================================

from django.apps import AppConfig


class OptimizersConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.optimizers'
    verbose_name = 'Network training optimizers'
