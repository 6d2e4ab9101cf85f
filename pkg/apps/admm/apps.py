# ==============================================
# ADMM ENGINE APP CONFIG
# ==============================================

from django.apps import AppConfig


class AdmmEngineConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.admm'
    verbose_name = 'ADMM reconstruction engine'
