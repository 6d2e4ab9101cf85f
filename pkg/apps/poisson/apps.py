# ==============================================
# POISSON MODEL APP CONFIG
# ==============================================

from django.apps import AppConfig


class PoissonConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.poisson'
    verbose_name = 'Poisson likelihood and EM'
