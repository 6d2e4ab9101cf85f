# ==============================================
# SIMULATION APP CONFIG
# ==============================================

from django.apps import AppConfig


class SimulationConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.simulation'
    verbose_name = 'Phantoms and count simulation'
