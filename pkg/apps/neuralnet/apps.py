# ==============================================
# NEURALNET APP CONFIG
# ==============================================

from django.apps import AppConfig


class NeuralnetConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.neuralnet'
    verbose_name = 'Personalized representation network'
