from apps.runs.management.base import ReconCommand


class Command(ReconCommand):
    help = 'Metric-versus-noise curves and tumor-only images from reconstruction checkpoints'
    command_name = 'metrics'
