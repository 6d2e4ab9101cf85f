from apps.runs.management.base import ReconCommand


class Command(ReconCommand):
    help = 'Compare Adam, NAG and L-BFGS on the network fitting loss'
    command_name = 'compare_optimizers'
