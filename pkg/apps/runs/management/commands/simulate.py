from apps.runs.management.base import ReconCommand


class Command(ReconCommand):
    help = 'Simulate a phantom pair, its sinogram and thinned realizations'
    command_name = 'simulate'
