from apps.runs.management.base import ReconCommand


class Command(ReconCommand):
    help = 'Reconstruct simulated data sets with mlem, em-filter, kmri or dip-admm'
    command_name = 'reconstruct'
