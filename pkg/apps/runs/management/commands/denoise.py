from apps.runs.management.base import ReconCommand


class Command(ReconCommand):
    help = 'Denoise images with a Gaussian filter, guided NLM or the personalized network'
    command_name = 'denoise'
