# ==============================================
# SHARED COMMAND BASE
# ==============================================
"""
Argument handling, config resolution and exit codes common to every
reconstruction command: 0 success, 2 config error, 3 runtime failure.
"""

import json
import logging
from pathlib import Path

import torch
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from apps.core.exceptions import ConfigurationError, ReconstructionError
from apps.runs.serializers import flatten_errors, resolve_config
from apps.runs.services import COMMAND_SERVICES, RunContext

logger = logging.getLogger(__name__)

EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def read_config(path) -> dict:
    try:
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} does not exist", key='config')
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path} line {e.lineno} column {e.colno}: {e.msg}", key='config')


class ReconCommand(BaseCommand):
    command_name = None

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='JSON config file')
        parser.add_argument('--output', help='Output directory (default: $RECON_OUTPUT_ROOT/<command>)')
        parser.add_argument('--seed', type=int, help='Root seed, overrides the config')
        parser.add_argument('--threads', type=int, default=settings.RECON_THREADS,
                            help='Torch intra-op threads')

    def handle(self, *args, **options):
        try:
            resolved = resolve_config(self.command_name, read_config(options['config']), options['seed'])
        except (ConfigurationError, serializers.ValidationError) as e:
            raise self.failure(e)

        torch.set_num_threads(max(1, options['threads']))
        output = Path(options['output'] or settings.RECON_OUTPUT_ROOT / self.command_name)
        try:
            with RunContext(self.command_name, resolved, output):
                COMMAND_SERVICES[self.command_name](resolved, output)
        except (ReconstructionError, serializers.ValidationError) as e:
            raise self.failure(e)

        self.stdout.write(self.style.SUCCESS(f'{self.command_name}: outputs written to {output}'))

    def failure(self, error) -> CommandError:
        if isinstance(error, serializers.ValidationError):
            message = '; '.join(flatten_errors(error.detail))
            code = EXIT_CONFIG_ERROR
        else:
            message = error.message
            code = EXIT_CONFIG_ERROR if isinstance(error, ConfigurationError) else EXIT_RUNTIME_ERROR
        logger.error(f"{self.command_name} failed ({error.__class__.__name__}): {message}")
        return CommandError(message, returncode=code)
