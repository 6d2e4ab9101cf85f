# ==============================================
# RUN CONTEXT
# ==============================================
"""
Per-invocation plumbing shared by every command: output directory,
resolved-config echo, run log file and the ledger row.
"""

import logging
from pathlib import Path

from django.db import DatabaseError
from django.utils import timezone

from apps.core.utils import config_hash, write_json

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = 'resolved_config.json'
LOG_FORMAT = '{levelname} {asctime} {module} {message}'


class RunContext:
    """
    Context manager around one command run.

    Timestamps only reach `<output>/logs/`; everything else written
    under the output directory is a function of the resolved config.
    """

    def __init__(self, command: str, resolved: dict, output_dir):
        self.command = command
        self.resolved = resolved
        self.output_dir = Path(output_dir)
        self.handler = None
        self.run = None

    @property
    def logs_dir(self) -> Path:
        return self.output_dir / 'logs'

    def path(self, *parts) -> Path:
        return self.output_dir.joinpath(*parts)

    def __enter__(self):
        self.logs_dir.mkdir(parents=True, exist_ok=True)
        self._attach_log_file()
        write_json(self.path(RESOLVED_CONFIG_NAME), self.resolved)
        self._record_start()
        logger.info(f"{self.command}: writing to {self.output_dir} (seed {self.resolved.get('seed')})")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            self._record_finish('succeeded', '')
            logger.info(f"{self.command}: finished")
        else:
            self._record_finish('failed', str(exc))
            logger.error(f"{self.command}: failed: {exc}")
        self._detach_log_file()
        return False

    # ==============================================
    # LOG FILE
    # ==============================================

    def _attach_log_file(self):
        self.handler = logging.FileHandler(self.logs_dir / 'run.log', mode='w', encoding='utf-8')
        self.handler.setFormatter(logging.Formatter(LOG_FORMAT, style='{'))
        for name in ('apps', 'celery'):
            logging.getLogger(name).addHandler(self.handler)

    def _detach_log_file(self):
        if self.handler is None:
            return
        for name in ('apps', 'celery'):
            logging.getLogger(name).removeHandler(self.handler)
        self.handler.close()
        self.handler = None

    # ==============================================
    # LEDGER
    # ==============================================

    def _record_start(self):
        from apps.runs.models import Run

        try:
            self.run = Run.objects.create(
                command=self.command,
                seed=int(self.resolved.get('seed', 0)),
                config_hash=config_hash(self.resolved),
                output_dir=str(self.output_dir),
            )
        except DatabaseError as e:
            logger.warning(f"Run ledger unavailable, continuing without it: {e}")
            self.run = None

    def _record_finish(self, status: str, message: str):
        if self.run is None:
            return
        self.run.status = status
        self.run.message = message[:2000]
        self.run.finished_at = timezone.now()
        try:
            self.run.save(update_fields=['status', 'message', 'finished_at'])
        except DatabaseError as e:
            logger.warning(f"Could not update run ledger row {self.run.pk}: {e}")
