# ==============================================
# RUN LEDGER MODELS
# ==============================================
"""
One row per command invocation. The ledger is informational only:
outputs never depend on it.
"""

from django.db import models
from django.utils.translation import gettext_lazy as _


class Run(models.Model):
    """
    Command run record: what was run, with which resolved config, and
    how it ended.
    """

    class Status(models.TextChoices):
        RUNNING = 'running', _('Running')
        SUCCEEDED = 'succeeded', _('Succeeded')
        FAILED = 'failed', _('Failed')

    command = models.CharField(
        _('Command'),
        max_length=40,
        db_index=True
    )
    seed = models.BigIntegerField(
        _('Root seed'),
        default=0
    )
    config_hash = models.CharField(
        _('Config hash'),
        max_length=64,
        db_index=True
    )
    output_dir = models.CharField(
        _('Output directory'),
        max_length=500
    )
    status = models.CharField(
        _('Status'),
        max_length=20,
        choices=Status.choices,
        default=Status.RUNNING,
        db_index=True
    )
    message = models.TextField(
        _('Message'),
        blank=True
    )

    # Timestamps
    started_at = models.DateTimeField(_('Started'), auto_now_add=True)
    finished_at = models.DateTimeField(_('Finished'), null=True, blank=True)

    class Meta:
        verbose_name = _('Run')
        verbose_name_plural = _('Runs')
        ordering = ['-started_at']

    def __str__(self):
        return f"{self.command} [{self.status}] {self.output_dir}"
