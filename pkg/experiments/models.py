"""
Run registry: one row per executed RunConfig.
"""
from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    """
    Provenance of a simulated experiment. The artifacts in ``output_dir``
    (trace.csv, summary.json, ...) stay the source of truth for results.
    """
    STATUS_PENDING = 'pending'
    STATUS_RUNNING = 'running'
    STATUS_COMPLETED = 'completed'
    STATUS_ABORTED = 'aborted'
    STATUS_FAILED = 'failed'
    STATUS_CHOICES = [
        (STATUS_PENDING, 'Pending'),
        (STATUS_RUNNING, 'Running'),
        (STATUS_COMPLETED, 'Completed'),
        (STATUS_ABORTED, 'Aborted'),
        (STATUS_FAILED, 'Failed'),
    ]

    config_hash = models.CharField(
        max_length=12,
        unique=True,
        help_text="First 12 hex digits of SHA-256 over the canonical config echo"
    )
    name = models.CharField(max_length=100, blank=True)
    policy = models.CharField(max_length=32)
    distribution = models.CharField(max_length=32)
    ubi = models.FloatField()
    seed = models.IntegerField()
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default=STATUS_PENDING)
    output_dir = models.CharField(max_length=500)
    config = models.JSONField(help_text="Verbatim config echo")
    summary = models.JSONField(null=True, blank=True)
    error = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)
    started_at = models.DateTimeField(null=True, blank=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = 'experiment_runs'
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.config_hash} ({self.policy}, {self.distribution} UBI {self.ubi}, seed {self.seed})"

    def mark_running(self):
        self.status = self.STATUS_RUNNING
        self.started_at = timezone.now()
        self.error = ''
        self.save(update_fields=['status', 'started_at', 'error', 'updated_at'])

    def mark_finished(self, summary: dict):
        self.status = self.STATUS_COMPLETED if summary.get('status') == 'completed' else self.STATUS_ABORTED
        self.summary = summary
        self.finished_at = timezone.now()
        self.save(update_fields=['status', 'summary', 'finished_at', 'updated_at'])

    def mark_failed(self, error: str):
        self.status = self.STATUS_FAILED
        self.error = error
        self.finished_at = timezone.now()
        self.save(update_fields=['status', 'error', 'finished_at', 'updated_at'])
