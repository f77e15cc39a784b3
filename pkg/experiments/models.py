from django.db import models


class ExperimentRun(models.Model):
    """One ``run`` or ``fig1`` invocation and where its artifacts went."""

    class Command(models.TextChoices):
        RUN = "run"
        FIG1 = "fig1"

    class Status(models.TextChoices):
        COMPLETED = "completed"
        DIVERGED = "diverged"
        FAILED = "failed"

    command = models.CharField(
        max_length=8,
        choices=Command.choices,
        default=Command.RUN,
        verbose_name="Command",
    )
    algorithm = models.CharField(max_length=16, verbose_name="Algorithm")
    status = models.CharField(
        max_length=16,
        choices=Status.choices,
        default=Status.COMPLETED,
        verbose_name="Run status",
    )
    config_path = models.CharField(
        max_length=255, blank=True, verbose_name="Config path"
    )
    config_sha256 = models.CharField(
        max_length=64, verbose_name="Config SHA-256"
    )
    seeds = models.JSONField(default=dict, verbose_name="Seeds")
    alpha = models.FloatField(
        null=True, blank=True, verbose_name="Step size"
    )
    certified_alpha = models.FloatField(
        null=True, blank=True, verbose_name="Certified step size"
    )
    iterations = models.PositiveIntegerField(
        default=0, verbose_name="Iterations"
    )
    final_dist = models.FloatField(
        null=True, blank=True, verbose_name="Final distance to the NE"
    )
    wall_time = models.FloatField(verbose_name="Wall time (s)")
    output_dir = models.CharField(
        max_length=255, blank=True, verbose_name="Output dir"
    )
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        verbose_name = "Experiment run"
        verbose_name_plural = "Experiment runs"
        ordering = ["-created_at"]

    def __str__(self):
        return f"{self.command} {self.algorithm} ({self.status})"
