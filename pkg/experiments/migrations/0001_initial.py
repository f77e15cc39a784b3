# Generated by Django 6.0 on 2026-10-18 10:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "command",
                    models.CharField(
                        choices=[("run", "Run"), ("fig1", "Fig1")],
                        default="run",
                        max_length=8,
                        verbose_name="Command",
                    ),
                ),
                (
                    "algorithm",
                    models.CharField(max_length=16, verbose_name="Algorithm"),
                ),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("completed", "Completed"),
                            ("diverged", "Diverged"),
                            ("failed", "Failed"),
                        ],
                        default="completed",
                        max_length=16,
                        verbose_name="Run status",
                    ),
                ),
                (
                    "config_path",
                    models.CharField(
                        blank=True, max_length=255, verbose_name="Config path"
                    ),
                ),
                (
                    "config_sha256",
                    models.CharField(
                        max_length=64, verbose_name="Config SHA-256"
                    ),
                ),
                (
                    "seeds",
                    models.JSONField(default=dict, verbose_name="Seeds"),
                ),
                (
                    "alpha",
                    models.FloatField(
                        blank=True, null=True, verbose_name="Step size"
                    ),
                ),
                (
                    "certified_alpha",
                    models.FloatField(
                        blank=True,
                        null=True,
                        verbose_name="Certified step size",
                    ),
                ),
                (
                    "iterations",
                    models.PositiveIntegerField(
                        default=0, verbose_name="Iterations"
                    ),
                ),
                (
                    "final_dist",
                    models.FloatField(
                        blank=True,
                        null=True,
                        verbose_name="Final distance to the NE",
                    ),
                ),
                (
                    "wall_time",
                    models.FloatField(verbose_name="Wall time (s)"),
                ),
                (
                    "output_dir",
                    models.CharField(
                        blank=True, max_length=255, verbose_name="Output dir"
                    ),
                ),
                ("created_at", models.DateTimeField(auto_now_add=True)),
            ],
            options={
                "verbose_name": "Experiment run",
                "verbose_name_plural": "Experiment runs",
                "ordering": ["-created_at"],
            },
        ),
    ]
