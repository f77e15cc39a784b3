from django.contrib import admin

from experiments.models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = (
        "command", "algorithm", "status", "iterations", "final_dist",
        "created_at",
    )
    list_filter = ("command", "status")
