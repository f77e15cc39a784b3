"""
URL configuration for config project.

The simulator is driven from management commands; only the admin is
routed, to browse recorded experiment runs.
"""

from django.contrib import admin
from django.urls import path

urlpatterns = [
    path("admin/", admin.site.urls),
]
