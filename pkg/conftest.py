"""Pytest wiring equivalent to ``manage.py test``: configure Django and
create the test database for the session."""
import os
import sys

import django
import pytest

# config/settings.py enables its test profile (in-memory DB, eager Celery)
# when "test" is in sys.argv, as under ``manage.py test``.
if "test" not in sys.argv:
    sys.argv.append("test")

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
django.setup()


@pytest.fixture(scope="session", autouse=True)
def _django_test_environment():
    from django.test.utils import (
        setup_databases,
        setup_test_environment,
        teardown_databases,
        teardown_test_environment,
    )

    setup_test_environment()
    old_config = setup_databases(verbosity=0, interactive=False)
    yield
    teardown_databases(old_config, verbosity=0)
    teardown_test_environment()
