"""
Test settings for pytest-django.
Uses SQLite in-memory database for faster tests.
"""
import tempfile

from .settings import *

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': ':memory:',
    }
}

FEDSEL = dict(FEDSEL, OUTPUT_ROOT=tempfile.mkdtemp(prefix='fedsel-test-'), WORKERS=1)

# Disable migrations for tests
class DisableMigrations:
    def __contains__(self, item):
        return True

    def __getitem__(self, item):
        return None

MIGRATION_MODULES = DisableMigrations()
