"""
Django settings for the fedsel simulator project.

The project has no HTTP surface; Django provides configuration, the run
registry (ORM) and the management-command front end.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Only used for Django internals (no sessions or signing are exposed).
SECRET_KEY = os.getenv('SECRET_KEY', 'fedsel-local-simulation-key')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'dataset',
    'partition',
    'recmodel',
    'utility',
    'sysmodel',
    'selection',
    'metrics',
    'orchestrator',
    'experiments',
]


# Database
# https://docs.djangoproject.com/en/5.0/ref/settings/#databases

DATABASES = {
    "default": {
        "ENGINE": os.getenv("DB_ENGINE", "django.db.backends.sqlite3"),
        "NAME": os.getenv("DB_NAME", str(BASE_DIR / "fedsel.sqlite3")),
        "USER": os.getenv("DB_USER", ""),
        "PASSWORD": os.getenv("DB_PASSWORD", ""),
        "HOST": os.getenv("DB_HOST", ""),
        "PORT": os.getenv("DB_PORT", ""),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework configuration (serializers only; used for run-config validation)
REST_FRAMEWORK = {
    'COERCE_DECIMAL_TO_STRING': False,
}

# Simulator settings
FEDSEL = {
    # MovieLens-100K ratings file (tab separated user/item/rating/timestamp)
    'DATA_PATH': os.getenv('FEDSEL_DATA_PATH', str(BASE_DIR / 'data' / 'ml-100k' / 'u.data')),
    # Optional binary modality feature file; synthetic features when empty
    'FEATURES_PATH': os.getenv('FEDSEL_FEATURES_PATH', ''),
    # Every run writes into OUTPUT_ROOT/<config hash>/
    'OUTPUT_ROOT': os.getenv('FEDSEL_OUTPUT_ROOT', str(BASE_DIR / 'out')),
    # Thread fan-out for local training inside one run
    'WORKERS': int(os.getenv('FEDSEL_WORKERS', '1')),
}

LOG_LEVEL = os.getenv('FEDSEL_LOG_LEVEL', 'INFO')

# Logging - console only; per-round progress at INFO, per-client detail at DEBUG
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '[{levelname}] {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        app: {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        }
        for app in ('orchestrator', 'experiments', 'recmodel', 'selection', 'dataset', 'partition',
                    'sysmodel', 'utility')
    },
}
