"""
Django settings for the trm-lab project.

The lab has no web surface: Django supplies the settings layer, the app
registry and the management-command runner (manage.py). Experiment parameters
come from JSON config files; process-level knobs come from the environment
(or a .env file) through python-decouple.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Not used for any signing; Django refuses to start without one.
SECRET_KEY = config('SECRET_KEY', default='trm-lab-offline-key')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    # Third-party apps
    'rest_framework',

    # Local apps
    'core',
    'networks',
    'streams',
    'training',
    'merging',
    'diagnostics',
    'experiments',
]

# Results are files (csv/json/checkpoints), never database rows.
DATABASES = {}

USE_TZ = True
TIME_ZONE = 'UTC'


# Lab settings

# Upper bound on concurrently executing (seed, strategy) runs.
TRM_LAB_THREADS = config('TRM_LAB_THREADS', default=1, cast=int)

TRM_LAB_OUTPUT_DIR = Path(config('TRM_LAB_OUTPUT_DIR', default='results'))

TRM_LAB_LOG_LEVEL = config('TRM_LAB_LOG_LEVEL', default='INFO')

CONFIG_SCHEMA_VERSION = 1


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        app: {
            'handlers': ['console'],
            'level': TRM_LAB_LOG_LEVEL,
            'propagate': False,
        }
        for app in ('core', 'networks', 'streams', 'training', 'merging',
                    'diagnostics', 'experiments')
    },
}


# Monitoring (Sentry): off unless a DSN is configured
SENTRY_DSN = config('SENTRY_DSN', default='')

if SENTRY_DSN:
    import sentry_sdk
    from sentry_sdk.integrations.django import DjangoIntegration

    sentry_sdk.init(
        dsn=SENTRY_DSN,
        integrations=[DjangoIntegration()],
        send_default_pii=False,
        traces_sample_rate=0.0,
    )
