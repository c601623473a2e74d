"""
Django settings for hypermatch_project.

The project has no database, no URL routing and no templates: it is a
command-line toolkit (``manage.py match|synth|selfcheck``) whose
configuration, logging and background workers are provided by Django and
Celery.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: nothing here is served, but Django still requires a key.
SECRET_KEY = os.environ.get(
    'HYPERMATCH_SECRET_KEY', 'hypermatch-insecure-0p2e9lq4w7m1k5v8c3x6z'
)

DEBUG = os.environ.get('HYPERMATCH_DEBUG', 'false').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'matching',
]

# No models are stored; the toolkit writes JSON and CSV files instead.
DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging
# https://docs.djangoproject.com/en/4.2/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(levelname)s %(name)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'matching': {
            'handlers': ['console'],
            'level': os.environ.get('HYPERMATCH_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}


# Hypermatch toolkit
# Read through matching.conf.hypermatch_settings; missing keys fall back to
# the defaults declared there.

HYPERMATCH = {
    'MATERIALIZATION_THRESHOLD': 5000,
    'BRUTE_FORCE_THRESHOLD': 40,
    'Q_TRIPLE_CAP': 200_000,
    'THREADS': int(os.environ.get('HYPERMATCH_THREADS', '0') or 0),
    'EQUALITY_TOL_REL': 1e-12,
    'MAX_OUTER_ITERS': 100,
}


# Celery

CELERY_TIMEZONE = 'UTC'
CELERY_BROKER_URL = os.environ.get('CELERY_BROKER_URL', 'memory://')
CELERY_RESULT_BACKEND = os.environ.get('CELERY_RESULT_BACKEND', 'rpc://')
CELERY_TASK_ALWAYS_EAGER = os.environ.get('CELERY_TASK_ALWAYS_EAGER', 'true').lower() == 'true'
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_ACCEPT_CONTENT = ['json']
# One benchmark trial per worker process at a time.
CELERY_WORKER_PREFETCH_MULTIPLIER = 1
CELERY_TASK_ACKS_LATE = True
