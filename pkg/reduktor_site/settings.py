"""
Django settings for the reduktor project.

The project has no web surface: Django provides the settings layer, the
management commands that make up the command-line front end, form-based
validation of run files, and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals (signing); nothing here is served.
SECRET_KEY = os.environ.get('REDUKTOR_SECRET_KEY', 'reduktor-batch-only-not-a-secret')

DEBUG = False

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'reduktor',
]

# Batch project: no database.
DATABASES = {}

# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Numerical thresholds and parallelism for the solvers.
# Every key can be overridden per call; see reduktor/conf.py for the defaults.
REDUKTOR = {
    'TOL_SUM': 1e-9,
    'TOL_ENTRY': 1e-12,
    'COMPRESSION_UNIT_TOL': 1e-8,
    'TOL_TRAJ': 1e-7,
    'TOL_OFFDIAG': 1e-10,
    'EXHAUSTIVE_MAX_N': 8,
    'SERIES_TAIL_TOL': 1e-10,
    'MAX_H_NU': 0.5,
    'CONVERGENCE_EPS': 1e-3,
    'PLATEAU_FRACTION': 0.1,
    'SUPPORT_SAMPLES': 64,
    'WORKERS': int(os.environ.get('REDUKTOR_WORKERS', '1')),
}


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'reduktor': {
            'handlers': ['console'],
            'level': os.environ.get('REDUKTOR_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
