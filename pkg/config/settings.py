# ==============================================
# DJANGO SETTINGS
# ==============================================
"""
Personalized representation reconstruction toolkit settings.
Numeric defaults for every command live in RECON_DEFAULTS below.
"""

from pathlib import Path
from decouple import config

# ==============================================
# BASE CONFIGURATION
# ==============================================

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='recon-insecure-local-key')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# ==============================================
# APPLICATION DEFINITION
# ==============================================

DJANGO_APPS = [
    'django.contrib.contenttypes',
]

THIRD_PARTY_APPS = [
    'rest_framework',
]

LOCAL_APPS = [
    'apps.core.apps.CoreConfig',
    'apps.imaging.apps.ImagingConfig',
    'apps.projection.apps.ProjectionConfig',
    'apps.simulation.apps.SimulationConfig',
    'apps.poisson.apps.PoissonConfig',
    'apps.neuralnet.apps.NeuralnetConfig',
    'apps.optimizers.apps.OptimizersConfig',
    'apps.admm.apps.AdmmEngineConfig',
    'apps.baselines.apps.BaselinesConfig',
    'apps.metrics.apps.MetricsConfig',
    'apps.runs.apps.RunsConfig',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS


# ==============================================
# DATABASE CONFIGURATION
# ==============================================

import dj_database_url

DATABASE_URL = config('DATABASE_URL', default='')

if DATABASE_URL:
    DATABASES = {
        'default': dj_database_url.config(
            default=DATABASE_URL,
            conn_max_age=600,
        )
    }
else:
    # Local run ledger: SQLite
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': BASE_DIR / 'db.sqlite3',
        }
    }

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'UTC'


# ==============================================
# OUTPUT LOCATIONS
# ==============================================

# Environment override for the output root of every command
RECON_OUTPUT_ROOT = Path(config('RECON_OUTPUT_ROOT', default=str(BASE_DIR / 'runs')))

# Default torch intra-op thread count (--threads overrides per run)
RECON_THREADS = config('RECON_THREADS', default=1, cast=int)


# ==============================================
# RECONSTRUCTION DEFAULTS
# ==============================================

RECON_DEFAULTS = {
    'seed': 0,
    'grid': {
        'width': 64,
        'height': 64,
        'pixel_size_mm': 2.0,
    },
    'geometry': {
        'n_angles': 96,
        'n_bins': 91,
        'bin_size_mm': 2.0,
    },
    'phantom': {
        # gray:white:tumor = 4:1:8
        'activities': {'gray': 4.0, 'white': 1.0, 'ventricle': 0.5},
        'prior_intensities': {'gray': 0.6, 'white': 1.0, 'ventricle': 0.2},
        'tumor_activity': 8.0,
        'tumor_diameter_mm': 16.0,
    },
    'counts': {
        'total_counts': 5e5,
        's_fraction': 0.1,
        'thin_ratio': 0.125,
        'n_realizations': 0,
        'tumor_difference': False,
    },
    'admm': {
        # Tuned on clinical count levels; re-tune when counts change
        'rho': 3e-3,
        'outer_iterations': 60,
        'em_subiterations': 2,
        'network_iterations': 20,
        'input_mode': 'prior',
    },
    'network': {
        'depth': 3,
        'base_channels': 4,
        'negative_slope': 0.1,
    },
    'lbfgs': {
        'memory': 10,
        'c1': 1e-4,
        'c2': 0.9,
        'gradient_tolerance': 1e-10,
    },
    'first_order': {
        'adam_step_size': 1e-2,
        'nag_step_size': 1e-5,
        'nag_momentum': 0.9,
    },
    'mlem': {
        'iterations': 100,
        'filter_fwhm_mm': 6.0,
    },
    'kernel': {
        'patch_radius': 1,
        'search_radius': 4,
        'neighbors': 25,
        'normalize': True,
    },
    'nlm': {
        'window': 5,
        'patch': 3,
    },
    'denoise': {
        'epochs': 700,
        'gaussian_fwhm_px': 1.0,
        'input_mode': 'prior',
    },
    'compare': {
        'iterations': 300,
        'reference_iterations': 700,
        'input_mode': 'prior',
    },
    'metrics': {
        'checkpoint_stride': 20,
        'background_roi_count': 11,
        'background_roi_diameter_mm': 8.0,
    },
}


# ==============================================
# REST FRAMEWORK (config validation only)
# ==============================================

REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
}


# ==============================================
# CELERY CONFIGURATION
# ==============================================

CELERY_BROKER_URL = config('CELERY_BROKER_URL', default='redis://localhost:6379/1')
CELERY_RESULT_BACKEND = config('CELERY_RESULT_BACKEND', default='redis://localhost:6379/2')

# Realizations run in-process unless a worker pool is deployed
CELERY_TASK_ALWAYS_EAGER = config('CELERY_TASK_ALWAYS_EAGER', default=True, cast=bool)
CELERY_TASK_EAGER_PROPAGATES = True

CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = TIME_ZONE

CELERY_TASK_SOFT_TIME_LIMIT = 3600
CELERY_TASK_TIME_LIMIT = 4 * 3600

CELERY_TASK_ROUTES = {
    'apps.runs.tasks.reconstruct_realization': {'queue': 'reconstruction'},
    'apps.runs.tasks.denoise_case': {'queue': 'reconstruction'},
}


# ==============================================
# LOGGING CONFIGURATION
# ==============================================

LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': True,
        },
        'apps': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'celery': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': True,
        },
    },
}

if DEBUG:
    LOGS_DIR = BASE_DIR / 'logs'
    LOGS_DIR.mkdir(exist_ok=True)

    LOGGING['handlers']['file'] = {
        'level': 'DEBUG',
        'class': 'logging.handlers.RotatingFileHandler',
        'filename': LOGS_DIR / 'recon.log',
        'maxBytes': 1024 * 1024 * 10,
        'backupCount': 5,
        'formatter': 'verbose',
    }
    LOGGING['loggers']['apps']['handlers'].append('file')


# ==============================================
# SENTRY ERROR TRACKING
# ==============================================

SENTRY_DSN = config('SENTRY_DSN', default='')

if SENTRY_DSN and SENTRY_DSN.startswith('http'):
    import sentry_sdk
    from sentry_sdk.integrations.django import DjangoIntegration
    from sentry_sdk.integrations.celery import CeleryIntegration

    try:
        sentry_sdk.init(
            dsn=SENTRY_DSN,
            integrations=[
                DjangoIntegration(),
                CeleryIntegration(),
            ],
            traces_sample_rate=0.0,
            send_default_pii=False,
            environment=config('SENTRY_ENVIRONMENT', default='local'),
        )
    except Exception:
        pass
