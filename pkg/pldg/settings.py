"""
Django settings for the pldg project.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / '.env')


SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'django-insecure-pldg-local-only')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'ldg',
]

# The solver keeps no state in a database
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging

LOG_LEVEL = os.getenv('LDG_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'standard',
        },
    },
    'loggers': {
        'ldg': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Solver settings (defaults of the convergence studies)
LDG_ETA = float(os.getenv('LDG_ETA', '10.0'))
LDG_EPS = float(os.getenv('LDG_EPS', '1e-14'))
LDG_TOL_W = float(os.getenv('LDG_TOL_W', '1e-16'))
LDG_TOL_RHO = float(os.getenv('LDG_TOL_RHO', '1e-16'))
LDG_MAX_ITERS = int(os.getenv('LDG_MAX_ITERS', '500'))
LDG_LEVELS = int(os.getenv('LDG_LEVELS', '4'))
LDG_SEED = int(os.getenv('LDG_SEED', '0'))
LDG_OUTPUT_DIR = Path(os.getenv('LDG_OUTPUT_DIR', str(BASE_DIR / 'results')))
LDG_LINEAR_SOLVER = os.getenv('LDG_LINEAR_SOLVER', 'cg')
