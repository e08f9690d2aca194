from pathlib import Path
import environ

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Read environment variables from a .env file when present
env = environ.Env(
    DEBUG=(bool, False),
    SECRET_KEY=(str, 'hybridsim-local-only-key'),
    LOG_LEVEL=(str, 'INFO'),
    LOG_DIR=(str, str(BASE_DIR / 'logs')),
    SIMULATION_OUTPUT_ROOT=(str, str(BASE_DIR / 'runs')),
    SIMULATION_JOBS=(int, 1),
)
environ.Env.read_env(BASE_DIR / '.env')


SECRET_KEY = env('SECRET_KEY')

DEBUG = env('DEBUG')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'scenario',
    'radio',
    'hybrid',
    'nn',
    'agent',
    'baselines',
    'engine',
    'experiments',
]

# The simulator has no persistence layer; runs are written as flat files.
DATABASES = {}

USE_TZ = True
TIME_ZONE = 'UTC'


# Simulation settings

SIMULATION_OUTPUT_ROOT = Path(env('SIMULATION_OUTPUT_ROOT'))
SIMULATION_JOBS = env('SIMULATION_JOBS')

HYBRIDSIM = {
    # background_count per congestion level (calibration values)
    'CONGESTION_PRESETS': {
        'low': 20,
        'medium': 50,
        'high': 80,
    },
    'COMPARE_CONGESTION_LEVELS': ['low', 'high'],
    'COMPARE_SELECTORS': ['drl', 'static-g5', 'static-lte', 'static-redundant', 'topsis'],
    'CSV_SCHEMA_VERSION': 1,
    'MOVING_AVERAGE_WINDOW': 100,
}


# Logging configuration

LOG_DIR = Path(env('LOG_DIR'))
LOG_DIR.mkdir(parents=True, exist_ok=True)

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
        'file': {
            'class': 'logging.FileHandler',
            'filename': LOG_DIR / 'hybridsim.log',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': env('LOG_LEVEL'),
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'WARNING',
            'propagate': False,
        },
    },
}
