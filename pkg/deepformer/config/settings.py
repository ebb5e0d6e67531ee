"""
Django settings for the deepformer project.

deepformer has no web surface: Django provides the settings layer, the app
registry and the management-command CLI (``python manage.py train ...``).

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

import os

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY", "deepformer-offline-no-http-surface")

DEBUG = os.environ.get("DJANGO_DEBUG", "0") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "apps.numerics",
    "apps.architecture",
    "apps.admin_init",
    "apps.training",
    "apps.corpus",
    "apps.evalmetrics",
    "apps.experiments",
]

# 학습/평가 결과는 모두 파일(CSV, JSON, 체크포인트)로 남기므로 DB를 사용하지 않는다.
DATABASES = {}

USE_TZ = True
TIME_ZONE = "UTC"
LANGUAGE_CODE = "en-us"


# Logging
# https://docs.djangoproject.com/en/4.2/topics/logging/

LOG_LEVEL = os.environ.get("DEEPFORMER_LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{asctime} {levelname} {name} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "apps": {
            "handlers": ["console"],
            "level": LOG_LEVEL,
            "propagate": False,
        },
    },
}


# REST framework: serializers are used only for config validation and JSON I/O.

REST_FRAMEWORK = {
    "STRICT_JSON": True,
    "COERCE_DECIMAL_TO_STRING": False,
}


# deepformer defaults

DEEPFORMER = {
    "LN_EPS": 1e-5,
    "MODEL_PRESETS": {
        # CPU에서 돌릴 수 있는 기본 크기
        "desk": {"d_model": 64, "d_ff": 128, "n_heads": 2},
        # 원래 규모의 폭 (512 embedding, 2048 feed-forward, 8 heads)
        "base": {"d_model": 512, "d_ff": 2048, "n_heads": 8},
    },
    "DROPOUT": 0.1,
    "LABEL_SMOOTHING": 0.1,
    "MAX_LEN": 64,
    "SCHEDULE_PRESETS": {
        "fr": {"warmup_steps": 8000, "peak_lr": 0.0007},
        "de": {"warmup_steps": 4000, "peak_lr": 0.001},
    },
    "TOKEN_BUDGET": 1024,
    "PROFILING_TOKENS": 1024,
    "RADAM": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "weight_decay": 0.0},
    "DIVERGENCE": {"explosion_factor": 10.0, "patience": 200},
    "TASK": {
        "kind": "reverse_substitute",
        "vocab_size": 64,
        "min_len": 5,
        "max_len": 24,
        "train_size": 20000,
        "dev_size": 1000,
        "test_size": 1000,
    },
    "BOOTSTRAP_SAMPLES": 1000,
    "SIGNIFICANCE_LEVEL": 0.05,
    "LOG_EVERY": 50,
}
