#!/usr/bin/env python
"""deepformer command-line utility (profile, train, eval, fold, sweep, gen_data)."""
import os
import sys

THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def configure_threads(argv):
    """BLAS 스레드 수는 numpy import 전에 정해져야 하므로 여기서 먼저 처리한다."""
    threads = None
    if "--threads" in argv:
        position = argv.index("--threads")
        if position + 1 < len(argv):
            threads = argv[position + 1]
    if os.environ.get("DEEPFORMER_DETERMINISTIC") == "1":
        threads = "1"
    if threads is not None:
        for var in THREAD_ENV_VARS:
            os.environ[var] = threads


def main():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
    configure_threads(sys.argv)
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
