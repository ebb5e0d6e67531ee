import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from apps.exceptions import ConfigurationError, DataError, FoldingError, ProfilingError, SpecError
from apps.experiments.runconfig import load_run_config

logger = logging.getLogger(__name__)

# 사용법/설정/데이터 문제는 2, 그 밖의 내부 오류는 3
USAGE_ERRORS = (
    ValidationError,
    ConfigurationError,
    SpecError,
    DataError,
    FoldingError,
    ProfilingError,
    FileNotFoundError,
)


def _detail(exc):
    if isinstance(exc, ValidationError):
        return f"설정이 올바르지 않습니다: {exc.detail}"
    return str(exc)


class DeepformerCommand(BaseCommand):
    """
    deepformer 명령의 공통 인자와 종료 코드 규칙

    --config 로 RunConfig 를 읽고 --seed / --out / --f64 로 덮어쓴다.
    --threads 는 manage.py 가 numpy 를 읽기 전에 처리하므로 여기서는 받기만 한다.
    """

    requires_system_checks = []
    uses_config = True

    def add_arguments(self, parser):
        if self.uses_config:
            parser.add_argument("--config", required=True, help="INI 또는 JSON 실험 설정 파일")
        parser.add_argument("--seed", type=int, default=None, help="설정의 seed 를 덮어쓴다")
        parser.add_argument("--out", default=None, help="출력 디렉터리")
        parser.add_argument("--threads", type=int, default=None, help="BLAS 스레드 수")
        parser.add_argument("--f64", action="store_true", help="64-bit 검증 모드")

    def load_config(self, options):
        config = load_run_config(options["config"])
        return config.with_overrides(
            seed=options["seed"],
            out=options["out"],
            dtype="float64" if options["f64"] else None,
        )

    def output_dir(self, config, options, default):
        return Path(options["out"] or config.out or default)

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except CommandError:
            raise
        except USAGE_ERRORS as exc:
            raise CommandError(_detail(exc), returncode=2) from exc
        except Exception as exc:
            logger.exception("%s 실행 중 내부 오류", self.__class__.__module__.rsplit(".", 1)[-1])
            raise CommandError(f"내부 오류: {exc}", returncode=3) from exc

    def run(self, **options):
        raise NotImplementedError
