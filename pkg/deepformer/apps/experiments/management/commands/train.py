from apps.experiments.management.base import DeepformerCommand
from apps.experiments.runner import build_corpus, run_training


class Command(DeepformerCommand):
    help = (
        "설정대로 모델을 학습해 체크포인트, 학습 곡선 CSV, RESULT 한 줄을 남깁니다. "
        "init=admin 이면 학습 전에 프로파일링을 먼저 합니다. 발산도 종료 코드 0 입니다."
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--data", default=None, help="코퍼스 디렉터리 (없으면 설정의 과제를 생성)")
        parser.add_argument("--epochs", type=int, default=None, help="설정의 epochs 를 덮어쓴다")

    def run(self, **options):
        config = self.load_config(options).with_overrides(epochs=options["epochs"])
        out = self.output_dir(config, options, f"runs/{config.model.label}-{config.init_mode.value}-seed{config.seed}")
        corpus = build_corpus(config, options["data"])
        result = run_training(config, out, corpus=corpus)
        self.stdout.write(result.result_line())
        style = self.style.WARNING if result.diverged else self.style.SUCCESS
        self.stdout.write(style(f"run: {out}"))
