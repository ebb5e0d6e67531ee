from pathlib import Path

from apps.experiments.management.base import DeepformerCommand
from apps.experiments.runner import fold_checkpoint


class Command(DeepformerCommand):
    help = "admin 체크포인트의 ω 를 파라미터에 접어 post-LN 체크포인트를 만들고 최대 logit 차이를 출력합니다."
    uses_config = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--checkpoint", required=True, help="admin 체크포인트 디렉터리")
        parser.add_argument("--batches", type=int, default=1, help="logit 비교용 배치 수")

    def run(self, **options):
        source = Path(options["checkpoint"])
        out = Path(options["out"] or source.parent / f"{source.name}-folded")
        _, deviation = fold_checkpoint(source, out, seed=options["seed"] or 0, n_batches=options["batches"])
        self.stdout.write(f"max_logit_deviation={deviation:.3e}")
        self.stdout.write(self.style.SUCCESS(f"folded: {out}"))
