from pathlib import Path

from apps.evalmetrics.report import render_text, report_to_json
from apps.experiments.management.base import DeepformerCommand
from apps.experiments.runner import evaluate_checkpoint


class Command(DeepformerCommand):
    help = "체크포인트로 test 분할을 greedy 디코딩해 BLEU 와 세분화 보고서(JSON)를 만듭니다."
    uses_config = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--checkpoint", required=True, help="체크포인트 디렉터리")
        parser.add_argument("--data", required=True, help="코퍼스 디렉터리")
        parser.add_argument("--split", choices=("train", "dev", "test"), default="test")
        parser.add_argument("--baseline", default=None, help="paired bootstrap 으로 비교할 체크포인트")
        parser.add_argument("--samples", type=int, default=None, help="bootstrap 표본 수")

    def run(self, **options):
        report, hypotheses = evaluate_checkpoint(
            options["checkpoint"],
            options["data"],
            split=options["split"],
            baseline_dir=options["baseline"],
            n_samples=options["samples"],
            seed=options["seed"] or 0,
        )
        out = Path(options["out"] or Path(options["checkpoint"]).parent / "eval")
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_bytes(report_to_json(report))
        (out / f"{options['split']}.hyp").write_text(
            "".join(" ".join(sentence) + "\n" for sentence in hypotheses), encoding="utf-8"
        )
        self.stdout.write(render_text(report), ending="")
        self.stdout.write(self.style.SUCCESS(f"report: {out / 'report.json'}"))
