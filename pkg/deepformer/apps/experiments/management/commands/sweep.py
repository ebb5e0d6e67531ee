from apps.experiments.management.base import DeepformerCommand
from apps.experiments.runner import MATRIX_FILE, RESULTS_FILE, run_sweep, summarize


class Command(DeepformerCommand):
    help = "[sweep] 의 (N, M, init) 셀과 seed 를 모두 학습해 results.csv 와 +/-/= 유의성 행렬을 만듭니다."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--workers", type=int, default=1, help="셀을 동시에 돌릴 프로세스 수")
        parser.add_argument("--samples", type=int, default=None, help="bootstrap 표본 수")

    def run(self, **options):
        config = self.load_config(options)
        if options["seed"] is not None:
            config = config.with_overrides(seeds=(options["seed"],))
        out = self.output_dir(config, options, "runs/sweep")
        results, matrix = run_sweep(config, out, workers=max(1, options["workers"]), n_samples=options["samples"])

        for label, entry in summarize(results).items():
            mean = "n/a" if entry["mean_dev_ppl"] is None else f"{entry['mean_dev_ppl']:.4f}"
            self.stdout.write(f"{label:<16} runs={entry['runs']} diverged={entry['diverged']} dev_ppl={mean}")
        labels = list(dict.fromkeys(label for label, _ in matrix))
        width = max([len(label) for label in labels] + [1])
        self.stdout.write(" " * width + "  " + "  ".join(label.rjust(width) for label in labels))
        for a in labels:
            self.stdout.write(a.ljust(width) + "  " + "  ".join(matrix[a, b].rjust(width) for b in labels))
        self.stdout.write(self.style.SUCCESS(f"results: {out / RESULTS_FILE}, matrix: {out / MATRIX_FILE}"))
