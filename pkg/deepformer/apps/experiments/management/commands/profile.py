from apps.architecture.config import BlockMode
from apps.architecture.model import Transformer
from apps.experiments.management.base import DeepformerCommand
from apps.experiments.runner import PROFILE_FILE, build_corpus, profile_model


class Command(DeepformerCommand):
    help = "기본 초기화 모델을 한 번 forward 해 가지별 분산과 ω 를 계산하고 profile.json 으로 저장합니다."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--data", default=None, help="코퍼스 디렉터리 (없으면 설정의 과제를 생성)")

    def run(self, **options):
        config = self.load_config(options)
        out = self.output_dir(config, options, "runs/profile")
        out.mkdir(parents=True, exist_ok=True)

        corpus = build_corpus(config, options["data"])
        model = Transformer.initialize(config.model.replace(block_mode=BlockMode.ADMIN), config.seed)
        profile = profile_model(model, corpus.encode().train, config)
        profile.save(out / PROFILE_FILE)

        self.stdout.write(f"{'branch':>6}  {'name':<20}  {'variance':>12}  {'omega':>10}")
        for branch, variance, omega in zip(model.branches, profile.branch_variances, profile.omegas):
            if isinstance(variance, list):
                variance, omega = max(variance), max(omega)
            self.stdout.write(f"{branch.index:>6}  {branch.prefix:<20}  {variance:>12.6g}  {omega:>10.6g}")
        self.stdout.write(self.style.SUCCESS(f"profile: {out / PROFILE_FILE} (가지 {profile.n_branches} 개)"))
