from apps.corpus.tasks import gen_task
from apps.experiments.management.base import DeepformerCommand


class Command(DeepformerCommand):
    help = "설정의 [task] 로 합성 병렬 코퍼스를 만들어 vocab.txt 와 {train,dev,test}.{src,tgt} 로 저장합니다."

    def run(self, **options):
        config = self.load_config(options)
        seed = config.data_seed if options["seed"] is None else options["seed"]
        out = self.output_dir(config, options, "data")
        corpus = gen_task(config.task, seed)
        corpus.save(out)
        self.stdout.write(
            self.style.SUCCESS(
                f"{config.task.kind.value}: train={len(corpus.train)} dev={len(corpus.dev)} "
                f"test={len(corpus.test)} -> {out}"
            )
        )
