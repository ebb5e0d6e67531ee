# experiments/runner.py
"""
실험 실행기

run 디렉터리 구성:
  config.json    실제로 쓴 설정
  profile.json   ω 프로파일 (admin)
  steps.csv / epochs.csv  학습 곡선
  test.hyp       test 분할 greedy 디코딩 결과
  result.txt     한 줄짜리 RESULT 기록
  checkpoint/    checkpoint.json + params.bin
  data/          학습에 쓴 코퍼스
"""

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from apps.admin_init.folding import fold_omega, max_logit_deviation
from apps.admin_init.profile import initialize_admin, select_profiling_batch
from apps.architecture.model import Transformer
from apps.corpus.batching import collate
from apps.corpus.tasks import ParallelCorpus, gen_task
from apps.evalmetrics.bleu import bleu_from_stats, sentence_stats
from apps.evalmetrics.bootstrap import paired_bootstrap
from apps.evalmetrics.report import evaluate_system
from apps.exceptions import DataError
from apps.experiments.checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from apps.training.records import CurveWriter
from apps.training.trainer import evaluate_perplexity, train_loop

__all__ = (
    "RunResult",
    "build_corpus",
    "build_model",
    "profile_model",
    "run_training",
    "decode_sentences",
    "evaluate_checkpoint",
    "sample_batches",
    "fold_checkpoint",
    "significance_matrix",
    "run_sweep",
    "summarize",
)

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
PROFILE_FILE = "profile.json"
RESULT_FILE = "result.txt"
HYPOTHESES_FILE = "test.hyp"
CHECKPOINT_DIR = "checkpoint"
DATA_DIR = "data"
RESULTS_FILE = "results.csv"
MATRIX_FILE = "matrix.csv"

RESULT_FIELDS = (
    "cell",
    "seed",
    "status",
    "reason",
    "step",
    "final_dev_ppl",
    "best_dev_ppl",
    "test_seq_acc",
    "bleu",
)


@dataclass
class RunResult:
    label: str
    seed: int
    diverged: bool = False
    reason: Optional[str] = None
    step: int = 0
    final_dev_ppl: Optional[float] = None
    best_dev_ppl: Optional[float] = None
    test_seq_acc: Optional[float] = None
    bleu: Optional[float] = None
    out_dir: Optional[str] = None
    stats: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def status(self):
        return "diverge" if self.diverged else "ok"

    def result_line(self):
        if self.diverged:
            return f"RESULT=diverge reason={self.reason} step={self.step}"

        def fmt(value, spec):
            return "n/a" if value is None else format(value, spec)

        return (
            f"RESULT=ok dev_ppl={fmt(self.final_dev_ppl, '.4f')} "
            f"test_seq_acc={fmt(self.test_seq_acc, '.4f')} bleu={fmt(self.bleu, '.2f')}"
        )

    def row(self):
        values = [self.label, self.seed, self.status, self.reason or "", self.step]
        for value in (self.final_dev_ppl, self.best_dev_ppl, self.test_seq_acc, self.bleu):
            values.append("" if value is None else repr(float(value)))
        return values


def build_corpus(config, data_dir=None):
    """data_dir 이 주어지면 그 코퍼스를 읽고, 아니면 설정의 과제를 생성한다."""
    if data_dir is None:
        return gen_task(config.task, config.data_seed)
    if not ParallelCorpus.exists(data_dir):
        raise DataError(f"코퍼스 디렉터리가 없거나 불완전합니다: {data_dir}")
    corpus = ParallelCorpus.load(data_dir)
    if len(corpus.vocab) != config.model.src_vocab_size:
        raise DataError(f"코퍼스 어휘 크기 {len(corpus.vocab)} 가 모델의 {config.model.src_vocab_size} 와 다릅니다.")
    return corpus


def profile_model(model, train_pairs, config):
    batch = select_profiling_batch(train_pairs, config.profiling_budget, seed=config.seed)
    return initialize_admin(model, batch, config.per_feature)


def build_model(config, train_pairs):
    """기본 초기화 후 admin 이면 프로파일링까지 마친 (model, profile)"""
    model = Transformer.initialize(config.model, config.seed)
    profile = profile_model(model, train_pairs, config) if config.is_admin else None
    return model, profile


def decode_sentences(model, vocab, sources, chunk_size=64):
    """토큰 문장 목록을 greedy 디코딩한 토큰 문장 목록"""
    hypotheses = []
    for start in range(0, len(sources), chunk_size):
        chunk = [vocab.encode(source) for source in sources[start : start + chunk_size]]
        outputs = model.greedy_decode_batch(chunk, model.config.max_len)
        hypotheses.extend(tuple(vocab.decode(output)) for output in outputs)
    return hypotheses


def _write_lines(path, sentences):
    Path(path).write_text("".join(" ".join(sentence) + "\n" for sentence in sentences), encoding="utf-8")


def run_training(config, out_dir, corpus=None):
    """
    설정 하나를 학습하고 run 디렉터리를 채운다.

    발산은 실패가 아니라 결과이므로 예외 없이 RunResult(diverged=True) 로 돌려준다.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / CONFIG_FILE)
    corpus = build_corpus(config) if corpus is None else corpus
    corpus.save(out / DATA_DIR)
    encoded = corpus.encode()

    model, profile = build_model(config, encoded.train)
    if profile is not None:
        profile.save(out / PROFILE_FILE)
    with CurveWriter(out) as writer:
        model, record = train_loop(
            model, encoded, config.schedule, config.epochs, config.seed, config.train_options(), writer
        )
    optimizer_steps = record.diverged_at - 1 if record.diverged else len(record.steps)
    save_checkpoint(
        Checkpoint(model, corpus.vocab, step=optimizer_steps, run_config=config.to_dict()), out / CHECKPOINT_DIR
    )

    result = RunResult(
        label=f"{config.model.label}:{config.init_mode.value}",
        seed=config.seed,
        diverged=record.diverged,
        reason=record.reason,
        step=record.diverged_at if record.diverged else optimizer_steps,
        final_dev_ppl=record.final_dev_ppl,
        best_dev_ppl=record.best_dev_ppl,
        out_dir=str(out),
    )
    if result.final_dev_ppl is None and encoded.dev and not record.diverged:
        result.final_dev_ppl = evaluate_perplexity(model, encoded.dev, config.budget)
    if corpus.test:
        hypotheses = decode_sentences(model, corpus.vocab, [pair.src for pair in corpus.test])
        references = [pair.tgt for pair in corpus.test]
        _write_lines(out / HYPOTHESES_FILE, hypotheses)
        result.stats = sentence_stats(hypotheses, references)
        result.bleu = bleu_from_stats(result.stats).score
        result.test_seq_acc = float(np.mean([h == tuple(r) for h, r in zip(hypotheses, references)]))

    (out / RESULT_FILE).write_text(result.result_line() + "\n", encoding="utf-8")
    logger.info("%s seed %d: %s", result.label, result.seed, result.result_line())
    return result


def _check_vocab(checkpoint, corpus, what):
    if checkpoint.vocab != corpus.vocab:
        raise DataError(f"{what} 의 어휘가 코퍼스 어휘와 다릅니다.")


def evaluate_checkpoint(checkpoint_dir, corpus_dir, split="test", baseline_dir=None, n_samples=None, seed=0):
    """
    체크포인트로 split 을 greedy 디코딩하고 BLEU 와 세분화 보고서를 만든다.

    baseline_dir 의 체크포인트가 주어지면 같은 문장에 대한 paired bootstrap 도 붙인다.
    """
    checkpoint = load_checkpoint(checkpoint_dir)
    if not ParallelCorpus.exists(corpus_dir):
        raise DataError(f"코퍼스 디렉터리가 없거나 불완전합니다: {corpus_dir}")
    corpus = ParallelCorpus.load(corpus_dir)
    _check_vocab(checkpoint, corpus, "체크포인트")
    pairs = corpus.split(split)
    if not pairs:
        raise DataError(f"{split} 분할에 문장이 없습니다.")

    sources = [pair.src for pair in pairs]
    references = [pair.tgt for pair in pairs]
    hypotheses = decode_sentences(checkpoint.model, corpus.vocab, sources)
    baseline = None
    if baseline_dir is not None:
        other = load_checkpoint(baseline_dir)
        _check_vocab(other, corpus, "비교 체크포인트")
        baseline = decode_sentences(other.model, corpus.vocab, sources)
    report = evaluate_system(
        hypotheses,
        references,
        training_references=[pair.tgt for pair in corpus.train],
        baseline=baseline,
        n_samples=n_samples,
        seed=seed,
    )
    return report, hypotheses


def sample_batches(vocab, config, seed, n_batches=1, batch_size=16, max_tokens=24):
    """어휘의 본문 토큰으로 만든 무작위 문장 배치"""
    rng = np.random.default_rng(seed)
    first = len(vocab) - len(vocab.content_tokens)
    longest = max(1, min(max_tokens, config.max_len - 1))
    batches = []
    for _ in range(n_batches):
        pairs = []
        for _ in range(batch_size):
            src = rng.integers(first, len(vocab), size=int(rng.integers(1, longest + 1))).tolist()
            tgt = rng.integers(first, len(vocab), size=int(rng.integers(1, longest + 1))).tolist()
            pairs.append((src, tgt))
        batches.append(collate(pairs))
    return batches


def fold_checkpoint(checkpoint_dir, out_dir, seed=0, n_batches=1):
    """admin 체크포인트의 ω 를 접어 post-LN 체크포인트로 저장하고 최대 logit 차이를 돌려준다."""
    checkpoint = load_checkpoint(checkpoint_dir)
    folded = fold_omega(checkpoint.model)
    deviation = max_logit_deviation(
        checkpoint.model, folded, sample_batches(checkpoint.vocab, checkpoint.model.config, seed, n_batches)
    )
    result = Checkpoint(folded, checkpoint.vocab, step=checkpoint.step, run_config=checkpoint.run_config)
    save_checkpoint(result, out_dir)
    return result, deviation


def significance_matrix(labels, stats, n_samples=None, seed=0):
    """
    셀 (i, j) 는 행 시스템이 열 시스템보다 유의하게 나으면 +, 나쁘면 -, 아니면 = 이다.

    stats[label] 은 seed 들의 test 문장별 BLEU 통계를 이어 붙인 [n, 10] 배열이다.
    """
    matrix = {}
    for a in labels:
        for b in labels:
            if a == b:
                matrix[a, b] = "="
                continue
            if (b, a) in matrix:
                matrix[a, b] = {"+": "-", "-": "+", "=": "="}[matrix[b, a]]
                continue
            if paired_bootstrap(stats[a], stats[b], n_samples=n_samples, seed=seed).significant:
                matrix[a, b] = "+"
            elif paired_bootstrap(stats[b], stats[a], n_samples=n_samples, seed=seed).significant:
                matrix[a, b] = "-"
            else:
                matrix[a, b] = "="
    return matrix


def _init_worker():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
    import django

    django.setup()


def _run_cell(job):
    config, out_dir, data_dir = job
    return run_training(config, out_dir, corpus=ParallelCorpus.load(data_dir))


def _cell_dir(out, cell, seed):
    return out / "cells" / f"{cell.n_enc_layers}L-{cell.n_dec_layers}L-{cell.init_mode.value}" / f"seed{seed}"


def run_sweep(config, out_dir, workers=1, n_samples=None):
    """
    모든 (셀, seed) 를 학습해 results.csv 를 한 줄씩 쓰고 마지막에 matrix.csv 를 쓴다.

    발산이 아닌 실패가 나면 그때까지의 results.csv 를 남기고 예외를 그대로 올린다.
    """
    if not config.cells:
        raise DataError("sweep 설정에 셀이 없습니다.")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / CONFIG_FILE)
    corpus = build_corpus(config)
    corpus.save(out / DATA_DIR)

    jobs = [
        (config.for_cell(cell, seed), _cell_dir(out, cell, seed), out / DATA_DIR)
        for cell in config.cells
        for seed in config.seeds
    ]
    logger.info("sweep 시작: 셀 %d 개 x seed %d 개 (workers=%d)", len(config.cells), len(config.seeds), workers)

    results = []
    with open(out / RESULTS_FILE, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(RESULT_FIELDS)
        stream.flush()
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as executor:
                for result in executor.map(_run_cell, jobs):
                    results.append(result)
                    writer.writerow(result.row())
                    stream.flush()
        else:
            for job in jobs:
                result = _run_cell(job)
                results.append(result)
                writer.writerow(result.row())
                stream.flush()

    labels = [cell.label for cell in config.cells]
    stats = {}
    for label in labels:
        parts = [result.stats for result in results if result.label == label and result.stats is not None]
        if parts:
            stats[label] = np.concatenate(parts)
    labels = [label for label in labels if label in stats]
    matrix = significance_matrix(labels, stats, n_samples=n_samples, seed=config.seed)
    with open(out / MATRIX_FILE, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow([""] + labels)
        for a in labels:
            writer.writerow([a] + [matrix[a, b] for b in labels])

    diverged = sum(result.diverged for result in results)
    logger.info("sweep 완료: 실행 %d 개, 발산 %d 개", len(results), diverged)
    return results, matrix


def summarize(results):
    """셀별 평균 dev perplexity 와 발산 횟수"""
    summary = {}
    for result in results:
        entry = summary.setdefault(result.label, {"runs": 0, "diverged": 0, "dev_ppl": []})
        entry["runs"] += 1
        entry["diverged"] += result.diverged
        if result.final_dev_ppl is not None and math.isfinite(result.final_dev_ppl) and not result.diverged:
            entry["dev_ppl"].append(result.final_dev_ppl)
    for entry in summary.values():
        values = entry.pop("dev_ppl")
        entry["mean_dev_ppl"] = float(np.mean(values)) if values else None
    return summary
