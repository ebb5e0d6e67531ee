# training/trainer.py
import contextlib
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from django.conf import settings

from apps.architecture.config import BlockMode
from apps.corpus.batching import make_batches
from apps.corpus.vocab import PAD_ID
from apps.exceptions import ConfigurationError, DataError
from apps.numerics import ops
from apps.numerics.tensor import recording
from apps.training.divergence import DivergenceMonitor
from apps.training.optim import RAdam
from apps.training.records import EpochRecord, StepRecord, TrainRecord
from apps.training.schedule import lr_at_step

__all__ = (
    "TrainOptions",
    "train_loop",
    "accumulate_gradients",
    "global_grad_norm",
    "clip_gradients",
    "evaluate_perplexity",
    "token_accuracy",
    "sequence_accuracy",
)

logger = logging.getLogger(__name__)

MAX_LOG_PPL = 700.0


@dataclass(frozen=True)
class TrainOptions:
    token_budget: Optional[int] = None
    accumulation: int = 1
    clip_norm: Optional[float] = None
    explosion_factor: Optional[float] = None
    patience: Optional[int] = None
    log_every: Optional[int] = None
    # epoch 마다 train perplexity 를 잴 문장 수 (앞에서부터)
    train_eval_size: int = 1000

    def __post_init__(self):
        if self.accumulation < 1:
            raise ConfigurationError(f"accumulation 은 1 이상이어야 합니다: {self.accumulation}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigurationError(f"clip_norm 은 양수여야 합니다: {self.clip_norm}")

    @property
    def budget(self):
        return settings.DEEPFORMER["TOKEN_BUDGET"] if self.token_budget is None else self.token_budget

    @property
    def log_interval(self):
        return settings.DEEPFORMER["LOG_EVERY"] if self.log_every is None else self.log_every


@contextlib.contextmanager
def evaluating(model):
    was_training, rng = model.training, model.rng
    model.eval()
    try:
        yield model
    finally:
        if was_training:
            model.train(rng)


def accumulate_gradients(model, batches, smoothing=None):
    """
    여러 micro-batch 의 기울기를 더한다.

    각 배치의 합계 loss 를 구간 전체의 target 토큰 수로 나누므로, 결과는 모든 문장을
    한 배치로 묶었을 때의 평균 loss 기울기와 같다. 구간의 평균 loss 를 돌려준다.
    """
    total_tokens = sum(batch.n_target_tokens for batch in batches)
    if total_tokens == 0:
        raise DataError("누적 구간에 target 토큰이 없습니다.")
    scale = 1.0 / total_tokens
    loss_value = 0.0
    for batch in batches:
        with recording():
            loss = model.loss(batch, smoothing=smoothing, reduction="sum") * scale
            loss.backward()
        loss_value += loss.item()
    return loss_value


def global_grad_norm(params):
    return math.sqrt(sum(float(np.sum(np.square(p.grad, dtype=np.float64))) for p in params))


def clip_gradients(params, max_norm, norm=None):
    norm = global_grad_norm(params) if norm is None else norm
    if norm > max_norm:
        factor = max_norm / norm
        for param in params:
            param.grad = param.grad * np.asarray(factor, dtype=param.grad.dtype)
    return norm


def _windows(batches, size):
    return [batches[i : i + size] for i in range(0, len(batches), size)]


def train_loop(model, corpus, schedule, epochs, seed, options=None, writer=None):
    """
    RAdam + warmup 스케줄로 model 을 제자리에서 학습시킨다.

    발산(NaN loss / 기울기, loss 폭주)이 감지되면 그 스텝의 옵티마이저 갱신 없이 멈추고
    record 에 표시한다. (model, TrainRecord) 를 돌려준다. writer 가 있으면 곡선을 바로 쓴다.
    """
    options = options or TrainOptions()
    if model.block_mode is BlockMode.ADMIN and model.omega_profile is None:
        raise ConfigurationError("admin 모드 모델은 학습 전에 ω 프로파일링을 거쳐야 합니다.")
    if epochs < 0:
        raise ConfigurationError(f"epochs 는 0 이상이어야 합니다: {epochs}")
    record = TrainRecord()
    if epochs == 0:
        return model, record
    if not corpus.train:
        raise DataError("학습 문장이 없습니다.")

    params = model.parameters()
    optimizer = RAdam(params)
    monitor = DivergenceMonitor(options.explosion_factor, options.patience)
    train_sample = corpus.train[: options.train_eval_size]
    model.train(np.random.default_rng([seed, 0]))
    logger.info(
        "학습 시작: %s, epochs=%d, seed=%d, 파라미터 %d 개, 문장 %d",
        model.config.label,
        epochs,
        seed,
        model.parameter_count(),
        len(corpus.train),
    )

    step = 0
    try:
        for epoch in range(1, epochs + 1):
            batches = make_batches(corpus.train, options.budget, seed=[seed, epoch])
            for window in _windows(batches, options.accumulation):
                step += 1
                lr = lr_at_step(step, schedule)
                optimizer.zero_grad()
                loss = accumulate_gradients(model, window)
                grad_norm = global_grad_norm(params)
                verdict = monitor.update(step, loss, grad_norm)
                finite = math.isfinite(loss) and math.isfinite(grad_norm)
                step_record = StepRecord(step, lr, loss, grad_norm, nan_flag=not finite)
                record.steps.append(step_record)
                if writer is not None:
                    writer.write_step(step_record)
                if verdict:
                    record.mark_diverged(verdict.reason, step)
                    logger.warning("epoch %d step %d 에서 학습 중단 (%s)", epoch, step, verdict.reason)
                    return model, record
                if options.clip_norm is not None:
                    clip_gradients(params, options.clip_norm, grad_norm)
                optimizer.step(lr)
                if step % options.log_interval == 0:
                    logger.info("step %d lr=%.3e loss=%.4f grad_norm=%.3f", step, lr, loss, grad_norm)

            with evaluating(model):
                train_ppl = evaluate_perplexity(model, train_sample, options.budget)
                dev_ppl = evaluate_perplexity(model, corpus.dev, options.budget) if corpus.dev else None
                dev_acc = token_accuracy(model, corpus.dev, options.budget) if corpus.dev else None
            epoch_record = EpochRecord(epoch, train_ppl, dev_ppl, dev_acc)
            record.epochs.append(epoch_record)
            if writer is not None:
                writer.write_epoch(epoch_record)
            logger.info("epoch %d: train_ppl=%.4f dev_ppl=%s dev_token_acc=%s", epoch, train_ppl, dev_ppl, dev_acc)
    finally:
        model.eval()
    return model, record


def evaluate_perplexity(model, pairs, token_budget=None):
    """exp(pad 가 아닌 토큰의 평균 NLL). dropout 과 label smoothing 없이 잰다."""
    if not pairs:
        raise DataError("perplexity 를 잴 문장이 없습니다.")
    budget = settings.DEEPFORMER["TOKEN_BUDGET"] if token_budget is None else token_budget
    total, tokens = 0.0, 0
    with evaluating(model):
        for batch in make_batches(pairs, budget, seed=0):
            logits = model.forward(batch)
            total += ops.cross_entropy_ls(logits, batch.labels, 0.0, PAD_ID, "sum").item()
            tokens += batch.n_target_tokens
    mean = total / tokens
    # exp 가 넘치는 값은 inf 로 둔다
    return math.exp(mean) if mean < MAX_LOG_PPL else math.inf


def token_accuracy(model, pairs, token_budget=None):
    """teacher forcing 상태에서 argmax 가 정답 토큰과 같은 비율"""
    if not pairs:
        raise DataError("정확도를 잴 문장이 없습니다.")
    budget = settings.DEEPFORMER["TOKEN_BUDGET"] if token_budget is None else token_budget
    correct, tokens = 0, 0
    with evaluating(model):
        for batch in make_batches(pairs, budget, seed=0):
            predicted = model.forward(batch).data.argmax(axis=-1)
            correct += int(((predicted == batch.labels) & batch.tgt_mask).sum())
            tokens += batch.n_target_tokens
    return correct / tokens


def sequence_accuracy(model, pairs, max_len=None, chunk_size=64):
    """greedy 디코딩 결과가 target 과 정확히 같은 문장의 비율"""
    if not pairs:
        raise DataError("정확도를 잴 문장이 없습니다.")
    max_len = model.config.max_len if max_len is None else max_len
    exact = 0
    for start in range(0, len(pairs), chunk_size):
        chunk = pairs[start : start + chunk_size]
        outputs = model.greedy_decode_batch([list(src) for src, _ in chunk], max_len)
        exact += sum(list(out) == list(tgt) for out, (_, tgt) in zip(outputs, chunk))
    return exact / len(pairs)
