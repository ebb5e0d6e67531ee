# apps/training/tests.py
import csv
import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
from django.test import SimpleTestCase

from apps.architecture.config import BlockMode, ModelConfig
from apps.architecture.model import Transformer
from apps.corpus.batching import collate
from apps.corpus.tasks import EncodedCorpus, TaskKind, TaskSpec, gen_task
from apps.corpus.vocab import PAD_ID
from apps.exceptions import ConfigurationError, DataError, DivergenceError
from apps.numerics import ops
from apps.numerics.tensor import Parameter, Tensor
from apps.training.divergence import LOSS_EXPLOSION, NAN_GRAD, NAN_LOSS, DivergenceMonitor, detect_divergence
from apps.training.optim import OptimizerState, RAdam, radam_step
from apps.training.records import CurveWriter, EpochRecord, StepRecord, TrainRecord
from apps.training.schedule import Schedule, lr_at_step
from apps.training.trainer import (
    TrainOptions,
    accumulate_gradients,
    clip_gradients,
    evaluate_perplexity,
    global_grad_norm,
    sequence_accuracy,
    token_accuracy,
    train_loop,
)


class PerfectModel:
    """정답 위치에 큰 logit 을 주는 가짜 모델"""

    def __init__(self, vocab_size=11):
        self.vocab_size = vocab_size
        self.training = False
        self.rng = None

    def train(self, rng):
        self.training, self.rng = True, rng

    def eval(self):
        self.training, self.rng = False, None

    def forward(self, batch):
        logits = np.zeros(batch.labels.shape + (self.vocab_size,))
        np.put_along_axis(logits, batch.labels[..., None], 50.0, axis=-1)
        return Tensor(logits)


class BaseTrainingTestCase(SimpleTestCase):
    """학습 테스트의 공통 기능"""

    def make_model(self, n_enc=1, n_dec=1, mode=BlockMode.POSTLN, seed=0, **kwargs):
        """좁은 64-bit 모델 헬퍼"""
        values = {
            "n_enc_layers": n_enc,
            "n_dec_layers": n_dec,
            "d_model": 16,
            "d_ff": 32,
            "n_heads": 2,
            "src_vocab_size": 12,
            "tgt_vocab_size": 12,
            "dropout": 0.1,
            "block_mode": mode,
            "max_len": 32,
            "dtype": "float64",
        }
        values.update(kwargs)
        return Transformer.initialize(ModelConfig(**values), seed=seed)

    def make_pairs(self, n, seed=0, vocab=12, max_len=7):
        """랜덤 id 문장 쌍 헬퍼"""
        rng = np.random.default_rng(seed)
        return [
            (
                rng.integers(4, vocab, size=int(rng.integers(2, max_len))).tolist(),
                rng.integers(4, vocab, size=int(rng.integers(2, max_len))).tolist(),
            )
            for _ in range(n)
        ]

    def make_corpus(self, n_train=24, n_dev=6, seed=0):
        return EncodedCorpus(train=self.make_pairs(n_train, seed), dev=self.make_pairs(n_dev, seed + 100), test=[])

    def snapshot(self, model):
        return {name: p.data.copy() for name, p in model.params.items()}


class ScheduleTestCase(BaseTrainingTestCase):
    """warmup + 역제곱근 스케줄 테스트"""

    def test_peak_at_warmup(self):
        """t = warmup 에서 peak"""
        schedule = Schedule(warmup_steps=8000, peak_lr=0.0007)
        self.assertAlmostEqual(lr_at_step(8000, schedule), 0.0007, places=15)

    def test_warmup_and_decay(self):
        """warmup/4 에서 peak/4, 4×warmup 에서 peak/2"""
        schedule = Schedule(warmup_steps=400, peak_lr=0.001)
        self.assertAlmostEqual(lr_at_step(100, schedule), 0.00025, places=15)
        self.assertAlmostEqual(lr_at_step(1600, schedule), 0.0005, places=15)

    def test_continuous_at_warmup(self):
        """warmup 근처에서 연속이고 정점이 하나"""
        schedule = Schedule(warmup_steps=50, peak_lr=1.0)
        values = [lr_at_step(t, schedule) for t in range(1, 200)]
        self.assertEqual(int(np.argmax(values)) + 1, 50)
        self.assertAlmostEqual(lr_at_step(49, schedule), 49 / 50)
        self.assertAlmostEqual(lr_at_step(51, schedule), math.sqrt(50 / 51))

    def test_presets(self):
        """fr / de 프리셋"""
        self.assertEqual(Schedule.from_preset("fr"), Schedule(8000, 0.0007))
        self.assertEqual(Schedule.from_preset("de"), Schedule(4000, 0.001))
        with self.assertRaises(ConfigurationError):
            Schedule.from_preset("en")

    def test_invalid(self):
        """잘못된 스케줄과 스텝 0"""
        with self.assertRaises(ConfigurationError):
            Schedule(warmup_steps=0, peak_lr=0.1)
        with self.assertRaises(ConfigurationError):
            Schedule(warmup_steps=10, peak_lr=0.0)
        with self.assertRaises(ConfigurationError):
            lr_at_step(0, Schedule(10, 0.1))


class RAdamTestCase(BaseTrainingTestCase):
    """RAdam 테스트"""

    def quadratic_grad(self, w):
        w.grad = 2.0 * (w.data - 3.0)

    def test_zero_gradient_keeps_parameters(self):
        """기울기가 늘 0 이면 파라미터가 그대로"""
        w = Parameter(np.array([1.5, -2.0]), name="w")
        state = OptimizerState()
        for _ in range(20):
            w.zero_grad()
            radam_step([w], state, lr=0.1)
        np.testing.assert_array_equal(w.data, [1.5, -2.0])
        self.assertEqual(state.t, 20)

    def test_first_step_is_momentum(self):
        """t = 1 은 ρ_1 ≤ 4 라서 Δ = -lr·g"""
        state = OptimizerState()
        self.assertLessEqual(state.rho(1), 4.0)
        w = Parameter(np.array([0.5]), name="w")
        w.grad = np.array([2.0])
        rectified = radam_step([w], state, lr=0.1)
        self.assertFalse(rectified)
        self.assertAlmostEqual(float(w.data[0]), 0.5 - 0.1 * 2.0, places=12)

    def test_rectification_starts_after_threshold(self):
        """β2 = 0.999 에서 ρ_t 는 t = 5 부터 4 를 넘는다"""
        state = OptimizerState()
        self.assertLessEqual(state.rho(4), 4.0)
        self.assertGreater(state.rho(5), 4.0)
        self.assertAlmostEqual(state.rho_inf, 1999.0)
        self.assertIsNone(state.rectification(4))
        self.assertLess(state.rectification(5), state.rectification(100))
        self.assertLess(state.rectification(100), 0.3)
        self.assertLess(state.rectification(5000), 1.0)

    def test_converges_on_quadratic(self):
        """(w-3)² 를 0 에서 lr 0.1 로 최적화하면 3 근처로 수렴"""
        w = Parameter(np.array([0.0]), name="w")
        optimizer = RAdam([w], beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0)
        for _ in range(300):
            optimizer.zero_grad()
            self.quadratic_grad(w)
            optimizer.step(0.1)
        self.assertLess(abs(float(w.data[0]) - 3.0), 0.05)

    def test_moments_match_parameter_shapes(self):
        """m, v 는 파라미터 shape 를 따른다"""
        w = Parameter(np.ones((3, 2)), name="w")
        b = Parameter(np.ones(2), name="b")
        optimizer = RAdam([w, b])
        w.grad = np.full((3, 2), 0.5)
        b.grad = np.full(2, -0.5)
        optimizer.step(0.01)
        self.assertEqual(optimizer.state.m["w"].shape, (3, 2))
        self.assertEqual(optimizer.state.v["b"].shape, (2,))
        self.assertEqual(optimizer.step_count, 1)

    def test_non_finite_gradient(self):
        """NaN 기울기는 DivergenceError 이고 상태가 바뀌지 않는다"""
        w = Parameter(np.array([1.0]), name="w")
        w.grad = np.array([np.nan])
        state = OptimizerState()
        with self.assertRaises(DivergenceError):
            radam_step([w], state, lr=0.1)
        self.assertEqual(state.t, 0)
        self.assertEqual(float(w.data[0]), 1.0)

    def test_float32_parameters_stay_float32(self):
        """32-bit 파라미터는 갱신 후에도 32-bit"""
        w = Parameter(np.ones(4, dtype=np.float32), name="w")
        w.grad = np.ones(4, dtype=np.float32)
        RAdam([w]).step(0.01)
        self.assertEqual(w.data.dtype, np.float32)


class DivergenceTestCase(BaseTrainingTestCase):
    """발산 감지 테스트"""

    def test_nan_loss(self):
        """NaN loss 는 즉시 nan-loss"""
        verdict = detect_divergence([(1, 2.0, 1.0), (2, float("nan"), 1.0)])
        self.assertTrue(verdict)
        self.assertEqual((verdict.reason, verdict.step), (NAN_LOSS, 2))

    def test_inf_grad(self):
        """유한하지 않은 기울기 norm 은 nan-grad"""
        verdict = detect_divergence([(1, 2.0, math.inf)])
        self.assertEqual(verdict.reason, NAN_GRAD)

    def test_decreasing_losses(self):
        """유한하고 줄어드는 loss 는 발산이 아니다"""
        records = [(t, 10.0 / t, 1.0) for t in range(1, 1000)]
        self.assertFalse(detect_divergence(records))

    def test_bounded_losses_never_fire(self):
        """최솟값의 10 배 이내에서 흔들리는 loss 는 발산이 아니다"""
        rng = np.random.default_rng(0)
        losses = 1.0 + 8.9 * rng.random(2000)
        records = [(t, float(loss), 1.0) for t, loss in enumerate(losses, start=1)]
        self.assertFalse(detect_divergence(records))

    def test_loss_explosion(self):
        """건강한 최솟값 뒤에 2^t 로 터지면 연속 200 번째 스텝에서 loss-explosion"""
        records = [(0, 1.0, 1.0)] + [(t, 2.0**t, 1.0) for t in range(1, 400)]
        verdict = detect_divergence(records)
        self.assertEqual(verdict.reason, LOSS_EXPLOSION)
        # 2^t > 10 은 t = 4 부터
        self.assertEqual(verdict.step, 4 + 199)

    def test_streak_resets(self):
        """폭주가 중간에 끊기면 연속 횟수가 다시 시작된다"""
        monitor = DivergenceMonitor(explosion_factor=10.0, patience=3)
        monitor.update(1, 1.0)
        monitor.update(2, 20.0)
        monitor.update(3, 20.0)
        monitor.update(4, 5.0)
        monitor.update(5, 20.0)
        self.assertFalse(monitor.update(6, 20.0))
        self.assertEqual(monitor.update(7, 20.0).reason, LOSS_EXPLOSION)

    def test_step_records(self):
        """StepRecord 목록도 받는다"""
        records = [StepRecord(1, 0.1, 2.0, 1.0), StepRecord(2, 0.1, 2.0, float("nan"))]
        self.assertEqual(detect_divergence(records).reason, NAN_GRAD)


class CurveWriterTestCase(BaseTrainingTestCase):
    """학습 곡선 CSV 테스트"""

    def test_csv_layout(self):
        """steps.csv / epochs.csv 헤더와 값"""
        record = TrainRecord(
            steps=[StepRecord(1, 0.001, 2.5, 0.75), StepRecord(2, 0.002, float("nan"), 1.0, nan_flag=True)],
            epochs=[EpochRecord(1, 12.5, None, None)],
        )
        with tempfile.TemporaryDirectory() as tmp:
            record.write_csv(tmp)
            with open(Path(tmp) / "steps.csv", newline="") as handle:
                steps = list(csv.reader(handle))
            with open(Path(tmp) / "epochs.csv", newline="") as handle:
                epochs = list(csv.reader(handle))
        self.assertEqual(steps[0], ["step", "lr", "loss", "grad_norm", "nan_flag"])
        self.assertEqual(steps[1], ["1", "0.001", "2.5", "0.75", "0"])
        self.assertEqual(steps[2], ["2", "0.002", "nan", "1.0", "1"])
        self.assertEqual(epochs, [["epoch", "train_ppl", "dev_ppl", "dev_token_acc"], ["1", "12.5", "", ""]])

    def test_best_dev_ppl_skips_non_finite(self):
        """best_dev_ppl 은 유한한 값 중 최솟값"""
        record = TrainRecord(
            epochs=[EpochRecord(1, 5.0, 4.0, 0.5), EpochRecord(2, 3.0, math.inf, 0.6), EpochRecord(3, 2.0, 3.5, 0.7)]
        )
        self.assertEqual(record.best_dev_ppl, 3.5)
        self.assertEqual(record.final_dev_ppl, 3.5)


class EvaluationTestCase(BaseTrainingTestCase):
    """평가 지표 테스트"""

    def test_uniform_logits_perplexity(self):
        """logits 가 모두 같으면 perplexity 는 어휘 크기"""
        model = self.make_model(src_vocab_size=11, tgt_vocab_size=11)
        model.params["out_proj.w"].assign(np.zeros_like(model.params["out_proj.w"].data))
        model.params["out_proj.b"].assign(np.zeros_like(model.params["out_proj.b"].data))
        ppl = evaluate_perplexity(model, self.make_pairs(10, vocab=11))
        self.assertAlmostEqual(ppl, 11.0, delta=1e-6)

    def test_perfect_predictor(self):
        """정답만 고르는 모델의 perplexity 는 1"""
        ppl = evaluate_perplexity(PerfectModel(), self.make_pairs(10, vocab=11))
        self.assertAlmostEqual(ppl, 1.0, places=12)
        self.assertEqual(token_accuracy(PerfectModel(), self.make_pairs(10, vocab=11)), 1.0)

    def test_matches_loss_op(self):
        """한 배치에서 exp(ε=0 cross entropy) 와 같다"""
        model = self.make_model()
        pairs = self.make_pairs(5)
        batch = collate(pairs)
        expected = math.exp(ops.cross_entropy_ls(model.forward(batch), batch.labels, 0.0, PAD_ID).item())
        self.assertLess(abs(evaluate_perplexity(model, pairs, token_budget=10_000) - expected), 1e-10)

    def test_dropout_off_and_mode_restored(self):
        """평가 중에는 dropout 이 꺼지고 끝나면 학습 모드가 돌아온다"""
        model = self.make_model(dropout=0.5)
        pairs = self.make_pairs(6)
        rng = np.random.default_rng(0)
        model.train(rng)
        first = evaluate_perplexity(model, pairs)
        second = evaluate_perplexity(model, pairs)
        self.assertEqual(first, second)
        self.assertTrue(model.training)
        self.assertIs(model.rng, rng)

    def test_sequence_accuracy(self):
        """greedy 결과가 target 과 정확히 같은 비율"""
        model = self.make_model()
        pairs = self.make_pairs(4)
        decoded = [model.greedy_decode(src, 10) for src, _ in pairs]
        mixed = [(pairs[0][0], decoded[0]), (pairs[1][0], decoded[1] + [5]), (pairs[2][0], decoded[2])]
        self.assertAlmostEqual(sequence_accuracy(model, mixed, max_len=10), 2 / 3)

    def test_empty(self):
        """빈 평가 집합은 DataError"""
        with self.assertRaises(DataError):
            evaluate_perplexity(self.make_model(), [])
        with self.assertRaises(DataError):
            sequence_accuracy(self.make_model(), [])


class GradientTestCase(BaseTrainingTestCase):
    """기울기 누적과 clipping 테스트"""

    def collect_grads(self, model, batches):
        model.zero_grad()
        loss = accumulate_gradients(model, batches)
        return loss, {name: p.grad.copy() for name, p in model.params.items()}

    def test_accumulation_matches_single_batch(self):
        """micro-batch 누적 기울기는 한꺼번에 묶은 배치의 기울기와 같다"""
        model = self.make_model(n_enc=2, n_dec=2, label_smoothing=0.1)
        pairs = self.make_pairs(9, seed=3)
        loss_a, split = self.collect_grads(model, [collate(pairs[:2]), collate(pairs[2:6]), collate(pairs[6:])])
        loss_b, whole = self.collect_grads(model, [collate(pairs)])
        self.assertAlmostEqual(loss_a, loss_b, places=10)
        for name in whole:
            np.testing.assert_allclose(split[name], whole[name], rtol=1e-6, atol=1e-12, err_msg=name)

    def test_clip_gradients(self):
        """전역 norm 이 한계를 넘으면 비율대로 줄인다"""
        a = Parameter(np.zeros(2), name="a")
        b = Parameter(np.zeros(1), name="b")
        a.grad = np.array([3.0, 0.0])
        b.grad = np.array([4.0])
        self.assertAlmostEqual(global_grad_norm([a, b]), 5.0)
        clip_gradients([a, b], 1.0)
        self.assertAlmostEqual(global_grad_norm([a, b]), 1.0)
        np.testing.assert_allclose(a.grad, [0.6, 0.0])
        clip_gradients([a, b], 2.0)
        np.testing.assert_allclose(b.grad, [0.8])


class TrainLoopTestCase(BaseTrainingTestCase):
    """학습 루프 테스트"""

    schedule = Schedule(warmup_steps=4, peak_lr=0.003)

    def test_zero_epochs(self):
        """epoch 0 이면 모델이 그대로이고 기록이 비어 있다"""
        model = self.make_model()
        before = self.snapshot(model)
        model, record = train_loop(model, self.make_corpus(), self.schedule, epochs=0, seed=0)
        self.assertEqual(len(record), 0)
        self.assertEqual(record.epochs, [])
        for name, value in before.items():
            np.testing.assert_array_equal(model.params[name].data, value)

    def test_records_steps_and_epochs(self):
        """스텝과 epoch 기록, 파라미터 변화"""
        model = self.make_model()
        before = self.snapshot(model)
        options = TrainOptions(token_budget=48)
        model, record = train_loop(model, self.make_corpus(), self.schedule, epochs=2, seed=0, options=options)
        self.assertFalse(record.diverged)
        self.assertEqual([e.epoch for e in record.epochs], [1, 2])
        self.assertEqual([s.step for s in record.steps], list(range(1, len(record) + 1)))
        for entry in record.epochs:
            self.assertGreaterEqual(entry.train_ppl, 1.0)
            self.assertGreaterEqual(entry.dev_ppl, 1.0)
            self.assertTrue(0.0 <= entry.dev_token_acc <= 1.0)
        self.assertTrue(any(not np.array_equal(model.params[n].data, v) for n, v in before.items()))
        self.assertFalse(model.training)

    def test_accumulation_reduces_steps(self):
        """accumulation k 는 스텝 수를 약 1/k 로 줄인다"""
        corpus = self.make_corpus()
        options = TrainOptions(token_budget=24)
        _, plain = train_loop(self.make_model(), corpus, self.schedule, epochs=1, seed=0, options=options)
        options = TrainOptions(token_budget=24, accumulation=3)
        _, grouped = train_loop(self.make_model(), corpus, self.schedule, epochs=1, seed=0, options=options)
        self.assertEqual(len(grouped), math.ceil(len(plain) / 3))

    def test_deterministic(self):
        """같은 seed 면 기록과 최종 파라미터가 같다"""
        results = []
        for _ in range(2):
            model, record = train_loop(
                self.make_model(), self.make_corpus(), self.schedule, epochs=2, seed=5, options=TrainOptions(48)
            )
            results.append((model, record))
        (model_a, record_a), (model_b, record_b) = results
        self.assertEqual(record_a.steps, record_b.steps)
        self.assertEqual(record_a.epochs, record_b.epochs)
        for name in model_a.params:
            np.testing.assert_array_equal(model_a.params[name].data, model_b.params[name].data)

    def test_nan_stops_before_update(self):
        """NaN 이 나오면 옵티마이저 갱신 없이 멈추고 기록에 표시한다"""
        model = self.make_model()
        model.params["out_proj.b"].assign(np.full_like(model.params["out_proj.b"].data, np.nan))
        before = self.snapshot(model)
        model, record = train_loop(model, self.make_corpus(), self.schedule, epochs=3, seed=0)
        self.assertTrue(record.diverged)
        self.assertEqual((record.reason, record.diverged_at), (NAN_LOSS, 1))
        self.assertEqual(len(record), 1)
        self.assertTrue(record.steps[0].nan_flag)
        self.assertEqual(record.epochs, [])
        for name, value in before.items():
            np.testing.assert_array_equal(model.params[name].data, value)

    def test_admin_requires_profile(self):
        """프로파일 없는 admin 모델은 거부"""
        model = self.make_model(mode=BlockMode.ADMIN)
        with self.assertRaises(ConfigurationError):
            train_loop(model, self.make_corpus(), self.schedule, epochs=1, seed=0)

    def test_streams_to_writer(self):
        """writer 에 스텝과 epoch 를 바로 쓴다"""
        with tempfile.TemporaryDirectory() as tmp:
            with CurveWriter(tmp) as writer:
                _, record = train_loop(
                    self.make_model(), self.make_corpus(), self.schedule, epochs=1, seed=0, writer=writer
                )
            lines = (Path(tmp) / "steps.csv").read_text().splitlines()
            epochs = (Path(tmp) / "epochs.csv").read_text().splitlines()
        self.assertEqual(len(lines), len(record) + 1)
        self.assertEqual(len(epochs), 2)

    def test_empty_training_split(self):
        """학습 문장이 없으면 DataError"""
        with self.assertRaises(DataError):
            train_loop(self.make_model(), EncodedCorpus(), self.schedule, epochs=1, seed=0)

    @pytest.mark.slow
    def test_copy_task_learns(self):
        """1L-1L 모델이 copy task 를 30 epoch 에 거의 완벽히 배운다"""
        spec = TaskSpec(
            kind=TaskKind.COPY, vocab_size=16, min_len=3, max_len=8, train_size=4000, dev_size=200, test_size=0
        )
        corpus = gen_task(spec, seed=0).encode()
        config = ModelConfig.from_preset(
            "desk", n_enc_layers=1, n_dec_layers=1, src_vocab_size=16, tgt_vocab_size=16
        )
        model = Transformer.initialize(config, seed=0)
        model, record = train_loop(model, corpus, Schedule(warmup_steps=200, peak_lr=0.003), epochs=30, seed=0)
        self.assertFalse(record.diverged)
        self.assertGreater(record.epochs[-1].dev_token_acc, 0.99)
