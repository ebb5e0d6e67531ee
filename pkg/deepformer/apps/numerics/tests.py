# apps/numerics/tests.py
import math

import numpy as np
from django.test import SimpleTestCase

from apps.exceptions import (
    ConfigurationError,
    DataError,
    DimensionError,
    DivergenceError,
    StaleTapeError,
    TapeError,
    TokenIndexError,
)
from apps.numerics import ops
from apps.numerics.gradcheck import grad_check
from apps.numerics.tensor import Parameter, Tensor, recording

SEEDS = range(10)


class BaseNumericsTestCase(SimpleTestCase):
    """수치 연산 테스트의 공통 기능"""

    def make_param(self, rng, shape, name="p", scale=1.0):
        """64-bit 랜덤 파라미터 생성 헬퍼"""
        return Parameter(rng.standard_normal(shape) * scale, name=name)

    def weighted_sum(self, out, seed=99):
        """출력을 고정 가중치로 스칼라로 줄이는 헬퍼 (기울기가 좌표마다 달라지도록)"""
        weights = np.random.default_rng(seed).standard_normal(out.shape)
        return ops.sum(ops.mul(out, weights))

    def assert_gradients_match(self, f, params, tolerance=1e-5, h=1e-5):
        """자동미분과 중앙 차분 비교 헬퍼"""
        error = grad_check(f, params, h=h)
        self.assertLess(error, tolerance)


class MatmulTestCase(BaseNumericsTestCase):
    """matmul 테스트"""

    def naive_matmul(self, a, b):
        """삼중 루프 오라클"""
        out = np.zeros((a.shape[0], b.shape[1]))
        for i in range(a.shape[0]):
            for j in range(b.shape[1]):
                for k in range(a.shape[1]):
                    out[i, j] += a[i, k] * b[k, j]
        return out

    def test_identity(self):
        """단위행렬 곱은 그대로"""
        out = ops.matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[3.0, 4.0], [5.0, 6.0]]))
        self.assertEqual(out.data.tolist(), [[3.0, 4.0], [5.0, 6.0]])

    def test_hand_dot_product(self):
        """[[1,2]] x [[3],[4]] = [[11]]"""
        out = Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])
        self.assertEqual(out.data.tolist(), [[11.0]])

    def test_against_triple_loop(self):
        """랜덤 행렬 곱을 삼중 루프 오라클과 비교"""
        rng = np.random.default_rng(0)
        for p, q, r in [(4, 5, 3), (16, 16, 16), (1, 7, 2)]:
            a, b = rng.standard_normal((p, q)), rng.standard_normal((q, r))
            out = ops.matmul(Tensor(a), Tensor(b))
            self.assertLess(np.abs(out.data - self.naive_matmul(a, b)).max(), 1e-12)

    def test_batch_broadcast(self):
        """앞쪽 배치 축은 브로드캐스트된다"""
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((3, 2, 4, 5)), rng.standard_normal((5, 6))
        out = ops.matmul(Tensor(a), Tensor(b))
        self.assertEqual(out.shape, (3, 2, 4, 6))

    def test_shape_mismatch_names_both_shapes(self):
        """내부 차원이 다르면 두 shape 를 담은 DimensionError"""
        with self.assertRaisesMessage(DimensionError, "(2, 3) x (4, 5)"):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_gradient(self):
        """matmul 기울기 검사"""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            a, b = self.make_param(rng, (2, 3, 4), "a"), self.make_param(rng, (4, 5), "b")
            self.assert_gradients_match(lambda: self.weighted_sum(ops.matmul(a, b)), [a, b])


class SoftmaxTestCase(BaseNumericsTestCase):
    """softmax / log_softmax 테스트"""

    def test_uniform(self):
        """[0,0,0,0] -> 0.25 씩"""
        out = ops.softmax(Tensor([0.0, 0.0, 0.0, 0.0]))
        self.assertEqual(out.data.tolist(), [0.25, 0.25, 0.25, 0.25])

    def test_large_magnitude(self):
        """[1000, 0] 도 overflow 없이 [1, 0]"""
        with np.errstate(over="raise"):
            out = ops.softmax(Tensor([1000.0, 0.0]))
        self.assertLess(abs(out.data[0] - 1.0), 1e-12)
        self.assertLess(abs(out.data[1]), 1e-12)

    def test_extended_precision_oracle(self):
        """[1,2,3] 을 확장 정밀도 exp-normalize 와 비교"""
        values = np.array([1.0, 2.0, 3.0], dtype=np.longdouble)
        expected = np.exp(values) / np.exp(values).sum()
        out = ops.softmax(Tensor([1.0, 2.0, 3.0]))
        self.assertLess(float(np.abs(out.data - expected).max()), 1e-12)

    def test_rows_sum_to_one(self):
        """임의 입력의 각 행 합은 1"""
        for seed in SEEDS:
            x = np.random.default_rng(seed).standard_normal((3, 7)) * 50
            for axis in (0, 1):
                out = ops.softmax(Tensor(x), axis=axis)
                self.assertLess(np.abs(out.data.sum(axis=axis) - 1.0).max(), 1e-6)
                self.assertTrue(np.all(out.data >= 0))

    def test_log_softmax_consistent(self):
        """log_softmax == log(softmax)"""
        x = np.random.default_rng(3).standard_normal((2, 5))
        self.assertLess(
            np.abs(ops.log_softmax(Tensor(x)).data - np.log(ops.softmax(Tensor(x)).data)).max(), 1e-12
        )

    def test_gradients(self):
        """softmax, log_softmax 기울기 검사"""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = self.make_param(rng, (3, 6), "x")
            self.assert_gradients_match(lambda: self.weighted_sum(ops.softmax(x)), [x])
            self.assert_gradients_match(lambda: self.weighted_sum(ops.log_softmax(x, axis=0)), [x])


class LayerNormTestCase(BaseNumericsTestCase):
    """layer_norm 테스트"""

    def test_hand_example(self):
        """[1,2,3], eps=0 -> [-1.224745, 0, 1.224745]"""
        out = ops.layer_norm(Tensor([1.0, 2.0, 3.0]), np.ones(3), np.zeros(3), eps=0.0)
        expected = [-1.224745, 0.0, 1.224745]
        self.assertLess(np.abs(out.data - expected).max(), 1e-6)

    def test_constant_vector(self):
        """상수 벡터는 0 으로"""
        out = ops.layer_norm(Tensor([5.0, 5.0, 5.0]), np.ones(3), np.zeros(3), eps=1e-5)
        self.assertEqual(out.data.tolist(), [0.0, 0.0, 0.0])

    def test_scale_invariance(self):
        """c > 0 배 해도 결과가 같다 (eps=1e-5)"""
        rng = np.random.default_rng(0)
        gain, bias = rng.standard_normal(16), rng.standard_normal(16)
        x = rng.standard_normal((4, 16)) * 1e5
        base = ops.layer_norm(Tensor(x), gain, bias, eps=1e-5).data
        for c in (1e-3, 1.0, 7.3, 1e3):
            scaled = ops.layer_norm(Tensor(c * x), gain, bias, eps=1e-5).data
            self.assertLess(np.abs(scaled - base).max(), 1e-6, msg=f"c={c}")

    def test_affine(self):
        """정규화 후 gain⊙x + bias"""
        x = np.random.default_rng(1).standard_normal((2, 4))
        plain = ops.layer_norm(Tensor(x), np.ones(4), np.zeros(4)).data
        self.assertLess(np.abs(plain.mean(axis=-1)).max(), 1e-12)
        affine = ops.layer_norm(Tensor(x), np.full(4, 2.0), np.full(4, 0.5)).data
        self.assertLess(np.abs(affine - (2.0 * plain + 0.5)).max(), 1e-12)

    def test_negative_eps_rejected(self):
        """음수 eps 는 ConfigurationError"""
        with self.assertRaises(ConfigurationError):
            ops.layer_norm(Tensor([1.0, 2.0]), np.ones(2), np.zeros(2), eps=-1.0)

    def test_dimension_mismatch(self):
        """gain 길이가 다르면 DimensionError"""
        with self.assertRaises(DimensionError):
            ops.layer_norm(Tensor(np.ones((2, 3))), np.ones(4), np.zeros(4))

    def test_gradient(self):
        """layer_norm 기울기 검사 (x, gain, bias)"""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = self.make_param(rng, (3, 5), "x")
            gain = self.make_param(rng, (5,), "gain")
            bias = self.make_param(rng, (5,), "bias")
            self.assert_gradients_match(lambda: self.weighted_sum(ops.layer_norm(x, gain, bias)), [x, gain, bias])


class ElementwiseOpsTestCase(BaseNumericsTestCase):
    """원소별 연산과 shape 연산 기울기 테스트"""

    def test_broadcast_gradients(self):
        """add/sub/mul/div 는 뒤쪽 축 브로드캐스트 기울기를 합산한다"""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            a = self.make_param(rng, (2, 3, 4), "a")
            b = self.make_param(rng, (4,), "b")
            c = Parameter(rng.uniform(1.0, 2.0, size=(3, 1)), name="c")

            def f():
                return self.weighted_sum(ops.div(ops.sub(ops.mul(ops.add(a, b), b), a), c))

            self.assert_gradients_match(f, [a, b, c])

    def test_shape_op_gradients(self):
        """reshape/transpose/sum/mean 기울기 검사"""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = self.make_param(rng, (2, 3, 4), "x")

            def f():
                moved = ops.transpose(ops.reshape(x, (6, 4)), (1, 0))
                summed = ops.sum(ops.mul(moved, moved), axis=1)
                return ops.add(ops.mean(ops.mul(summed, summed)), ops.sum(ops.mean(x, axis=(0, 2), keepdims=True)))

            self.assert_gradients_match(f, [x])

    def test_relu_gradient(self):
        """relu 기울기 검사"""
        for seed in SEEDS:
            x = self.make_param(np.random.default_rng(seed), (4, 5), "x")
            self.assert_gradients_match(lambda: self.weighted_sum(ops.relu(x)), [x])

    def test_masked_fill(self):
        """mask 가 False 인 위치만 채운다"""
        out = ops.masked_fill(Tensor([[1.0, 2.0], [3.0, 4.0]]), [[True, False], [False, True]])
        self.assertEqual(out.data[0, 0], 1.0)
        self.assertEqual(out.data[0, 1], -np.inf)

    def test_masked_softmax_gradient(self):
        """masked_fill + softmax 기울기 검사"""
        mask = np.tril(np.ones((4, 4), dtype=bool))
        for seed in SEEDS:
            x = self.make_param(np.random.default_rng(seed), (2, 4, 4), "x")
            self.assert_gradients_match(lambda: self.weighted_sum(ops.softmax(ops.masked_fill(x, mask))), [x])

    def test_embedding_gradient_and_range(self):
        """embedding 기울기는 같은 id 의 행에 누적되고 범위 밖 id 는 TokenIndexError"""
        for seed in SEEDS:
            table = self.make_param(np.random.default_rng(seed), (6, 3), "table")
            ids = np.array([[1, 4, 1], [0, 5, 5]])
            self.assert_gradients_match(lambda: self.weighted_sum(ops.embedding(table, ids)), [table])
        with self.assertRaises(TokenIndexError):
            ops.embedding(table, [6])
        with self.assertRaises(IndexError):
            ops.embedding(table, [-1])

    def test_dropout(self):
        """rate 0 이나 rng 없음은 항등, 고정 rng 에서는 기울기 검사"""
        x = Tensor(np.ones((3, 4)))
        self.assertIs(ops.dropout(x, 0.0, np.random.default_rng(0)), x)
        self.assertIs(ops.dropout(x, 0.5, None), x)
        with self.assertRaises(ConfigurationError):
            ops.dropout(x, 1.0, np.random.default_rng(0))
        for seed in SEEDS:
            p = self.make_param(np.random.default_rng(seed), (5, 6), "p")
            self.assert_gradients_match(
                lambda: self.weighted_sum(ops.dropout(p, 0.3, np.random.default_rng(seed))), [p]
            )


class CrossEntropyTestCase(BaseNumericsTestCase):
    """cross_entropy_ls 테스트"""

    def oracle(self, logits, targets, smoothing, pad_id=0):
        """토큰별 log-softmax 오라클"""
        total, count = 0.0, 0
        for b in range(logits.shape[0]):
            for t in range(logits.shape[1]):
                if targets[b, t] == pad_id:
                    continue
                row = logits[b, t]
                logp = row - row.max() - math.log(sum(math.exp(v - row.max()) for v in row))
                total += (1 - smoothing) * -logp[targets[b, t]] + smoothing * -logp.mean()
                count += 1
        return total / count

    def test_peaked_logits(self):
        """정답에 몰린 logit 은 loss 0"""
        logits = np.full((1, 2, 5), -1e3)
        logits[0, 0, 3] = logits[0, 1, 4] = 1e3
        loss = ops.cross_entropy_ls(Tensor(logits), [[3, 4]], smoothing=0.0)
        self.assertLess(loss.item(), 1e-12)

    def test_uniform_logits(self):
        """균등 logit 은 ln(V)"""
        loss = ops.cross_entropy_ls(Tensor(np.zeros((2, 3, 7))), np.full((2, 3), 5), smoothing=0.0)
        self.assertLess(abs(loss.item() - math.log(7)), 1e-12)

    def test_against_oracle(self):
        """랜덤 2x3x5 를 토큰별 오라클과 비교 (pad 포함, smoothing 0 / 0.1)"""
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((2, 3, 5)) * 3
        targets = np.array([[1, 4, 0], [2, 3, 3]])
        for smoothing in (0.0, 0.1):
            loss = ops.cross_entropy_ls(Tensor(logits), targets, smoothing=smoothing)
            self.assertLess(abs(loss.item() - self.oracle(logits, targets, smoothing)), 1e-10)

    def test_sum_reduction(self):
        """reduction=sum 은 mean x 토큰 수"""
        rng = np.random.default_rng(1)
        logits, targets = rng.standard_normal((2, 3, 5)), np.array([[1, 4, 0], [2, 3, 3]])
        mean = ops.cross_entropy_ls(Tensor(logits), targets, 0.1).item()
        total = ops.cross_entropy_ls(Tensor(logits), targets, 0.1, reduction="sum").item()
        self.assertAlmostEqual(total, mean * 5, places=12)

    def test_errors(self):
        """범위 밖 target, shape 불일치, 전부 pad"""
        logits = Tensor(np.zeros((1, 2, 4)))
        with self.assertRaises(TokenIndexError):
            ops.cross_entropy_ls(logits, [[1, 4]])
        with self.assertRaises(DimensionError):
            ops.cross_entropy_ls(logits, [[1, 2, 3]])
        with self.assertRaises(DataError):
            ops.cross_entropy_ls(logits, [[0, 0]])

    def test_gradient(self):
        """label smoothing 포함 기울기 검사"""
        targets = np.array([[1, 4, 0], [2, 3, 3]])
        for seed in SEEDS:
            logits = self.make_param(np.random.default_rng(seed), (2, 3, 5), "logits")
            self.assert_gradients_match(lambda: ops.cross_entropy_ls(logits, targets, smoothing=0.1), [logits])


class TapeTestCase(BaseNumericsTestCase):
    """테이프 / backward 테스트"""

    def test_sum_gradient(self):
        """loss = sum(w) -> [1,1,1]"""
        w = Parameter(np.array([0.5, -1.0, 2.0]), name="w")
        with recording():
            loss = w.sum()
            loss.backward()
        self.assertEqual(w.grad.tolist(), [1.0, 1.0, 1.0])

    def test_square_gradient(self):
        """loss = sum(w⊙w) at [1,2,3] -> [2,4,6]"""
        w = Parameter(np.array([1.0, 2.0, 3.0]), name="w")
        with recording():
            (w * w).sum().backward()
        self.assertEqual(w.grad.tolist(), [2.0, 4.0, 6.0])

    def test_unreachable_stays_zero(self):
        """loss 에 닿지 않는 파라미터 기울기는 0"""
        w = Parameter(np.array([1.0, 2.0]), name="w")
        dead = Parameter(np.array([3.0]), name="dead")
        with recording():
            (w * 3.0).sum().backward()
        self.assertEqual(dead.grad.tolist(), [0.0])

    def test_shared_parameter_accumulates(self):
        """여러 경로로 쓰인 파라미터 기울기는 합산된다"""
        w = Parameter(np.array([2.0]), name="w")
        with recording():
            ((w * w) + (w * 3.0)).sum().backward()
        self.assertEqual(w.grad.tolist(), [7.0])

    def test_backward_twice_is_stale(self):
        """forward 없이 두 번 backward 하면 StaleTapeError"""
        w = Parameter(np.array([1.0]), name="w")
        with recording():
            loss = (w * w).sum()
            loss.backward()
            with self.assertRaises(StaleTapeError):
                loss.backward()

    def test_backward_without_tape(self):
        """테이프 밖에서 만든 텐서의 backward 는 TapeError"""
        w = Parameter(np.array([1.0]), name="w")
        loss = (w * w).sum()
        with self.assertRaises(TapeError):
            loss.backward()

    def test_non_scalar_loss(self):
        """스칼라가 아닌 loss 는 DimensionError"""
        w = Parameter(np.array([1.0, 2.0]), name="w")
        with recording():
            with self.assertRaises(DimensionError):
                (w * w).backward()

    def test_nodes_reverse_order(self):
        """테이프 노드는 기록 순서대로 쌓인다"""
        w = Parameter(np.array([1.0, 2.0]), name="w")
        with recording() as tape:
            loss = ops.relu(w * 2.0).sum()
        self.assertEqual([node.op for node in tape.nodes], ["mul", "relu", "sum"])
        self.assertIs(loss.node, tape.nodes[-1])

    def test_non_float_promoted(self):
        """정수 입력은 64-bit float 로 저장된다"""
        self.assertEqual(Tensor([1, 2]).dtype, np.float64)


class GradCheckTestCase(BaseNumericsTestCase):
    """grad_check 테스트"""

    def test_sum_of_squares(self):
        """제곱합은 상대 오차 1e-9 미만"""
        w = Parameter(np.array([1.0, -2.0, 3.0, 0.5]), name="w")
        self.assertLess(grad_check(lambda: (w * w).sum(), [w], h=1e-4), 1e-9)

    def test_layer_norm_softmax_chain(self):
        """layer_norm -> softmax 체인은 상대 오차 1e-6 미만"""
        rng = np.random.default_rng(0)
        x = self.make_param(rng, (3, 6), "x")
        gain = self.make_param(rng, (6,), "gain")
        bias = self.make_param(rng, (6,), "bias")
        error = grad_check(
            lambda: self.weighted_sum(ops.softmax(ops.layer_norm(x, gain, bias))), [x, gain, bias], h=1e-5
        )
        self.assertLess(error, 1e-6)

    def test_dead_parameter_passes(self):
        """닿지 않는 파라미터는 0 대 0 으로 통과"""
        w = Parameter(np.array([1.0, 2.0]), name="w")
        dead = Parameter(np.array([3.0, 4.0]), name="dead")
        self.assertLess(grad_check(lambda: (w * w).sum(), [w, dead], h=1e-4), 1e-9)

    def test_detects_wrong_gradient(self):
        """잘못된 backward 는 큰 상대 오차로 드러난다"""
        w = Parameter(np.array([1.0, 2.0]), name="w")

        def wrong():
            out = ops.mul(w, w)
            if out.node is not None:
                out.node.backward_fn = lambda grad: (grad * w.data * 3.0, grad * w.data * 3.0)
            return out.sum()

        self.assertGreater(grad_check(wrong, [w]), 0.1)

    def test_atol_absorbs_zero_gradient_noise(self):
        """참 기울기가 0 인 좌표의 1e-12 수준 차이는 atol 로 흡수된다"""
        w = Parameter(np.array([0.0]), name="w")

        def noisy():
            out = ops.mul(w, w)
            if out.node is not None:
                out.node.backward_fn = lambda grad: (grad * w.data + 5e-13, grad * w.data + 5e-13)
            return out.sum()

        self.assertGreater(grad_check(noisy, [w], h=1e-4), 1e-5)
        self.assertEqual(grad_check(noisy, [w], h=1e-4, atol=1e-9), 0.0)

    def test_step_range(self):
        """h 는 [1e-7, 1e-3]"""
        w = Parameter(np.array([1.0]), name="w")
        with self.assertRaises(ConfigurationError):
            grad_check(lambda: w.sum(), [w], h=1e-2)

    def test_requires_float64(self):
        """32-bit 파라미터는 거부"""
        w = Parameter(np.array([1.0], dtype=np.float32), name="w")
        with self.assertRaises(ConfigurationError):
            grad_check(lambda: w.sum(), [w])

    def test_non_finite_is_divergence(self):
        """유한하지 않은 함수 값은 DivergenceError"""
        w = Parameter(np.array([0.0]), name="w")
        with np.errstate(divide="ignore"):
            with self.assertRaises(DivergenceError):
                grad_check(lambda: ops.div(1.0, w).sum(), [w])
