# apps/architecture/tests.py
import math

import numpy as np
from django.test import SimpleTestCase

from apps.architecture.branches import BranchKind, Chain, residual_branches
from apps.architecture.config import BlockMode, ModelConfig
from apps.architecture.layers import block_forward, causal_mask, feed_forward, multi_head_attention, sinusoid_table
from apps.architecture.model import Transformer
from apps.corpus.batching import collate
from apps.corpus.vocab import EOS_ID
from apps.exceptions import AttentionMaskError, ConfigurationError, DataError, TokenIndexError
from apps.numerics import ops
from apps.numerics.gradcheck import grad_check
from apps.numerics.tensor import Tensor

ADMIN_CONFIGS = [(1, 1), (6, 6), (24, 6), (48, 12)]


class BaseArchitectureTestCase(SimpleTestCase):
    """구조 테스트의 공통 기능"""

    def make_config(self, n_enc=2, n_dec=2, mode=BlockMode.POSTLN, **kwargs):
        """작은 64-bit 설정 헬퍼"""
        values = {
            "n_enc_layers": n_enc,
            "n_dec_layers": n_dec,
            "d_model": 16,
            "d_ff": 32,
            "n_heads": 2,
            "src_vocab_size": 12,
            "tgt_vocab_size": 12,
            "dropout": 0.0,
            "block_mode": mode,
            "label_smoothing": 0.0,
            "max_len": 32,
            "dtype": "float64",
        }
        values.update(kwargs)
        return ModelConfig(**values)

    def make_model(self, n_enc=2, n_dec=2, mode=BlockMode.POSTLN, seed=0, **kwargs):
        """기본 초기화 모델 헬퍼"""
        return Transformer.initialize(self.make_config(n_enc, n_dec, mode, **kwargs), seed=seed)

    def make_batch(self, seed=0, n=3, vocab=12):
        """랜덤 길이 문장 쌍 배치 헬퍼"""
        rng = np.random.default_rng(seed)
        pairs = []
        for _ in range(n):
            src = rng.integers(4, vocab, size=int(rng.integers(2, 7))).tolist()
            tgt = rng.integers(4, vocab, size=int(rng.integers(2, 7))).tolist()
            pairs.append((src, tgt))
        return collate(pairs)

    def identity_projections(self, d):
        """항등 projection 과 0 bias 헬퍼"""
        proj = {}
        for name in ("q", "k", "v", "o"):
            proj[f"w{name}"] = np.eye(d)
            proj[f"b{name}"] = np.zeros(d)
        return proj

    def random_projections(self, rng, d):
        proj = {}
        for name in ("q", "k", "v", "o"):
            proj[f"w{name}"] = rng.standard_normal((d, d)) * 0.5
            proj[f"b{name}"] = rng.standard_normal(d) * 0.1
        return proj


class ModelConfigTestCase(BaseArchitectureTestCase):
    """ModelConfig 테스트"""

    def test_desk_preset(self):
        """desk 프리셋은 64/128/2"""
        config = ModelConfig.from_preset("desk", n_enc_layers=1, n_dec_layers=1)
        self.assertEqual((config.d_model, config.d_ff, config.n_heads), (64, 128, 2))
        self.assertEqual(config.dropout, 0.1)
        self.assertEqual(config.label_smoothing, 0.1)

    def test_base_preset(self):
        """base 프리셋은 512/2048/8"""
        config = ModelConfig.from_preset("base")
        self.assertEqual((config.d_model, config.d_ff, config.n_heads), (512, 2048, 8))

    def test_invalid_configs(self):
        """나누어지지 않는 헤드, 0 층, 알 수 없는 모드/프리셋은 ConfigurationError"""
        with self.assertRaises(ConfigurationError):
            self.make_config(d_model=10, n_heads=3)
        with self.assertRaises(ConfigurationError):
            self.make_config(n_enc=0)
        with self.assertRaises(ConfigurationError):
            self.make_config(mode="sideways")
        with self.assertRaises(ConfigurationError):
            ModelConfig.from_preset("huge")

    def test_to_dict(self):
        """to_dict 는 block_mode 를 문자열로"""
        self.assertEqual(self.make_config(mode=BlockMode.ADMIN).to_dict()["block_mode"], "admin")


class BranchTestCase(BaseArchitectureTestCase):
    """잔차 가지 배치 테스트"""

    def test_branch_counts(self):
        """가지 수는 2N + 3M"""
        for n, m in [(1, 1), (2, 3), (6, 6), (24, 6)]:
            branches = residual_branches(self.make_config(n, m))
            self.assertEqual(len(branches), 2 * n + 3 * m)
            self.assertEqual([b.index for b in branches], list(range(2 * n + 3 * m)))
            self.assertEqual(sum(b.chain is Chain.ENCODER for b in branches), 2 * n)

    def test_branch_layout(self):
        """인코더 가지가 먼저, 디코더는 masked/cross/ff 순서"""
        branches = residual_branches(self.make_config(1, 1))
        self.assertEqual(
            [b.kind for b in branches],
            [
                BranchKind.SELF_ATTENTION,
                BranchKind.FEED_FORWARD,
                BranchKind.MASKED_SELF_ATTENTION,
                BranchKind.CROSS_ATTENTION,
                BranchKind.FEED_FORWARD,
            ],
        )
        self.assertEqual([b.chain_index for b in branches], [0, 1, 0, 1, 2])
        self.assertEqual(branches[1].output_weight, "enc.0.ff.w2")
        self.assertEqual(branches[3].output_bias, "dec.0.cross_attn.bo")

    def test_forward_branch_counts(self):
        """forward 중 실행된 가지를 세면 N=1 은 2개, M=1 은 3개"""
        model = self.make_model(1, 1)
        seen = []
        model.forward(self.make_batch(), observer=lambda branch, output, mask: seen.append(branch.chain))
        self.assertEqual(seen.count(Chain.ENCODER), 2)
        self.assertEqual(seen.count(Chain.DECODER), 3)


class EmbeddingTestCase(BaseArchitectureTestCase):
    """임베딩 / 위치 인코딩 테스트"""

    def test_position_zero(self):
        """t=0 에서 sin 항은 0, cos 항은 1"""
        table = sinusoid_table(4, 8)
        self.assertEqual(table[0, 0::2].tolist(), [0.0] * 4)
        self.assertEqual(table[0, 1::2].tolist(), [1.0] * 4)

    def test_hand_evaluated_position_one(self):
        """d=4, t=1 은 [sin 1, cos 1, sin 0.01, cos 0.01]"""
        expected = [math.sin(1.0), math.cos(1.0), math.sin(0.01), math.cos(0.01)]
        self.assertLess(np.abs(sinusoid_table(2, 4)[1] - expected).max(), 1e-12)

    def test_same_token_different_positions(self):
        """같은 토큰도 위치가 다르면 다른 벡터"""
        model = self.make_model()
        x = model.embed([5, 5], "src").data
        self.assertGreater(np.abs(x[0] - x[1]).max(), 0.0)

    def test_scaled_embedding(self):
        """토큰 임베딩 × sqrt(d) + 위치"""
        model = self.make_model()
        x = model.embed([7], "tgt").data
        expected = model.params["tgt_embed"].data[7] * 4.0 + sinusoid_table(1, 16)[0]
        self.assertLess(np.abs(x[0] - expected).max(), 1e-12)

    def test_out_of_range_id(self):
        """어휘 범위 밖 id 는 TokenIndexError"""
        with self.assertRaises(TokenIndexError):
            self.make_model().embed([12], "src")

    def test_too_long(self):
        """max_len 을 넘는 시퀀스는 ConfigurationError"""
        with self.assertRaises(ConfigurationError):
            self.make_model(max_len=4).embed([5] * 5, "src")


class AttentionTestCase(BaseArchitectureTestCase):
    """multi_head_attention 테스트"""

    def test_single_position(self):
        """key/value 가 하나면 가중치는 정확히 1, 출력은 그 value 의 projection"""
        rng = np.random.default_rng(0)
        proj = self.random_projections(rng, 4)
        query, memory = rng.standard_normal((3, 4)), rng.standard_normal((1, 4))
        out, weights = multi_head_attention(
            Tensor(query), Tensor(memory), Tensor(memory), proj, n_heads=2, return_weights=True
        )
        self.assertTrue(np.all(weights.data == 1.0))
        expected = (memory @ proj["wv"] + proj["bv"]) @ proj["wo"] + proj["bo"]
        self.assertLess(np.abs(out.data - expected).max(), 1e-12)

    def test_causal_first_position(self):
        """causal mask 에서 0 번 query 는 뒤쪽 위치에 가중치 0"""
        rng = np.random.default_rng(1)
        x = Tensor(rng.standard_normal((5, 4)))
        _, weights = multi_head_attention(
            x, x, x, self.random_projections(rng, 4), 2, mask=causal_mask(5), return_weights=True
        )
        self.assertTrue(np.all(weights.data[:, 0, 1:] == 0.0))
        self.assertTrue(np.all(weights.data[:, np.triu_indices(5, 1)[0], np.triu_indices(5, 1)[1]] == 0.0))

    def test_hand_computation(self):
        """헤드 1, 길이 2, d=2, 항등 projection 은 softmax(xxᵀ/√2)"""
        x = np.array([[1.0, 0.5], [-0.3, 2.0]])
        _, weights = multi_head_attention(
            Tensor(x), Tensor(x), Tensor(x), self.identity_projections(2), 1, return_weights=True
        )
        scores = x @ x.T / math.sqrt(2.0)
        expected = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
        self.assertLess(np.abs(weights.data[0] - expected).max(), 1e-10)

    def test_rows_sum_to_one(self):
        """query 행별 가중치 합은 1, 가려진 위치는 정확히 0"""
        rng = np.random.default_rng(2)
        x = Tensor(rng.standard_normal((2, 6, 8)))
        mask = np.ones((2, 6, 6), dtype=bool)
        mask[1, :, 4:] = False
        _, weights = multi_head_attention(x, x, x, self.random_projections(rng, 8), 4, mask=mask, return_weights=True)
        self.assertLess(np.abs(weights.data.sum(axis=-1) - 1.0).max(), 1e-6)
        self.assertTrue(np.all(weights.data[1, :, :, 4:] == 0.0))

    def test_fully_masked_row(self):
        """허용 위치가 없는 행은 AttentionMaskError"""
        x = Tensor(np.ones((2, 4)))
        mask = np.array([[True, False], [False, False]])
        with self.assertRaises(AttentionMaskError):
            multi_head_attention(x, x, x, self.identity_projections(4), 2, mask=mask)


class FeedForwardTestCase(BaseArchitectureTestCase):
    """feed_forward 테스트"""

    def test_dead_relu(self):
        """사전 활성이 모두 음수면 출력은 두 번째 bias"""
        rng = np.random.default_rng(0)
        proj = {
            "w1": -np.abs(rng.standard_normal((3, 5))),
            "b1": -np.ones(5),
            "w2": rng.standard_normal((5, 3)),
            "b2": np.array([0.1, -0.2, 0.3]),
        }
        out = feed_forward(Tensor(np.abs(rng.standard_normal((2, 3)))), proj)
        self.assertEqual(out.data.tolist(), [[0.1, -0.2, 0.3]] * 2)

    def test_zero_weights(self):
        """가중치와 bias 가 0 이면 출력 0"""
        proj = {"w1": np.zeros((3, 4)), "b1": np.zeros(4), "w2": np.zeros((4, 3)), "b2": np.zeros(3)}
        out = feed_forward(Tensor(np.ones((1, 3))), proj)
        self.assertEqual(out.data.tolist(), [[0.0, 0.0, 0.0]])

    def test_against_oracle(self):
        """랜덤 1x3 을 두 번의 행렬곱 오라클과 비교"""
        rng = np.random.default_rng(1)
        proj = {
            "w1": rng.standard_normal((3, 6)),
            "b1": rng.standard_normal(6),
            "w2": rng.standard_normal((6, 3)),
            "b2": rng.standard_normal(3),
        }
        x = rng.standard_normal((1, 3))
        expected = np.maximum(x @ proj["w1"] + proj["b1"], 0) @ proj["w2"] + proj["b2"]
        self.assertLess(np.abs(feed_forward(Tensor(x), proj).data - expected).max(), 1e-12)


class BlockForwardTestCase(BaseArchitectureTestCase):
    """block_forward 테스트"""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.x = Tensor(rng.standard_normal((3, 8)))
        self.gain, self.bias = rng.standard_normal(8), rng.standard_normal(8)
        self.weight = rng.standard_normal((8, 8))

    def zero_branch(self, x):
        return ops.mul(x, 0.0)

    def dense_branch(self, x):
        return ops.matmul(x, self.weight)

    def test_zero_branch_postln(self):
        """f ≡ 0, postln -> LN(x)"""
        out = block_forward(self.x, self.zero_branch, BlockMode.POSTLN, self.gain, self.bias, 1e-5)
        expected = ops.layer_norm(self.x, self.gain, self.bias, 1e-5)
        self.assertTrue(np.array_equal(out.data, expected.data))

    def test_zero_branch_admin_uniform_omega(self):
        """f ≡ 0, admin, 균일 ω -> LN(x) (scale invariance)"""
        out = block_forward(
            self.x, self.zero_branch, BlockMode.ADMIN, self.gain, self.bias, 1e-12, omega=np.full(8, 2.5)
        )
        expected = ops.layer_norm(self.x, self.gain, self.bias, 1e-12)
        self.assertLess(np.abs(out.data - expected.data).max(), 1e-9)

    def test_admin_unit_omega_bit_identical(self):
        """admin, ω=1 은 postln 과 같은 비트"""
        post = block_forward(self.x, self.dense_branch, BlockMode.POSTLN, self.gain, self.bias, 1e-5)
        admin = block_forward(self.x, self.dense_branch, BlockMode.ADMIN, self.gain, self.bias, 1e-5, omega=np.ones(8))
        self.assertTrue(np.array_equal(post.data, admin.data))

    def test_preln(self):
        """preln -> x + f(LN(x))"""
        out = block_forward(self.x, self.dense_branch, BlockMode.PRELN, self.gain, self.bias, 1e-5)
        normed = ops.layer_norm(self.x, self.gain, self.bias, 1e-5)
        self.assertLess(np.abs(out.data - (self.x.data + normed.data @ self.weight)).max(), 1e-12)

    def test_omega_ignored_outside_admin(self):
        """admin 이 아니면 ω 는 무시된다"""
        a = block_forward(self.x, self.dense_branch, BlockMode.POSTLN, self.gain, self.bias, 1e-5, omega=np.full(8, 3.0))
        b = block_forward(self.x, self.dense_branch, BlockMode.POSTLN, self.gain, self.bias, 1e-5)
        self.assertTrue(np.array_equal(a.data, b.data))

    def test_non_positive_omega(self):
        """ω ≤ 0 은 ConfigurationError"""
        for omega in (np.zeros(8), -np.ones(8), None):
            with self.assertRaises(ConfigurationError):
                block_forward(self.x, self.dense_branch, BlockMode.ADMIN, self.gain, self.bias, 1e-5, omega=omega)


class EncoderDecoderTestCase(BaseArchitectureTestCase):
    """encoder_forward / decoder_forward 테스트"""

    def straight_line_encoder(self, model, src):
        """추상화 없는 numpy 인코더 재구현 (postln)"""
        p = {name: param.data for name, param in model.params.items()}
        d, heads = model.config.d_model, model.config.n_heads
        dh = d // heads
        length = len(src)
        pe = np.zeros((length, d))
        for t in range(length):
            for i in range(0, d, 2):
                angle = t / (10000 ** (i / d))
                pe[t, i] = math.sin(angle)
                pe[t, i + 1] = math.cos(angle)
        x = p["src_embed"][src] * math.sqrt(d) + pe

        def norm(v, prefix):
            mu = v.mean(axis=-1, keepdims=True)
            var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
            return (v - mu) / np.sqrt(var + model.config.ln_eps) * p[f"{prefix}.gain"] + p[f"{prefix}.bias"]

        for layer in range(model.config.n_enc_layers):
            a = f"enc.{layer}.attn"
            q = x @ p[f"{a}.wq"] + p[f"{a}.bq"]
            k = x @ p[f"{a}.wk"] + p[f"{a}.bk"]
            v = x @ p[f"{a}.wv"] + p[f"{a}.bv"]
            heads_out = []
            for h in range(heads):
                cols = slice(h * dh, (h + 1) * dh)
                s = q[:, cols] @ k[:, cols].T / math.sqrt(dh)
                w = np.exp(s - s.max(axis=1, keepdims=True))
                w /= w.sum(axis=1, keepdims=True)
                heads_out.append(w @ v[:, cols])
            attn = np.concatenate(heads_out, axis=1) @ p[f"{a}.wo"] + p[f"{a}.bo"]
            x = norm(x + attn, f"{a}_ln")
            f = f"enc.{layer}.ff"
            ff = np.maximum(x @ p[f"{f}.w1"] + p[f"{f}.b1"], 0) @ p[f"{f}.w2"] + p[f"{f}.b2"]
            x = norm(x + ff, f"{f}_ln")
        return x

    def test_straight_line_oracle(self):
        """N=2 인코더는 직선형 재구현과 일치"""
        model = self.make_model(2, 1, seed=3)
        src = [4, 9, 7, 11, EOS_ID]
        out = model.encoder_forward(src).data
        self.assertLess(np.abs(out - self.straight_line_encoder(model, src)).max(), 1e-10)

    def test_encoder_deterministic(self):
        """같은 입력은 같은 출력"""
        model = self.make_model()
        self.assertTrue(np.array_equal(model.encoder_forward([5, 6, 7]).data, model.encoder_forward([5, 6, 7]).data))

    def test_decoder_causality(self):
        """뒤쪽 target 토큰을 바꿔도 앞쪽 logits 는 그대로"""
        model = self.make_model()
        memory = model.encoder_forward([4, 5, 6, EOS_ID])
        rng = np.random.default_rng(0)
        tgt = [1, 5, 8, 9, 10, 6]
        base = model.decoder_forward(tgt, memory).data
        for t in range(len(tgt) - 1):
            changed = list(tgt)
            for pos in range(t + 1, len(tgt)):
                changed[pos] = int(rng.integers(4, 12))
            logits = model.decoder_forward(changed, memory).data
            self.assertLess(np.abs(logits[: t + 1] - base[: t + 1]).max(), 1e-12)

    def test_zeroed_cross_value(self):
        """cross-attention value projection 을 0 으로 하면 logits 는 인코더 출력과 무관"""
        model = self.make_model()
        for layer in range(model.config.n_dec_layers):
            model.params[f"dec.{layer}.cross_attn.wv"].assign(np.zeros((16, 16)))
        tgt = [1, 5, 8]
        a = model.decoder_forward(tgt, model.encoder_forward([4, 5, 6, EOS_ID])).data
        b = model.decoder_forward(tgt, model.encoder_forward([9, 10, 11, 7, 6, EOS_ID])).data
        self.assertLess(np.abs(a - b).max(), 1e-12)

    def test_padding_invariance(self):
        """pad 를 덧붙여도 pad 가 아닌 위치의 출력은 그대로"""
        model = self.make_model()
        alone = collate([([4, 5, 6], [7, 8])])
        padded = collate([([4, 5, 6], [7, 8]), ([4, 5, 6, 7, 8, 9, 10], [7, 8, 9, 10, 11])])
        a = model.forward(alone).data[0]
        b = model.forward(padded).data[0, : a.shape[0]]
        self.assertLess(np.abs(a - b).max(), 1e-10)

    def test_preln_final_norm_and_tying(self):
        """preln 은 스택별 최종 LN 을 갖고, tie_embeddings 는 out_proj.w 를 만들지 않는다"""
        model = self.make_model(mode=BlockMode.PRELN, tie_embeddings=True)
        self.assertIn("enc.final_ln.gain", model.params)
        self.assertIn("dec.final_ln.bias", model.params)
        self.assertNotIn("out_proj.w", model.params)
        logits = model.forward(self.make_batch())
        self.assertEqual(logits.shape[-1], 12)

    def test_admin_unit_omega_matches_postln(self):
        """ω=1 인 admin 모델은 같은 가중치의 postln 모델과 같은 비트 (여러 깊이)"""
        batch = self.make_batch(seed=5, vocab=64)
        for n, m in ADMIN_CONFIGS:
            config = self.make_config(n, m, d_model=64, d_ff=128, src_vocab_size=64, tgt_vocab_size=64)
            post = Transformer.initialize(config, seed=n)
            admin = Transformer(config.replace(block_mode=BlockMode.ADMIN), post.params)
            self.assertTrue(np.array_equal(post.forward(batch).data, admin.forward(batch).data), msg=f"{n}L-{m}L")

    def test_initialization_deterministic(self):
        """같은 seed 는 같은 파라미터, Xavier 범위 안"""
        a, b = self.make_model(seed=7), self.make_model(seed=7)
        for name in a.params:
            self.assertTrue(np.array_equal(a.params[name].data, b.params[name].data))
        limit = math.sqrt(6.0 / (16 + 32))
        self.assertLessEqual(np.abs(a.params["enc.0.ff.w1"].data).max(), limit)
        self.assertEqual(np.abs(a.params["enc.0.ff.b1"].data).max(), 0.0)


class GreedyDecodeTestCase(BaseArchitectureTestCase):
    """greedy_decode 테스트"""

    def test_eos_peaked_model(self):
        """항상 eos 에 몰린 출력층이면 빈 결과"""
        model = self.make_model()
        model.params["out_proj.w"].assign(np.zeros((16, 12)))
        bias = np.zeros(12)
        bias[EOS_ID] = 100.0
        model.params["out_proj.b"].assign(bias)
        self.assertEqual(model.greedy_decode([4, 5, 6], max_len=10), [])

    def test_max_len_respected(self):
        """eos 가 안 나오면 max_len 에서 멈춘다"""
        model = self.make_model()
        model.params["out_proj.w"].assign(np.zeros((16, 12)))
        bias = np.zeros(12)
        bias[7] = 100.0
        model.params["out_proj.b"].assign(bias)
        self.assertEqual(model.greedy_decode([4, 5], max_len=5), [7] * 5)

    def test_non_positive_max_len(self):
        """max_len ≤ 0 은 ConfigurationError"""
        with self.assertRaises(ConfigurationError):
            self.make_model().greedy_decode([4], max_len=0)

    def test_source_too_long_for_eos(self):
        """eos 를 붙여 max_len 을 넘는 source 는 DataError, 한 토큰 짧으면 디코딩된다"""
        model = self.make_model(max_len=8)
        with self.assertRaises(DataError):
            model.greedy_decode_batch([[4, 5], [4, 5, 6, 7, 8, 9, 10, 11]], max_len=4)
        self.assertLessEqual(len(model.greedy_decode([4, 5, 6, 7, 8, 9, 10], max_len=4)), 4)

    def test_batch_matches_single(self):
        """배치 디코딩과 단일 디코딩은 같은 결과"""
        model = self.make_model(seed=2)
        sources = [[4, 5, 6], [7, 8, 9, 10, 11], [5]]
        batched = model.greedy_decode_batch(sources, max_len=8)
        self.assertEqual(batched, [model.greedy_decode(src, max_len=8) for src in sources])


class FullModelGradCheckTestCase(BaseArchitectureTestCase):
    """2L-2L 인코더-디코더 전체 파라미터의 기울기 검사 (문장 2 개 배치)"""

    def check_model(self, model):
        batch = self.make_batch(seed=1, n=2)
        # key bias 의 참 기울기는 softmax 이동 불변성으로 정확히 0 이라 차분 잡음만 남는다
        error = grad_check(lambda: model.loss(batch), model.parameters(), h=1e-5, atol=1e-9)
        self.assertLess(error, 1e-5)

    def test_postln_and_preln(self):
        for mode in (BlockMode.POSTLN, BlockMode.PRELN):
            with self.subTest(mode=mode.value):
                self.check_model(self.make_model(mode=mode, d_model=8, d_ff=16, label_smoothing=0.1))

    def test_admin_with_omegas(self):
        model = self.make_model(mode=BlockMode.ADMIN, d_model=8, d_ff=16, label_smoothing=0.1)
        model.set_omegas(np.random.default_rng(3).uniform(1.0, 3.0, model.config.n_branches))
        self.check_model(model)
