# apps/admin_init/tests.py
import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from apps.admin_init.folding import fold_omega, max_logit_deviation
from apps.admin_init.profile import (
    OmegaProfile,
    check_profile,
    compute_omega,
    compute_profile_omegas,
    initialize_admin,
    profile_variances,
    select_profiling_batch,
)
from apps.architecture.config import BlockMode, ModelConfig
from apps.architecture.model import Transformer
from apps.corpus.batching import Batch, collate
from apps.exceptions import DataError, FoldingError, ProfilingError
from apps.numerics.tensor import recording

DESK_CONFIGS = [(1, 1), (6, 6), (24, 6), (48, 12)]


class BaseAdminTestCase(SimpleTestCase):
    """ADMIN 초기화 테스트의 공통 기능"""

    def make_model(self, n_enc=2, n_dec=2, dtype="float64", seed=0, **kwargs):
        """admin 모드 모델 헬퍼 (기본은 좁은 64-bit)"""
        values = {
            "n_enc_layers": n_enc,
            "n_dec_layers": n_dec,
            "d_model": 16,
            "d_ff": 32,
            "n_heads": 2,
            "src_vocab_size": 20,
            "tgt_vocab_size": 20,
            "dropout": 0.1,
            "block_mode": BlockMode.ADMIN,
            "max_len": 40,
            "dtype": dtype,
        }
        values.update(kwargs)
        return Transformer.initialize(ModelConfig(**values), seed=seed)

    def make_pairs(self, n, seed=0, vocab=20, max_len=9):
        """랜덤 id 문장 쌍 헬퍼"""
        rng = np.random.default_rng(seed)
        return [
            (
                rng.integers(4, vocab, size=int(rng.integers(2, max_len))).tolist(),
                rng.integers(4, vocab, size=int(rng.integers(2, max_len))).tolist(),
            )
            for _ in range(n)
        ]

    def make_batch(self, n=4, seed=0, vocab=20):
        return collate(self.make_pairs(n, seed, vocab))

    def perturb(self, model, seed=1, scale=0.3):
        """학습된 것처럼 파라미터를 흔드는 헬퍼"""
        rng = np.random.default_rng(seed)
        for param in model.parameters():
            param.assign(param.data + scale * rng.standard_normal(param.shape))

    def assert_construction(self, profile):
        """ω_1 = 1, ω_i² = 누적합, 체인별 비감소 검증"""
        for (_, variances), (_, omegas) in zip(
            profile.chains(profile.branch_variances), profile.chains(profile.omegas)
        ):
            self.assertEqual(omegas[0], 1.0)
            running = 0.0
            for i, (variance, omega) in enumerate(zip(variances, omegas)):
                if i >= 1 and running > 0:
                    self.assertLess(abs(omega - math.sqrt(running)), 1e-9 * max(1.0, omega))
                    self.assertTrue(math.isfinite(omega))
                if i >= 2 and running > 0:
                    self.assertGreaterEqual(omega, omegas[i - 1] * (1 - 1e-12))
                running += variance


class ComputeOmegaTestCase(BaseAdminTestCase):
    """compute_omega 테스트"""

    def test_unit_variances(self):
        """[1,1,1] -> [1, 1, √2]"""
        omegas = compute_omega([1.0, 1.0, 1.0])
        self.assertEqual(omegas[:2], [1.0, 1.0])
        self.assertAlmostEqual(omegas[2], 1.414214, places=6)

    def test_direct_formula(self):
        """[4, 9] -> [1, 2]"""
        self.assertEqual(compute_omega([4.0, 9.0]), [1.0, 2.0])

    def test_zero_fallback(self):
        """[0, 0] -> [1, 1]"""
        self.assertEqual(compute_omega([0.0, 0.0]), [1.0, 1.0])

    def test_negative_variance(self):
        """음수 분산은 DataError"""
        with self.assertRaises(DataError):
            compute_omega([1.0, -0.5])

    def test_per_feature(self):
        """특성별 분산은 특성마다 같은 규칙"""
        omegas = compute_omega([[1.0, 4.0], [3.0, 0.0], [5.0, 5.0]])
        self.assertEqual(omegas, [[1.0, 1.0], [1.0, 2.0], [2.0, 2.0]])

    def test_chains_restart(self):
        """디코더 체인은 ω=1 에서 다시 시작한다"""
        profile = OmegaProfile(
            branch_variances=[4.0, 5.0, 9.0, 16.0, 1.0],
            chain_layout={"encoder": 2, "decoder": 3},
        )
        self.assertEqual(compute_profile_omegas(profile).omegas, [1.0, 2.0, 1.0, 3.0, 5.0])


class ProfileVariancesTestCase(BaseAdminTestCase):
    """profile_variances 테스트"""

    def test_zero_branch(self):
        """가중치가 모두 0 인 가지의 분산은 0"""
        model = self.make_model()
        for name in ("w1", "b1", "w2", "b2"):
            param = model.params[f"enc.0.ff.{name}"]
            param.assign(np.zeros(param.shape))
        profile = profile_variances(model, self.make_batch())
        self.assertEqual(profile.branch_variances[1], 0.0)
        self.assertGreater(profile.branch_variances[0], 0.0)

    def test_constant_branch(self):
        """상수 함수 가지의 분산은 0"""
        model = self.make_model()
        model.params["dec.1.ff.w2"].assign(np.zeros((32, 16)))
        model.params["dec.1.ff.b2"].assign(np.full(16, 0.7))
        profile = profile_variances(model, self.make_batch())
        self.assertLess(profile.branch_variances[-1], 1e-20)

    def test_streaming_oracle(self):
        """가지 출력 전체를 스트리밍 평균/분산으로 다시 계산한 값과 일치"""
        model = self.make_model(1, 1, seed=4)
        batch = self.make_batch(seed=4)
        captured = {}
        model.forward(batch, observer=lambda b, out, mask: captured.__setitem__(b.index, out.data[mask].ravel()))
        profile = profile_variances(model, batch)
        self.assertEqual(len(profile.branch_variances), 5)
        for index, values in captured.items():
            count, mean, m2 = 0, 0.0, 0.0
            for value in values:
                count += 1
                delta = value - mean
                mean += delta / count
                m2 += delta * (value - mean)
            self.assertLess(abs(profile.branch_variances[index] - m2 / count), 1e-10)

    def test_idempotent_and_params_unchanged(self):
        """두 번 연속 프로파일링은 같은 분산, 파라미터는 그대로"""
        model = self.make_model()
        model.train(np.random.default_rng(0))
        before = {name: p.data.copy() for name, p in model.params.items()}
        batch = self.make_batch()
        first = profile_variances(model, batch)
        second = profile_variances(model, batch)
        self.assertEqual(first.branch_variances, second.branch_variances)
        for name, param in model.params.items():
            self.assertTrue(np.array_equal(param.data, before[name]))
        self.assertTrue(model.training)

    def test_profiling_tokens(self):
        """사용한 토큰 수는 source + target 의 pad 아닌 토큰"""
        batch = self.make_batch()
        profile = profile_variances(self.make_model(), batch)
        self.assertEqual(profile.profiling_tokens, batch.n_source_tokens + batch.n_target_tokens)

    def test_rejects_bad_inputs(self):
        """admin 이 아닌 모델, ω ≠ 1, 빈 배치, 전부 pad 인 배치는 ProfilingError"""
        batch = self.make_batch()
        with self.assertRaises(ProfilingError):
            profile_variances(self.make_model(block_mode=BlockMode.POSTLN), batch)
        model = self.make_model()
        model.set_omegas(np.full(model.config.n_branches, 2.0))
        with self.assertRaises(ProfilingError):
            profile_variances(model, batch)
        empty = np.zeros((0, 0), dtype=np.int64)
        with self.assertRaises(ProfilingError):
            profile_variances(self.make_model(), Batch(empty, empty, empty, empty != 0, empty != 0, ()))
        pads = np.zeros((2, 3), dtype=np.int64)
        with self.assertRaises(ProfilingError):
            profile_variances(self.make_model(), Batch(pads, pads, pads, pads != 0, pads != 0, (0, 1)))

    def test_select_profiling_batch(self):
        """프로파일링 배치는 토큰 예산을 넘지 않는다"""
        pairs = self.make_pairs(100)
        batch = select_profiling_batch(pairs, 64, seed=0)
        self.assertLessEqual(batch.cost, 64)
        self.assertGreater(len(batch), 1)
        again = select_profiling_batch(pairs, 64, seed=0)
        self.assertEqual(batch.indices, again.indices)


class AdminConstructionTestCase(BaseAdminTestCase):
    """ADMIN ω 구성 테스트"""

    def test_desk_width_configs(self):
        """desk 폭 여러 깊이에서 ω_1 = 1, ω² = 누적합, 비감소, 유한"""
        for n, m in DESK_CONFIGS:
            model = self.make_model(
                n, m, dtype="float32", d_model=64, d_ff=128, src_vocab_size=64, tgt_vocab_size=64
            )
            batch = collate(self.make_pairs(16, seed=n, vocab=64, max_len=20))
            profile = initialize_admin(model, batch)
            self.assertEqual(len(profile.omegas), 2 * n + 3 * m)
            self.assert_construction(profile)
            self.assertIs(model.omega_profile, profile)
            self.assertTrue(np.all(np.isfinite(model.omegas)))

    def test_check_profile_rejects_tampering(self):
        """ω 를 바꾸면 check_profile 이 거부"""
        profile = compute_profile_omegas(
            OmegaProfile(branch_variances=[1.0, 2.0, 1.0, 1.0, 1.0], chain_layout={"encoder": 2, "decoder": 3})
        )
        check_profile(profile)
        bad = OmegaProfile(
            branch_variances=profile.branch_variances,
            omegas=[1.0, 1.0, 1.0, 0.5, 1.5],
            chain_layout=profile.chain_layout,
        )
        with self.assertRaises(ProfilingError):
            check_profile(bad)

    def test_deep_admin_step_zero_finite(self):
        """48 층 인코더까지 ADMIN 초기 loss 와 기울기가 유한 (5 seeds)"""
        for seed in range(5):
            model = self.make_model(
                48, 2, dtype="float32", seed=seed, d_model=64, d_ff=128, src_vocab_size=64, tgt_vocab_size=64
            )
            batch = collate(self.make_pairs(4, seed=seed, vocab=64))
            initialize_admin(model, batch)
            model.train(np.random.default_rng(seed))
            with recording():
                loss = model.loss(batch)
                loss.backward()
            self.assertTrue(math.isfinite(loss.item()))
            for param in model.parameters():
                self.assertTrue(np.all(np.isfinite(param.grad)), msg=param.name)

    def test_per_feature_profile(self):
        """per_feature 프로파일은 [가지, d_model] ω"""
        model = self.make_model()
        profile = initialize_admin(model, self.make_batch(), per_feature=True)
        self.assertTrue(profile.per_feature)
        self.assertEqual(np.asarray(profile.omegas).shape, (10, 16))
        self.assertEqual(model.omegas.shape, (10, 16))


class OmegaProfileSerializationTestCase(BaseAdminTestCase):
    """OmegaProfile JSON 테스트"""

    def test_json_layout_and_round_trip(self):
        """JSON 은 branch_variances/omegas/profiling_tokens/chain_layout 를 갖고 다시 읽힌다"""
        model = self.make_model(1, 1)
        profile = initialize_admin(model, self.make_batch())
        document = json.loads(profile.to_json())
        self.assertEqual(set(document), {"branch_variances", "omegas", "profiling_tokens", "chain_layout"})
        self.assertEqual(document["chain_layout"], {"encoder": 2, "decoder": 3})
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "profile.json"
            profile.save(path)
            loaded = OmegaProfile.load(path)
        self.assertEqual(loaded, profile)

    def test_same_seed_same_bytes(self):
        """같은 seed 는 같은 JSON 바이트"""
        first = initialize_admin(self.make_model(seed=3), self.make_batch())
        second = initialize_admin(self.make_model(seed=3), self.make_batch())
        self.assertEqual(first.to_json(), second.to_json())

    def test_invalid_documents(self):
        """음수 분산, 길이 불일치, 홀수 인코더 가지 수는 ValidationError"""
        base = {
            "branch_variances": [1.0, 1.0, 1.0, 1.0, 1.0],
            "omegas": [],
            "profiling_tokens": 10,
            "chain_layout": {"encoder": 2, "decoder": 3},
        }
        OmegaProfile.from_dict(base)
        for change in (
            {"branch_variances": [1.0, -1.0, 1.0, 1.0, 1.0]},
            {"omegas": [1.0, 1.0]},
            {"omegas": [1.0, 0.0, 1.0, 1.0, 1.0]},
            {"chain_layout": {"encoder": 3, "decoder": 3}},
        ):
            with self.assertRaises(ValidationError):
                OmegaProfile.from_dict({**base, **change})


class FoldOmegaTestCase(BaseAdminTestCase):
    """fold_omega 테스트"""

    def trained_admin_model(self, dtype="float64", seed=0, **kwargs):
        """프로파일링 후 파라미터를 흔든 admin 모델 헬퍼"""
        model = self.make_model(dtype=dtype, seed=seed, **kwargs)
        vocab = model.config.src_vocab_size
        initialize_admin(model, collate(self.make_pairs(8, seed=seed, vocab=vocab)))
        self.perturb(model, seed=seed + 1)
        return model

    def test_unit_omega_bit_identical(self):
        """ω ≡ 1 이면 폴딩 후 파라미터가 같은 비트"""
        model = self.make_model()
        folded = fold_omega(model)
        for name, param in model.params.items():
            self.assertTrue(np.array_equal(param.data, folded.params[name].data))
        self.assertTrue(np.array_equal(folded.branch_eps, model.branch_eps))
        self.assertIs(folded.block_mode, BlockMode.POSTLN)

    def test_logits_match_float64(self):
        """64-bit 2L-2L: 20 개 랜덤 배치에서 logits 차이 < 1e-10"""
        model = self.trained_admin_model()
        self.assertGreater(float(model.omegas.max()), 1.0)
        folded = fold_omega(model)
        batches = [self.make_batch(n=3, seed=100 + i) for i in range(20)]
        self.assertLess(max_logit_deviation(model, folded, batches), 1e-10)

    def test_logits_match_float32_desk(self):
        """32-bit desk 폭 모델: logits 차이 < 1e-4"""
        model = self.make_model(
            2, 2, dtype="float32", d_model=64, d_ff=128, src_vocab_size=64, tgt_vocab_size=64
        )
        initialize_admin(model, collate(self.make_pairs(8, vocab=64)))
        self.perturb(model, scale=0.05)
        folded = fold_omega(model)
        batches = [collate(self.make_pairs(3, seed=200 + i, vocab=64)) for i in range(20)]
        self.assertLess(max_logit_deviation(model, folded, batches), 1e-4)

    def test_greedy_decodes_identical(self):
        """50 문장에서 greedy 결과가 토큰 단위로 같다"""
        model = self.trained_admin_model(seed=2)
        folded = fold_omega(model)
        sources = [src for src, _ in self.make_pairs(50, seed=7)]
        self.assertEqual(model.greedy_decode_batch(sources, 12), folded.greedy_decode_batch(sources, 12))

    def test_eps_rescaled(self):
        """접힌 가지의 eps 는 eps/ω²"""
        model = self.trained_admin_model()
        folded = fold_omega(model)
        omegas = model.omegas[:, 0]
        self.assertTrue(np.allclose(folded.branch_eps, model.branch_eps / omegas**2, rtol=1e-15, atol=0))

    def test_rejections(self):
        """postln 모델(두 번 접기 포함)과 특성별 ω 는 FoldingError"""
        model = self.trained_admin_model()
        folded = fold_omega(model)
        with self.assertRaises(FoldingError):
            fold_omega(folded)
        per_feature = self.make_model()
        initialize_admin(per_feature, self.make_batch(), per_feature=True)
        with self.assertRaises(FoldingError):
            fold_omega(per_feature)
