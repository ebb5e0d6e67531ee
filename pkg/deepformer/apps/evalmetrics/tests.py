# apps/evalmetrics/tests.py
import numpy as np
from django.test import SimpleTestCase
from rest_framework.exceptions import ValidationError

from apps.evalmetrics.bleu import bleu_corpus, bleu_from_stats, sentence_stats, smoothed_sentence_bleu
from apps.evalmetrics.bootstrap import paired_bootstrap
from apps.evalmetrics.fine_grained import fine_grained_report, frequency_bucket, length_bucket
from apps.evalmetrics.report import evaluate_system, render_text, report_from_json, report_to_json
from apps.exceptions import DataError

# n-gram 을 손으로 세어 고정한 값 (1~4-gram 21/21, 11/16, 8/11, 5/7, BP exp(1 - 23/21))
FIXTURE_HYPOTHESES = [
    "the cat sat on the mat",
    "a dog runs fast",
    "hello world",
    "x y z w v",
    "one two three four",
]
FIXTURE_REFERENCES = [
    "the cat sat on the mat",
    "a dog runs very fast",
    "hello there world",
    "x y z w v",
    "four three two one",
]
FIXTURE_BLEU = 70.28


class BaseEvalTestCase(SimpleTestCase):
    """평가 지표 테스트의 공통 기능"""

    def make_sentences(self, n, seed=0, vocab=30, min_len=4, max_len=35):
        """랜덤 토큰 문장 헬퍼"""
        rng = np.random.default_rng(seed)
        return [
            " ".join(f"w{t}" for t in rng.integers(0, vocab, size=int(rng.integers(min_len, max_len))))
            for _ in range(n)
        ]

    def degrade(self, sentences, seed=1, rate=0.3):
        """일부 토큰을 바꾼 가설 헬퍼"""
        rng = np.random.default_rng(seed)
        out = []
        for sentence in sentences:
            tokens = sentence.split()
            for i in range(len(tokens)):
                if rng.random() < rate:
                    tokens[i] = "zz"
            out.append(" ".join(tokens))
        return out


class BleuTestCase(BaseEvalTestCase):
    """코퍼스 BLEU 테스트"""

    def test_identity_is_100(self):
        """가설이 참조와 같으면 100.00"""
        references = self.make_sentences(20)
        self.assertEqual(bleu_corpus(references, references).bleu, 100.0)

    def test_clipping(self):
        """"the the the the" 대 "the cat" 은 1-gram 이 1/4 로 잘리고 BLEU 0"""
        report = bleu_corpus(["the the the the"], ["the cat"])
        self.assertEqual(report.counts[0], 1)
        self.assertEqual(report.totals[0], 4)
        self.assertEqual(report.counts[1:], [0, 0, 0])
        self.assertEqual(report.bleu, 0.0)

    def test_fixture_corpus(self):
        """고정 5 문장 코퍼스의 BLEU"""
        report = bleu_corpus(FIXTURE_HYPOTHESES, FIXTURE_REFERENCES)
        self.assertAlmostEqual(report.bleu, FIXTURE_BLEU, delta=0.01)
        self.assertEqual(report.counts, [21, 11, 8, 5])
        self.assertEqual(report.totals, [21, 16, 11, 7])
        self.assertEqual((report.hyp_len, report.ref_len), (21, 23))
        self.assertAlmostEqual(report.brevity_penalty, np.exp(1 - 23 / 21), places=9)

    def test_geometric_mean(self):
        """모든 정밀도가 양수면 BP × exp(평균 log p)"""
        report = bleu_corpus(FIXTURE_HYPOTHESES, FIXTURE_REFERENCES)
        precisions = np.array(report.counts) / np.array(report.totals)
        expected = 100 * report.brevity_penalty * np.exp(np.log(precisions).mean())
        self.assertAlmostEqual(report.bleu, round(expected, 2), places=6)

    def test_permutation_invariant(self):
        """문장 순서를 바꿔도 같은 점수"""
        references = self.make_sentences(30)
        hypotheses = self.degrade(references)
        order = np.random.default_rng(3).permutation(30)
        shuffled = bleu_corpus([hypotheses[i] for i in order], [references[i] for i in order])
        self.assertEqual(bleu_corpus(hypotheses, references).bleu, shuffled.bleu)

    def test_stats_sum(self):
        """문장별 통계로 계산한 점수와 합한 통계로 계산한 점수가 같다"""
        stats = sentence_stats(FIXTURE_HYPOTHESES, FIXTURE_REFERENCES)
        self.assertEqual(stats.shape, (5, 10))
        self.assertEqual(bleu_from_stats(stats).score, bleu_from_stats(stats.sum(axis=0)).score)

    def test_token_lists(self):
        """토큰 목록 입력도 받는다"""
        report = bleu_corpus([s.split() for s in FIXTURE_HYPOTHESES], [s.split() for s in FIXTURE_REFERENCES])
        self.assertAlmostEqual(report.bleu, FIXTURE_BLEU, delta=0.01)

    def test_smoothed_sentence_bleu(self):
        """문장 BLEU 는 n ≥ 2 에 add-one 이 들어가 0 이 되지 않는다"""
        scores = smoothed_sentence_bleu(sentence_stats(["one two three four"], ["four three two one"]))
        self.assertGreater(scores[0], 0.0)
        self.assertAlmostEqual(smoothed_sentence_bleu(sentence_stats(["a b c d"], ["a b c d"]))[0], 100.0, places=9)

    def test_length_mismatch(self):
        """문장 수가 다르면 DataError"""
        with self.assertRaises(DataError):
            bleu_corpus(["a b"], ["a b", "c d"])


class BootstrapTestCase(BaseEvalTestCase):
    """paired bootstrap 테스트"""

    def fixture_scores(self):
        """200 문장 중 40 문장에서 A 가 1 높고 20 문장에서 1 낮은 점수"""
        b = np.zeros(200)
        a = b.copy()
        a[:40] += 1.0
        a[40:60] -= 1.0
        return a, b

    def test_identical_systems(self):
        """A == B 면 엄격한 승률 0, p = 1"""
        a = np.random.default_rng(0).random(50)
        result = paired_bootstrap(a, a.copy(), n_samples=200, seed=0)
        self.assertEqual(result.win_rate, 0.0)
        self.assertEqual(result.tie_rate, 1.0)
        self.assertEqual(result.p_value, 1.0)

    def test_strictly_better(self):
        """A 가 모든 문장에서 나으면 p = 0"""
        b = np.random.default_rng(0).random(50)
        result = paired_bootstrap(b + 0.5, b, n_samples=1000, seed=0)
        self.assertEqual(result.p_value, 0.0)
        self.assertEqual(result.win_rate, 1.0)
        self.assertTrue(result.significant)

    def test_matches_high_sample_oracle(self):
        """100k 표본을 다른 경로로 뽑은 독립 구현과 p 값이 ±0.02 안에서 같다"""
        a, b = self.fixture_scores()
        result = paired_bootstrap(a, b, n_samples=1000, seed=0)
        # 다항분포로 범주(+1, -1, 0) 개수를 직접 뽑는다
        rng = np.random.Generator(np.random.PCG64(12345))
        counts = rng.multinomial(200, [40 / 200, 20 / 200, 140 / 200], size=100_000)
        oracle = float(np.mean(counts[:, 0] - counts[:, 1] <= 0))
        self.assertAlmostEqual(result.p_value, oracle, delta=0.02)

    def test_deterministic_per_seed(self):
        """같은 seed 면 같은 결과"""
        a, b = self.fixture_scores()
        self.assertEqual(paired_bootstrap(a, b, 300, seed=7), paired_bootstrap(a, b, 300, seed=7))

    def test_monotone_in_improvement(self):
        """A 의 문장 점수를 계속 올리면 p 값이 늘지 않는다"""
        rng = np.random.default_rng(2)
        b = rng.random(80)
        a = b + rng.normal(0, 0.3, size=80)
        previous = 1.0
        for step in range(6):
            improved = a.copy()
            improved[: step * 10] += 0.5
            p = paired_bootstrap(improved, b, n_samples=500, seed=0).p_value
            self.assertLessEqual(p, previous)
            previous = p

    def test_bleu_stats(self):
        """충분통계를 넘기면 재표본마다 코퍼스 BLEU 를 다시 계산한다"""
        references = self.make_sentences(40)
        good = sentence_stats(references, references)
        bad = sentence_stats(self.degrade(references, rate=0.5), references)
        result = paired_bootstrap(good, bad, n_samples=100, seed=0)
        self.assertEqual(result.score_a, bleu_from_stats(good).score)
        self.assertEqual(result.p_value, 0.0)

    def test_invalid_inputs(self):
        """빈 목록과 길이 불일치는 DataError"""
        with self.assertRaises(DataError):
            paired_bootstrap([], [])
        with self.assertRaises(DataError):
            paired_bootstrap([1.0, 2.0], [1.0])


class FineGrainedTestCase(BaseEvalTestCase):
    """빈도/길이 구간 분석 테스트"""

    def test_bucket_edges(self):
        """구간 경계"""
        self.assertEqual(
            [frequency_bucket(c) for c in (0, 1, 4, 5, 9, 10, 99, 100, 999, 1000, 50000)],
            ["unseen", "1-4", "1-4", "5-9", "5-9", "10-99", "10-99", "100-999", "100-999", "1000+", "1000+"],
        )
        self.assertEqual(
            [length_bucket(n) for n in (0, 9, 10, 19, 20, 29, 30, 80)],
            ["<10", "<10", "10-19", "10-19", "20-29", "20-29", "30+", "30+"],
        )

    def test_hand_counted_fixture(self):
        """손으로 센 3 문장 정확도"""
        training = ["a a a a a b", "c"]
        references = ["a b c", "a a d", "b d"]
        hypotheses = ["a c x", "a d d", "b"]
        report = fine_grained_report(hypotheses, references, training)
        accuracy = {name: (entry["matched"], entry["total"]) for name, entry in report.word_accuracy.items()}
        self.assertEqual(accuracy, {"unseen": (1, 2), "1-4": (2, 3), "5-9": (2, 3)})
        self.assertEqual(list(report.length_bleu), ["<10"])
        self.assertEqual(report.length_bleu["<10"]["sentences"], 3)

    def test_perfect_hypotheses(self):
        """완벽한 가설이면 모든 구간에서 정확도 1, BLEU 100"""
        references = self.make_sentences(40)
        report = fine_grained_report(references, references, references[:10])
        self.assertTrue(all(entry["accuracy"] == 1.0 for entry in report.word_accuracy.values()))
        self.assertTrue(all(entry["bleu"] == 100.0 for entry in report.length_bleu.values()))
        self.assertGreater(len(report.length_bleu), 1)

    def test_length_buckets_partition_totals(self):
        """길이 구간 통계의 합은 코퍼스 전체 통계"""
        references = self.make_sentences(60, seed=4)
        hypotheses = self.degrade(references)
        report = fine_grained_report(hypotheses, references, references)
        summed = np.sum([entry["stats"] for entry in report.length_bleu.values()], axis=0)
        np.testing.assert_array_equal(summed, sentence_stats(hypotheses, references).sum(axis=0))
        for entry in report.word_accuracy.values():
            self.assertTrue(0.0 <= entry["accuracy"] <= 1.0)

    def test_empty_buckets_absent(self):
        """빈 구간은 0 이 아니라 빠진다"""
        report = fine_grained_report(["a b c d"], ["a b c d"], ["a b c d"])
        self.assertEqual(list(report.word_accuracy), ["1-4"])
        self.assertNotIn("30+", report.length_bleu)


class ReportTestCase(BaseEvalTestCase):
    """보고서 JSON 과 표 출력 테스트"""

    def test_json_and_text(self):
        """JSON 으로 쓰고 읽은 보고서와 정렬된 표"""
        references = self.make_sentences(30)
        report = evaluate_system(
            self.degrade(references, rate=0.1),
            references,
            training_references=references,
            baseline=self.degrade(references, rate=0.4),
            n_samples=50,
        )
        restored = report_from_json(report_to_json(report))
        self.assertEqual(restored.bleu, report.bleu)
        self.assertEqual(restored.counts, report.counts)
        self.assertEqual(restored.bootstrap["p_value"], report.bootstrap["p_value"])
        text = render_text(report)
        self.assertTrue(text.startswith(f"BLEU = {report.bleu:.2f}"))
        self.assertIn("frequency", text)
        self.assertIn("bootstrap (50 samples)", text)

    def test_invalid_report(self):
        """맞은 수가 전체보다 많은 보고서는 거부"""
        report = bleu_corpus(FIXTURE_HYPOTHESES, FIXTURE_REFERENCES)
        report.counts = [22, 11, 8, 5]
        with self.assertRaises(ValidationError):
            report_from_json(report_to_json(report))
