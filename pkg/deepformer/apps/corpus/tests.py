# apps/corpus/tests.py
import tempfile
from collections import Counter
from pathlib import Path

from django.test import SimpleTestCase

from apps.corpus.batching import collate, make_batches, pair_cost
from apps.corpus.tasks import (
    ParallelCorpus,
    TaskKind,
    TaskSpec,
    gen_task,
    invert_target,
    make_target,
    substitution_map,
)
from apps.corpus.vocab import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Vocab, build_vocab
from apps.exceptions import DataError, SpecError


class BaseCorpusTestCase(SimpleTestCase):
    """코퍼스 테스트의 공통 기능"""

    def make_spec(self, **kwargs):
        """작은 기본 과제 명세 헬퍼"""
        defaults = {
            "kind": TaskKind.REVERSE_SUBSTITUTE,
            "vocab_size": 16,
            "min_len": 3,
            "max_len": 8,
            "train_size": 200,
            "dev_size": 20,
            "test_size": 20,
        }
        defaults.update(kwargs)
        return TaskSpec(**defaults)

    def make_pairs(self, lengths):
        """길이 목록으로 (src, tgt) id 쌍 생성 헬퍼"""
        return [([4 + i % 4] * n, [5] * n) for i, n in enumerate(lengths)]

    def assert_covers_once(self, batches, n_pairs):
        """모든 문장이 정확히 한 번씩 배치에 들어갔는지 검증"""
        seen = Counter(i for batch in batches for i in batch.indices)
        self.assertEqual(sorted(seen), list(range(n_pairs)))
        self.assertTrue(all(count == 1 for count in seen.values()))


class VocabTestCase(BaseCorpusTestCase):
    """어휘 테스트"""

    def test_size_eight_has_four_content_tokens(self):
        """크기 8 어휘는 본문 토큰이 정확히 4개"""
        vocab = build_vocab(self.make_spec(vocab_size=8))
        self.assertEqual(len(vocab), 8)
        self.assertEqual(vocab.content_tokens, ["t4", "t5", "t6", "t7"])

    def test_reserved_ids(self):
        """예약 id 0~3 은 pad/bos/eos/unk"""
        vocab = build_vocab(self.make_spec())
        self.assertEqual(vocab.token_to_id("<pad>"), PAD_ID)
        self.assertEqual(vocab.token_to_id("<s>"), BOS_ID)
        self.assertEqual(vocab.token_to_id("</s>"), EOS_ID)
        self.assertEqual(vocab.token_to_id("<unk>"), UNK_ID)

    def test_round_trip_all_tokens(self):
        """token -> id -> token 은 항등"""
        vocab = build_vocab(self.make_spec(vocab_size=64))
        for token in vocab.tokens:
            self.assertEqual(vocab.id_to_token(vocab.token_to_id(token)), token)

    def test_unknown_token_maps_to_unk(self):
        """모르는 토큰은 unk id"""
        vocab = build_vocab(self.make_spec())
        self.assertEqual(vocab.encode(["t4", "zzz"]), [4, UNK_ID])
        self.assertEqual(vocab.unknown_tokens([("t4", "zzz")]), ["zzz"])

    def test_small_vocab_rejected(self):
        """어휘 크기 8 미만은 SpecError"""
        with self.assertRaises(SpecError):
            build_vocab(self.make_spec(vocab_size=7))

    def test_vocab_requires_special_prefix(self):
        """특수 토큰으로 시작하지 않는 어휘는 DataError"""
        with self.assertRaises(DataError):
            Vocab(["a", "b", "c", "d"])

    def test_corpus_encode_decode_lossless(self):
        """1000 문장 코퍼스 인코딩/디코딩 무손실"""
        corpus = gen_task(self.make_spec(vocab_size=32, train_size=1000, dev_size=0, test_size=0), seed=3)
        vocab = corpus.vocab
        for pair in corpus.train:
            ids = vocab.encode(pair.src)
            self.assertNotIn(UNK_ID, ids)
            self.assertEqual(tuple(vocab.decode(ids)), pair.src)

    def test_save_and_load(self):
        """어휘 파일은 한 줄에 한 토큰, 줄 번호가 id"""
        vocab = build_vocab(self.make_spec())
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "vocab.txt"
            vocab.save(path)
            lines = path.read_text(encoding="utf-8").splitlines()
            self.assertEqual(lines[4], "t4")
            self.assertEqual(Vocab.load(path), vocab)


class TaskTestCase(BaseCorpusTestCase):
    """합성 과제 생성 테스트"""

    def test_copy_target_equals_source(self):
        """copy: tgt = src"""
        self.assertEqual(make_target(TaskKind.COPY, ("a", "b", "c"), {}), ("a", "b", "c"))

    def test_reverse_substitute_identity_permutation(self):
        """π = 항등이면 reverse_substitute 는 뒤집기만 한다"""
        mapping = {"a": "a", "b": "b", "c": "c"}
        self.assertEqual(make_target(TaskKind.REVERSE_SUBSTITUTE, ("a", "b", "c"), mapping), ("c", "b", "a"))

    def test_identity_permutation_seed_none(self):
        """permutation_seed=None 이면 치환표가 항등"""
        vocab = build_vocab(self.make_spec())
        mapping = substitution_map(vocab, None)
        self.assertTrue(all(key == value for key, value in mapping.items()))

    def test_substitution_is_permutation(self):
        """치환표는 본문 토큰의 순열"""
        vocab = build_vocab(self.make_spec(vocab_size=32))
        mapping = substitution_map(vocab, 7)
        self.assertEqual(sorted(mapping.values()), sorted(vocab.content_tokens))

    def test_splits_disjoint(self):
        """train 과 dev/test 는 겹치는 문장이 없다"""
        spec = self.make_spec(vocab_size=16, min_len=3, max_len=6, train_size=10000, dev_size=500, test_size=500)
        corpus = gen_task(spec, seed=0)
        train = {pair.src for pair in corpus.train}
        self.assertEqual(len(corpus.train), 10000)
        self.assertEqual(len(train & {pair.src for pair in corpus.dev}), 0)
        self.assertEqual(len(train & {pair.src for pair in corpus.test}), 0)

    def test_deterministic(self):
        """같은 (spec, seed) 는 같은 코퍼스"""
        spec = self.make_spec()
        first, second = gen_task(spec, seed=11), gen_task(spec, seed=11)
        self.assertEqual(first.train, second.train)
        self.assertEqual(first.test, second.test)
        self.assertNotEqual(first.train, gen_task(spec, seed=12).train)

    def test_lengths_in_range(self):
        """문장 길이는 [min_len, max_len]"""
        corpus = gen_task(self.make_spec(min_len=3, max_len=8), seed=1)
        lengths = {len(pair.src) for pair in corpus.train}
        self.assertGreaterEqual(min(lengths), 3)
        self.assertLessEqual(max(lengths), 8)

    def test_reverse_substitute_invertible(self):
        """reverse + π⁻¹ 로 모든 target 에서 source 를 되찾는다"""
        spec = self.make_spec(permutation_seed=5)
        corpus = gen_task(spec, seed=2)
        mapping = substitution_map(corpus.vocab, spec.permutation_seed)
        for pair in corpus.train + corpus.dev + corpus.test:
            self.assertEqual(invert_target(spec.kind, pair.tgt, mapping), pair.src)

    def test_impossible_sizes_rejected(self):
        """가능한 문장 수보다 큰 분할 요청은 SpecError"""
        spec = self.make_spec(vocab_size=8, min_len=1, max_len=1, train_size=10, dev_size=0, test_size=0)
        with self.assertRaises(SpecError):
            gen_task(spec, seed=0)

    def test_bad_length_range_rejected(self):
        """min_len < 1 은 SpecError"""
        with self.assertRaises(SpecError):
            self.make_spec(min_len=0)

    def test_save_and_load(self):
        """코퍼스 디렉터리 저장/로드"""
        corpus = gen_task(self.make_spec(), seed=4)
        with tempfile.TemporaryDirectory() as tmp:
            corpus.save(tmp)
            self.assertTrue(ParallelCorpus.exists(tmp))
            self.assertTrue((Path(tmp) / "train.src").exists())
            loaded = ParallelCorpus.load(tmp)
        self.assertEqual(loaded.vocab, corpus.vocab)
        self.assertEqual(loaded.train, corpus.train)
        self.assertEqual(loaded.dev, corpus.dev)

    def test_mismatched_parallel_files_rejected(self):
        """src/tgt 줄 수가 다르면 DataError"""
        corpus = gen_task(self.make_spec(), seed=4)
        with tempfile.TemporaryDirectory() as tmp:
            corpus.save(tmp)
            (Path(tmp) / "dev.tgt").write_text("t4\n", encoding="utf-8")
            with self.assertRaises(DataError):
                ParallelCorpus.load(tmp)


class BatchingTestCase(BaseCorpusTestCase):
    """토큰 예산 배칭 테스트"""

    def test_collate_layout(self):
        """src 는 eos 로 끝나고 tgt_in 은 bos 로 시작, labels 는 eos 로 끝난다"""
        batch = collate([([4, 5], [6, 7, 8]), ([9], [10])])
        self.assertEqual(batch.src.tolist(), [[4, 5, EOS_ID], [9, EOS_ID, PAD_ID]])
        self.assertEqual(batch.tgt_in.tolist(), [[BOS_ID, 6, 7, 8], [BOS_ID, 10, PAD_ID, PAD_ID]])
        self.assertEqual(batch.labels.tolist(), [[6, 7, 8, EOS_ID], [10, EOS_ID, PAD_ID, PAD_ID]])
        self.assertEqual(batch.n_target_tokens, 6)
        self.assertEqual(batch.cost, pair_cost([4, 5], [6, 7, 8]) + pair_cost([9], [10]))

    def test_infinite_budget_single_batch(self):
        """예산이 무한이면 한 배치"""
        pairs = self.make_pairs([3, 7, 5, 2])
        batches = make_batches(pairs, float("inf"), seed=0)
        self.assertEqual(len(batches), 1)
        self.assert_covers_once(batches, 4)

    def test_budget_twenty_with_specials(self):
        """길이 10 문장 10개, 예산 20 이면 배치당 한 문장"""
        pairs = self.make_pairs([10] * 10)
        batches = make_batches(pairs, 20, seed=0)
        self.assertEqual(len(batches), 10)
        self.assertTrue(all(1 <= len(batch) <= 2 for batch in batches))
        self.assertTrue(all(batch.cost <= 20 for batch in batches))
        self.assert_covers_once(batches, 10)

    def test_budget_respected(self):
        """모든 배치의 비용이 예산 이하"""
        corpus = gen_task(self.make_spec(), seed=0).encode()
        batches = make_batches(corpus.train, 64, seed=3)
        self.assertTrue(all(batch.cost <= 64 for batch in batches))
        self.assert_covers_once(batches, len(corpus.train))

    def test_epochs_shuffle_same_multiset(self):
        """seed 가 다르면 순서는 다르고 문장 다중집합은 같다"""
        corpus = gen_task(self.make_spec(), seed=0).encode()
        first = make_batches(corpus.train, 48, seed=1)
        second = make_batches(corpus.train, 48, seed=2)
        order_first = [i for batch in first for i in batch.indices]
        order_second = [i for batch in second for i in batch.indices]
        self.assertNotEqual(order_first, order_second)
        self.assertEqual(sorted(order_first), sorted(order_second))

    def test_oversized_sentence_named(self):
        """예산을 넘는 문장은 번호와 함께 DataError"""
        pairs = self.make_pairs([3, 30, 4])
        with self.assertRaisesMessage(DataError, "1 번 문장"):
            make_batches(pairs, 20, seed=0)
