# evalmetrics/fine_grained.py
"""
세분화 분석

(a) 학습 데이터 빈도 구간별 단어 정확도: 참조 토큰 중 같은 문장의 가설에 (개수만큼) 나온 비율
(b) 참조 길이 구간별 코퍼스 BLEU

빈 구간은 0 이 아니라 결과에서 빠진다.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from apps.evalmetrics.bleu import as_line, bleu_from_stats, sentence_stats
from apps.exceptions import DataError

__all__ = (
    "FREQUENCY_BUCKETS",
    "LENGTH_BUCKETS",
    "FineGrainedReport",
    "frequency_bucket",
    "length_bucket",
    "token_frequencies",
    "fine_grained_report",
)

logger = logging.getLogger(__name__)

# (이름, 하한, 상한) 상한 None 은 무한대
FREQUENCY_BUCKETS = (
    ("unseen", 0, 0),
    ("1-4", 1, 4),
    ("5-9", 5, 9),
    ("10-99", 10, 99),
    ("100-999", 100, 999),
    ("1000+", 1000, None),
)
LENGTH_BUCKETS = (
    ("<10", 0, 9),
    ("10-19", 10, 19),
    ("20-29", 20, 29),
    ("30+", 30, None),
)


def _bucket(buckets, value):
    for name, low, high in buckets:
        if value >= low and (high is None or value <= high):
            return name
    raise DataError(f"구간에 들지 않는 값입니다: {value}")


def frequency_bucket(count):
    return _bucket(FREQUENCY_BUCKETS, count)


def length_bucket(length):
    return _bucket(LENGTH_BUCKETS, length)


def token_frequencies(sentences):
    counts = Counter()
    for sentence in sentences:
        counts.update(as_line(sentence).split())
    return counts


@dataclass
class FineGrainedReport:
    # 구간 이름 -> {"matched", "total", "accuracy"}
    word_accuracy: dict = field(default_factory=dict)
    # 구간 이름 -> {"sentences", "bleu", "stats"}
    length_bleu: dict = field(default_factory=dict)

    def to_dict(self):
        return {"word_accuracy": self.word_accuracy, "length_bleu": self.length_bleu}


def fine_grained_report(hypotheses, references, training_references):
    """
    training_references 는 빈도를 셀 학습 데이터의 target 쪽 문장들이다.
    """
    if len(hypotheses) != len(references):
        raise DataError(f"가설 {len(hypotheses)} 문장과 참조 {len(references)} 문장의 수가 다릅니다.")
    frequencies = token_frequencies(training_references)

    matched, totals = Counter(), Counter()
    for hypothesis, reference in zip(hypotheses, references):
        available = Counter(as_line(hypothesis).split())
        for token in as_line(reference).split():
            bucket = frequency_bucket(frequencies[token])
            totals[bucket] += 1
            if available[token] > 0:
                available[token] -= 1
                matched[bucket] += 1

    report = FineGrainedReport()
    for name, _, _ in FREQUENCY_BUCKETS:
        if totals[name]:
            report.word_accuracy[name] = {
                "matched": matched[name],
                "total": totals[name],
                "accuracy": matched[name] / totals[name],
            }

    stats = sentence_stats(hypotheses, references)
    lengths = np.array([len(as_line(reference).split()) for reference in references], dtype=np.int64)
    buckets = np.array([length_bucket(length) for length in lengths])
    for name, _, _ in LENGTH_BUCKETS:
        rows = stats[buckets == name] if len(buckets) else stats[:0]
        if len(rows):
            summed = rows.sum(axis=0)
            report.length_bleu[name] = {
                "sentences": int(len(rows)),
                "bleu": round(bleu_from_stats(summed).score, 2),
                "stats": [int(v) for v in summed],
            }
    logger.debug("세분화 분석: 빈도 구간 %d, 길이 구간 %d", len(report.word_accuracy), len(report.length_bleu))
    return report
