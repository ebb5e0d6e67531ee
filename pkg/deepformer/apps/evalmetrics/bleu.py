# evalmetrics/bleu.py
"""
multi-bleu.perl 방식의 코퍼스 BLEU

입력은 이미 공백으로 토큰화된 문장이다 (내부 재토큰화 없음). 문장마다 충분통계
(맞은 1~4-gram 수, 전체 1~4-gram 수, 가설 길이, 참조 길이) 를 구해 두고, 코퍼스
점수는 그 합으로 sacrebleu 의 compute_bleu 에서 smoothing 없이 계산한다.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sacrebleu.metrics import BLEU

from apps.exceptions import DataError

__all__ = (
    "NGRAM_ORDER",
    "STAT_COLUMNS",
    "EvalReport",
    "as_line",
    "sentence_stats",
    "bleu_from_stats",
    "smoothed_sentence_bleu",
    "bleu_corpus",
)

logger = logging.getLogger(__name__)

NGRAM_ORDER = 4
STAT_COLUMNS = (
    "correct_1",
    "correct_2",
    "correct_3",
    "correct_4",
    "total_1",
    "total_2",
    "total_3",
    "total_4",
    "hyp_len",
    "ref_len",
)

_scorer = BLEU(tokenize="none", effective_order=False, force=True)


@dataclass
class EvalReport:
    """
    코퍼스 BLEU 결과

    bleu 는 0~100 (소수 둘째 자리), precisions 는 n = 1..4 의 백분율 정밀도이다.
    세분화 분석과 bootstrap 결과는 있을 때만 채운다.
    """

    bleu: float
    precisions: list
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    counts: list
    totals: list
    sentence_bleu: list = field(default_factory=list)
    word_accuracy: dict = field(default_factory=dict)
    length_bleu: dict = field(default_factory=dict)
    bootstrap: Optional[dict] = None

    @classmethod
    def from_score(cls, score, stats):
        return cls(
            bleu=round(score.score, 2),
            precisions=[float(p) for p in score.precisions],
            brevity_penalty=float(score.bp),
            hyp_len=int(score.sys_len),
            ref_len=int(score.ref_len),
            counts=[int(c) for c in np.asarray(stats).sum(axis=0)[:NGRAM_ORDER]],
            totals=[int(t) for t in np.asarray(stats).sum(axis=0)[NGRAM_ORDER : 2 * NGRAM_ORDER]],
            sentence_bleu=smoothed_sentence_bleu(stats),
        )

    def to_dict(self):
        return {
            "bleu": self.bleu,
            "precisions": list(self.precisions),
            "brevity_penalty": self.brevity_penalty,
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
            "counts": list(self.counts),
            "totals": list(self.totals),
            "sentence_bleu": list(self.sentence_bleu),
            "word_accuracy": self.word_accuracy,
            "length_bleu": self.length_bleu,
            "bootstrap": self.bootstrap,
        }


def as_line(sentence):
    """토큰 목록이나 문자열을 공백 구분 한 줄로"""
    if isinstance(sentence, str):
        return sentence.strip()
    return " ".join(str(token) for token in sentence)


def sentence_stats(hypotheses, references):
    """문장별 충분통계 [n, 10] (정수)"""
    if len(hypotheses) != len(references):
        raise DataError(f"가설 {len(hypotheses)} 문장과 참조 {len(references)} 문장의 수가 다릅니다.")
    rows = []
    for hypothesis, reference in zip(hypotheses, references):
        score = _scorer.corpus_score([as_line(hypothesis)], [[as_line(reference)]])
        rows.append(list(score.counts) + list(score.totals) + [score.sys_len, score.ref_len])
    return np.asarray(rows, dtype=np.int64).reshape(len(rows), len(STAT_COLUMNS))


def _compute(stats, smooth_method, smooth_value=None):
    stats = np.asarray(stats, dtype=np.int64)
    # compute_bleu 는 목록을 제자리에서 바꾸므로 새 목록을 넘긴다
    correct = [int(v) for v in stats[:NGRAM_ORDER]]
    total = [int(v) for v in stats[NGRAM_ORDER : 2 * NGRAM_ORDER]]
    return BLEU.compute_bleu(
        correct,
        total,
        int(stats[-2]),
        int(stats[-1]),
        smooth_method=smooth_method,
        smooth_value=smooth_value,
        effective_order=False,
        max_ngram_order=NGRAM_ORDER,
    )


def bleu_from_stats(stats):
    """
    충분통계(문장별 [n, 10] 이나 이미 합한 [10]) 로 smoothing 없는 코퍼스 BLEU 를 계산한다.

    어느 한 n 이라도 맞은 n-gram 이 없으면 0 이다.
    """
    stats = np.asarray(stats, dtype=np.int64)
    if stats.ndim == 2:
        stats = stats.sum(axis=0)
    return _compute(stats, "none")


def smoothed_sentence_bleu(stats):
    """n ≥ 2 에 add-one smoothing 을 한 문장 BLEU 목록. bootstrap 기록용이다."""
    return [_compute(row, "add-k", 1).score for row in np.asarray(stats, dtype=np.int64)]


def bleu_corpus(hypotheses, references):
    stats = sentence_stats(hypotheses, references)
    score = bleu_from_stats(stats)
    logger.debug("BLEU %.2f (문장 %d)", score.score, len(stats))
    return EvalReport.from_score(score, stats)
