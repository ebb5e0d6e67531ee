# evalmetrics/bootstrap.py
import logging
from dataclasses import asdict, dataclass

import numpy as np
from django.conf import settings

from apps.evalmetrics.bleu import STAT_COLUMNS, bleu_from_stats
from apps.exceptions import DataError

__all__ = ("BootstrapResult", "paired_bootstrap")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootstrapResult:
    """
    paired bootstrap 결과

    p_value: 재표본에서 B 가 A 이상인 비율 (단측, A 가 더 낫다는 주장)
    win_rate: A 가 B 보다 엄격히 큰 비율, tie_rate: 같은 비율
    """

    score_a: float
    score_b: float
    p_value: float
    win_rate: float
    tie_rate: float
    n_samples: int
    seed: int
    significance_level: float

    @property
    def significant(self):
        return self.p_value < self.significance_level

    def to_dict(self):
        data = asdict(self)
        data["significant"] = self.significant
        return data


def _is_bleu_stats(values):
    return values.ndim == 2 and values.shape[1] == len(STAT_COLUMNS)


def _corpus_score(values, indices=None):
    sample = values if indices is None else values[indices]
    if _is_bleu_stats(values):
        return bleu_from_stats(sample.sum(axis=0)).score
    return float(sample.mean())


def paired_bootstrap(scores_a, scores_b, n_samples=None, seed=0, significance_level=None):
    """
    문장 번호를 복원 추출해 두 시스템의 코퍼스 점수를 n_samples 번 비교한다.

    scores 가 [n, 10] 충분통계면 재표본마다 합한 통계로 코퍼스 BLEU 를 다시 계산하고,
    1 차원 문장 점수면 평균을 비교한다. 두 시스템은 같은 재표본을 쓴다.
    """
    defaults = settings.DEEPFORMER
    n_samples = defaults["BOOTSTRAP_SAMPLES"] if n_samples is None else n_samples
    level = defaults["SIGNIFICANCE_LEVEL"] if significance_level is None else significance_level
    a = np.asarray(scores_a)
    b = np.asarray(scores_b)
    if a.shape != b.shape:
        raise DataError(f"두 시스템의 문장 점수 shape 가 다릅니다: {a.shape} != {b.shape}")
    if len(a) == 0:
        raise DataError("bootstrap 할 문장이 없습니다.")
    if n_samples < 1:
        raise DataError(f"n_samples 는 1 이상이어야 합니다: {n_samples}")

    rng = np.random.default_rng(seed)
    indices = rng.integers(0, len(a), size=(n_samples, len(a)))
    if _is_bleu_stats(a):
        sample_a = np.array([_corpus_score(a, row) for row in indices])
        sample_b = np.array([_corpus_score(b, row) for row in indices])
    else:
        a, b = a.astype(np.float64), b.astype(np.float64)
        sample_a = a[indices].mean(axis=1)
        sample_b = b[indices].mean(axis=1)

    result = BootstrapResult(
        score_a=_corpus_score(a),
        score_b=_corpus_score(b),
        p_value=float(np.mean(sample_b >= sample_a)),
        win_rate=float(np.mean(sample_a > sample_b)),
        tie_rate=float(np.mean(sample_a == sample_b)),
        n_samples=n_samples,
        seed=seed,
        significance_level=level,
    )
    logger.info("bootstrap %d 회: A=%.2f B=%.2f p=%.4f", n_samples, result.score_a, result.score_b, result.p_value)
    return result
