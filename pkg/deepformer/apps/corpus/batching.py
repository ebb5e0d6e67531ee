# corpus/batching.py
import logging
import math
from dataclasses import dataclass

import numpy as np

from apps.corpus.vocab import BOS_ID, EOS_ID, PAD_ID
from apps.exceptions import DataError

__all__ = ("Batch", "SPECIAL_COST", "pair_cost", "collate", "make_batches")

logger = logging.getLogger(__name__)

# bos/eos 두 개
SPECIAL_COST = 2


@dataclass
class Batch:
    """
    패딩된 학습 배치

    src: [B, Ls] 토큰 + eos, tgt_in: [B, Lt] bos + 토큰, labels: [B, Lt] 토큰 + eos.
    마스크는 True 가 실제 토큰이다. indices 는 원래 코퍼스에서의 문장 번호이다.
    """

    src: np.ndarray
    tgt_in: np.ndarray
    labels: np.ndarray
    src_mask: np.ndarray
    tgt_mask: np.ndarray
    indices: tuple

    def __len__(self):
        return self.src.shape[0]

    @property
    def n_target_tokens(self):
        return int(self.tgt_mask.sum())

    @property
    def n_source_tokens(self):
        return int(self.src_mask.sum())

    @property
    def cost(self):
        return int(np.maximum(self.src_mask.sum(axis=1), self.tgt_mask.sum(axis=1)).sum()) + len(self)


def pair_cost(src, tgt):
    return max(len(src), len(tgt)) + SPECIAL_COST


def _pad(rows):
    width = max(len(row) for row in rows)
    out = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, : len(row)] = row
    return out


def collate(pairs, indices=None):
    """id 쌍 목록을 하나의 Batch 로 묶는다."""
    if not pairs:
        raise DataError("빈 배치는 만들 수 없습니다.")
    src = _pad([list(s) + [EOS_ID] for s, _ in pairs])
    tgt_in = _pad([[BOS_ID] + list(t) for _, t in pairs])
    labels = _pad([list(t) + [EOS_ID] for _, t in pairs])
    indices = tuple(range(len(pairs))) if indices is None else tuple(indices)
    return Batch(
        src=src,
        tgt_in=tgt_in,
        labels=labels,
        src_mask=src != PAD_ID,
        tgt_mask=labels != PAD_ID,
        indices=indices,
    )


def make_batches(pairs, budget, seed):
    """
    토큰 예산 배칭

    문장 쌍의 비용은 긴 쪽 길이 + 2 이다. 비용 순으로 정렬(같은 비용은 seed 로 섞음)한 뒤
    예산을 넘지 않게 앞에서부터 채우고, 마지막에 배치 순서를 seed 로 섞는다.
    budget 이 None 이나 inf 이면 전체가 한 배치가 된다.
    """
    if budget is None:
        budget = math.inf
    costs = [pair_cost(src, tgt) for src, tgt in pairs]
    for index, cost in enumerate(costs):
        if cost > budget:
            raise DataError(f"{index} 번 문장의 토큰 비용 {cost} 가 배치 예산 {budget} 를 넘습니다.")
    if not pairs:
        return []

    rng = np.random.default_rng(seed)
    tiebreak = rng.permutation(len(pairs))
    order = np.lexsort((tiebreak, np.asarray(costs)))

    groups, current, used = [], [], 0
    for index in order:
        cost = costs[index]
        if current and used + cost > budget:
            groups.append(current)
            current, used = [], 0
        current.append(int(index))
        used += cost
    groups.append(current)

    batches = [collate([pairs[i] for i in group], indices=group) for group in groups]
    batches = [batches[i] for i in rng.permutation(len(batches))]
    logger.debug("배치 %d 개 생성 (문장 %d, 예산 %s)", len(batches), len(pairs), budget)
    return batches
