# admin_init/folding.py
import logging

import numpy as np

from apps.architecture.config import BlockMode
from apps.architecture.model import Transformer
from apps.exceptions import FoldingError
from apps.numerics.tensor import Parameter

__all__ = ("fold_omega", "max_logit_deviation")

logger = logging.getLogger(__name__)


def fold_omega(model):
    """
    학습된 admin 모델의 ω 를 파라미터에 흡수해 post-LN 모델을 만든다.

    LN(x⊙ω + f(x)) = LN(x + f(x)/ω) 이므로 가지 출력 projection 가중치와 bias 를 ω 로 나눈다.
    LN 의 eps 까지 정확히 맞추려고 접힌 가지의 eps 는 eps/ω² 로 바꾼다 (ω = 1 이면 그대로).
    """
    if model.block_mode is not BlockMode.ADMIN:
        raise FoldingError(f"admin 모드 모델만 접을 수 있습니다: {model.block_mode.value}")
    omegas = np.asarray(model.omegas, dtype=np.float64)
    if not np.all(omegas == omegas[:, :1]):
        raise FoldingError("특성별로 다른 ω 는 접을 수 없습니다 (가지마다 스칼라 ω 여야 합니다).")

    dtype = model.dtype
    params = {name: Parameter(p.data.copy(), name=name) for name, p in model.params.items()}
    branch_eps = model.branch_eps.copy()
    for branch in model.branches:
        omega = float(omegas[branch.index, 0])
        if omega == 1.0:
            continue
        for name in (branch.output_weight, branch.output_bias):
            params[name].assign((params[name].data.astype(np.float64) / omega).astype(dtype))
        branch_eps[branch.index] = branch_eps[branch.index] / (omega * omega)

    folded = Transformer(model.config.replace(block_mode=BlockMode.POSTLN), params, branch_eps=branch_eps)
    logger.info("ω 폴딩 완료: 가지 %d 개, 최대 ω %.4g", len(model.branches), float(omegas.max()))
    return folded


def max_logit_deviation(model_a, model_b, batches):
    """두 모델의 logits 최대 절대 차이 (평가 모드)"""
    deviation = 0.0
    for model in (model_a, model_b):
        model.eval()
    for batch in batches:
        a = model_a.forward(batch).data.astype(np.float64)
        b = model_b.forward(batch).data.astype(np.float64)
        deviation = max(deviation, float(np.abs(a - b).max()))
    return deviation
