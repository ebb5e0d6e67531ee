# numerics/gradcheck.py
import logging

import numpy as np

from apps.exceptions import ConfigurationError, DivergenceError
from apps.numerics.tensor import recording

__all__ = ("grad_check",)

logger = logging.getLogger(__name__)


def _evaluate(f):
    value = f()
    scalar = float(np.asarray(value.data if hasattr(value, "data") else value).reshape(-1)[0])
    if not np.isfinite(scalar):
        raise DivergenceError(f"grad_check 중 함수 값이 유한하지 않습니다: {scalar}")
    return scalar


def grad_check(f, params, h=1e-6, floor=1e-8, atol=0.0, max_coords=None, seed=0):
    """
    중앙 차분 (f(p+h) - f(p-h)) / 2h 와 자동미분 기울기를 좌표별로 비교한다.

    f 는 인자 없이 스칼라 Tensor 를 돌려주는 함수이고 params 의 값을 읽어야 한다.
    상대 오차는 |a - n| / max(|a|, |n|, floor) 이며 가장 나쁜 값을 돌려준다.
    |a - n| ≤ atol 인 좌표는 일치로 본다 (구조적으로 0 인 기울기의 차분 반올림 잡음).
    max_coords 를 주면 파라미터마다 그 수만큼 좌표를 뽑아 검사한다.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ConfigurationError(f"h 는 [1e-7, 1e-3] 범위여야 합니다: {h}")
    for param in params:
        if not param.data.flags.c_contiguous:
            param.assign(np.ascontiguousarray(param.data))
        if param.data.dtype != np.float64:
            raise ConfigurationError(f"grad_check 는 64-bit 파라미터에서만 동작합니다: {param.name}")
        param.zero_grad()

    with recording():
        loss = f()
        if not np.all(np.isfinite(loss.data)):
            raise DivergenceError("grad_check 기준점에서 loss 가 유한하지 않습니다.")
        loss.backward()
    analytic = [param.grad.copy() for param in params]

    rng = np.random.default_rng(seed)
    worst_error, worst_at = 0.0, None
    for param, grad in zip(params, analytic):
        flat = param.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        flat_grad = grad.reshape(-1)
        for index in coords:
            original = flat[index]
            flat[index] = original + h
            plus = _evaluate(f)
            flat[index] = original - h
            minus = _evaluate(f)
            flat[index] = original
            numeric = (plus - minus) / (2.0 * h)
            auto = float(flat_grad[index])
            if abs(auto - numeric) <= atol:
                continue
            error = abs(auto - numeric) / max(abs(auto), abs(numeric), floor)
            if error > worst_error:
                worst_error, worst_at = error, (param.name, int(index))

    logger.debug("grad_check 최악 상대 오차 %.3e at %s", worst_error, worst_at)
    return worst_error
