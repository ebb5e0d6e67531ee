# training/optim.py
"""
RAdam (rectified Adam)

ρ_∞ = 2/(1-β2) - 1, ρ_t = ρ_∞ - 2tβ2^t/(1-β2^t). ρ_t > 4 이면 보정 계수 r_t 를 곱한
적응 업데이트, 아니면 bias 보정한 모멘텀만으로 업데이트한다.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from apps.exceptions import DivergenceError

__all__ = ("RECTIFY_THRESHOLD", "OptimizerState", "radam_step", "RAdam")

logger = logging.getLogger(__name__)

RECTIFY_THRESHOLD = 4.0


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @property
    def rho_inf(self):
        return 2.0 / (1.0 - self.beta2) - 1.0

    def rho(self, t):
        beta2_t = self.beta2**t
        return self.rho_inf - 2.0 * t * beta2_t / (1.0 - beta2_t)

    def rectification(self, t):
        """스텝 t 의 보정 계수 r_t. ρ_t ≤ 4 인 초반 스텝은 None."""
        rho_t = self.rho(t)
        if rho_t <= RECTIFY_THRESHOLD:
            return None
        rho_inf = self.rho_inf
        return math.sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))


def radam_step(params, state, lr):
    """
    파라미터를 한 스텝 갱신한다. 기울기는 유한해야 하며 아니면 DivergenceError.
    """
    for param in params:
        if not np.all(np.isfinite(param.grad)):
            raise DivergenceError(f"옵티마이저에 유한하지 않은 기울기가 들어왔습니다: {param.name}")

    state.t += 1
    t = state.t
    beta1, beta2 = state.beta1, state.beta2
    r_t = state.rectification(t)
    rectified = r_t is not None
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t

    for param in params:
        grad = param.grad.astype(np.float64)
        m = state.m.get(param.name)
        if m is None:
            m = state.m[param.name] = np.zeros(param.shape, dtype=np.float64)
            state.v[param.name] = np.zeros(param.shape, dtype=np.float64)
        v = state.v[param.name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad

        m_hat = m / bias1
        if rectified:
            update = r_t * m_hat / (np.sqrt(v / bias2) + state.eps)
        else:
            update = m_hat
        value = param.data.astype(np.float64)
        if state.weight_decay:
            value = value - lr * state.weight_decay * value
        param.assign(value - lr * update)
    return rectified


class RAdam:
    def __init__(self, params, beta1=None, beta2=None, eps=None, weight_decay=None):
        defaults = settings.DEEPFORMER["RADAM"]
        self.params = list(params)
        self.state = OptimizerState(
            beta1=defaults["beta1"] if beta1 is None else beta1,
            beta2=defaults["beta2"] if beta2 is None else beta2,
            eps=defaults["eps"] if eps is None else eps,
            weight_decay=defaults["weight_decay"] if weight_decay is None else weight_decay,
        )

    @property
    def step_count(self):
        return self.state.t

    def zero_grad(self):
        for param in self.params:
            param.zero_grad()

    def step(self, lr):
        return radam_step(self.params, self.state, lr)
