# training/divergence.py
import logging
import math
from dataclasses import dataclass
from typing import Optional

from django.conf import settings

__all__ = ("NAN_LOSS", "NAN_GRAD", "LOSS_EXPLOSION", "Verdict", "DivergenceMonitor", "detect_divergence")

logger = logging.getLogger(__name__)

NAN_LOSS = "nan-loss"
NAN_GRAD = "nan-grad"
LOSS_EXPLOSION = "loss-explosion"


@dataclass(frozen=True)
class Verdict:
    diverged: bool
    reason: Optional[str] = None
    step: Optional[int] = None

    def __bool__(self):
        return self.diverged


class DivergenceMonitor:
    """
    스텝마다 loss 와 기울기 norm 을 보고 발산을 판정한다.

    유한하지 않은 loss / 기울기 norm 은 즉시 발산이고, loss 가 지금까지의 최솟값의
    explosion_factor 배를 patience 스텝 연속으로 넘어도 발산이다.
    """

    def __init__(self, explosion_factor=None, patience=None):
        defaults = settings.DEEPFORMER["DIVERGENCE"]
        self.explosion_factor = defaults["explosion_factor"] if explosion_factor is None else explosion_factor
        self.patience = defaults["patience"] if patience is None else patience
        self.best = math.inf
        self.streak = 0
        self.verdict = Verdict(False)

    def update(self, step, loss, grad_norm=0.0):
        if self.verdict:
            return self.verdict
        if not math.isfinite(loss):
            self.verdict = Verdict(True, NAN_LOSS, step)
        elif not math.isfinite(grad_norm):
            self.verdict = Verdict(True, NAN_GRAD, step)
        else:
            self.best = min(self.best, loss)
            if loss > self.explosion_factor * self.best:
                self.streak += 1
            else:
                self.streak = 0
            if self.streak >= self.patience:
                self.verdict = Verdict(True, LOSS_EXPLOSION, step)
        if self.verdict:
            logger.warning("발산 감지: %s (step %d, loss=%s, grad_norm=%s)", self.verdict.reason, step, loss, grad_norm)
        return self.verdict


def detect_divergence(records, explosion_factor=None, patience=None):
    """
    (step, loss, grad_norm) 또는 StepRecord 목록을 처음부터 훑어 첫 발산을 돌려준다.
    """
    monitor = DivergenceMonitor(explosion_factor, patience)
    for record in records:
        if hasattr(record, "loss"):
            step, loss, grad_norm = record.step, record.loss, record.grad_norm
        else:
            step, loss, grad_norm = record
        verdict = monitor.update(step, loss, grad_norm)
        if verdict:
            return verdict
    return monitor.verdict
