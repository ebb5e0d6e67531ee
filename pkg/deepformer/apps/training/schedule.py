# training/schedule.py
import math
from dataclasses import asdict, dataclass

from django.conf import settings

from apps.exceptions import ConfigurationError

__all__ = ("Schedule", "lr_at_step")


@dataclass(frozen=True)
class Schedule:
    warmup_steps: int = 8000
    peak_lr: float = 0.0007

    def __post_init__(self):
        if self.warmup_steps < 1:
            raise ConfigurationError(f"warmup_steps 는 1 이상이어야 합니다: {self.warmup_steps}")
        if not self.peak_lr > 0:
            raise ConfigurationError(f"peak_lr 는 양수여야 합니다: {self.peak_lr}")

    @classmethod
    def from_preset(cls, name):
        presets = settings.DEEPFORMER["SCHEDULE_PRESETS"]
        if name not in presets:
            raise ConfigurationError(f"알 수 없는 스케줄 프리셋입니다: {name} (가능: {sorted(presets)})")
        return cls(**presets[name])

    def to_dict(self):
        return asdict(self)


def lr_at_step(t, schedule):
    """선형 warmup 후 역제곱근 감소: peak × min(t/w, sqrt(w/t))"""
    if t < 1:
        raise ConfigurationError(f"스텝은 1 부터 셉니다: {t}")
    warmup = schedule.warmup_steps
    return schedule.peak_lr * min(t / warmup, math.sqrt(warmup / t))
