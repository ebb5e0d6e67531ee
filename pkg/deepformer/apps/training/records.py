# training/records.py
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

__all__ = ("StepRecord", "EpochRecord", "TrainRecord", "CurveWriter", "STEP_FIELDS", "EPOCH_FIELDS")

STEP_FIELDS = ("step", "lr", "loss", "grad_norm", "nan_flag")
EPOCH_FIELDS = ("epoch", "train_ppl", "dev_ppl", "dev_token_acc")


def _number(value):
    if value is None:
        return ""
    if isinstance(value, (bool, int)):
        return str(int(value))
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


@dataclass(frozen=True)
class StepRecord:
    step: int
    lr: float
    loss: float
    grad_norm: float
    nan_flag: bool = False

    def row(self):
        return [_number(getattr(self, name)) for name in STEP_FIELDS]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_ppl: float
    dev_ppl: Optional[float]
    dev_token_acc: Optional[float]

    def row(self):
        return [_number(getattr(self, name)) for name in EPOCH_FIELDS]


@dataclass
class TrainRecord:
    """
    학습 곡선 기록

    스텝마다 lr, loss(label smoothing 포함), 전역 기울기 norm 을, epoch 마다 perplexity 를 남긴다.
    발산으로 멈추면 diverged 와 이유, 멈춘 스텝이 채워진다.
    """

    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    diverged: bool = False
    reason: Optional[str] = None
    diverged_at: Optional[int] = None

    def __len__(self):
        return len(self.steps)

    @property
    def final_dev_ppl(self):
        return self.epochs[-1].dev_ppl if self.epochs else None

    @property
    def best_dev_ppl(self):
        finite = [e.dev_ppl for e in self.epochs if e.dev_ppl is not None and math.isfinite(e.dev_ppl)]
        return min(finite) if finite else None

    def mark_diverged(self, reason, step):
        self.diverged = True
        self.reason = reason
        self.diverged_at = step

    def write_csv(self, directory):
        with CurveWriter(directory) as writer:
            for record in self.steps:
                writer.write_step(record)
            for record in self.epochs:
                writer.write_epoch(record)


class CurveWriter:
    """steps.csv / epochs.csv 에 한 줄씩 바로 써 내려간다."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self._files = {}
        self._writers = {}

    def __enter__(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        for name, header in (("steps", STEP_FIELDS), ("epochs", EPOCH_FIELDS)):
            handle = open(self.directory / f"{name}.csv", "w", newline="", encoding="utf-8")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            self._files[name] = handle
            self._writers[name] = writer
        return self

    def __exit__(self, *exc_info):
        for handle in self._files.values():
            handle.close()
        self._files.clear()
        self._writers.clear()

    def _write(self, name, row):
        self._writers[name].writerow(row)
        self._files[name].flush()

    def write_step(self, record):
        self._write("steps", record.row())

    def write_epoch(self, record):
        self._write("epochs", record.row())
