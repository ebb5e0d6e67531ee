# experiments/runconfig.py
"""
실험 설정 (RunConfig)

INI 파일은 [model] [schedule] [task] [run] [sweep] 섹션의 key = value 이고, JSON 은
같은 섹션 구조이거나 평평한 사전이다. 어느 쪽이든 RunConfigSerializer 로 검사한다.
"""

import configparser
import enum
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from django.conf import settings
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from apps.architecture.config import BlockMode, ModelConfig
from apps.corpus.tasks import TaskSpec
from apps.exceptions import ConfigurationError
from apps.experiments.serializers import CELL_PATTERN, RunConfigSerializer
from apps.training.schedule import Schedule
from apps.training.trainer import TrainOptions

__all__ = ("InitMode", "SweepCell", "RunConfig", "load_run_config", "parse_ini")

logger = logging.getLogger(__name__)

SECTIONS = ("model", "schedule", "task", "run", "sweep")


class InitMode(str, enum.Enum):
    DEFAULT = "default"
    ADMIN = "admin"


@dataclass(frozen=True)
class SweepCell:
    n_enc_layers: int
    n_dec_layers: int
    init_mode: InitMode

    @classmethod
    def parse(cls, text):
        match = CELL_PATTERN.match(text.strip())
        if match is None:
            raise ConfigurationError(f"셀 형식이 잘못되었습니다: {text}")
        return cls(int(match[1]), int(match[2]), InitMode(match[3] or "default"))

    @property
    def label(self):
        return f"{self.n_enc_layers}L-{self.n_dec_layers}L:{self.init_mode.value}"


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    schedule: Schedule
    task: TaskSpec
    init_mode: InitMode = InitMode.DEFAULT
    seed: int = 0
    data_seed: int = 0
    epochs: int = 10
    token_budget: Optional[int] = None
    accumulation: int = 1
    clip_norm: Optional[float] = None
    profiling_tokens: Optional[int] = None
    per_feature: bool = False
    explosion_factor: Optional[float] = None
    patience: Optional[int] = None
    out: Optional[str] = None
    cells: tuple = field(default_factory=tuple)
    seeds: tuple = field(default_factory=tuple)
    # 입력 [model] 섹션 그대로 (프리셋 이름 포함)
    model_section: dict = field(default_factory=dict)

    @property
    def is_admin(self):
        return self.init_mode is InitMode.ADMIN

    @property
    def budget(self):
        return settings.DEEPFORMER["TOKEN_BUDGET"] if self.token_budget is None else self.token_budget

    @property
    def profiling_budget(self):
        return settings.DEEPFORMER["PROFILING_TOKENS"] if self.profiling_tokens is None else self.profiling_tokens

    def train_options(self):
        return TrainOptions(
            token_budget=self.budget,
            accumulation=self.accumulation,
            clip_norm=self.clip_norm,
            explosion_factor=self.explosion_factor,
            patience=self.patience,
        )

    def with_overrides(self, seed=None, out=None, epochs=None, dtype=None, seeds=None):
        config = self
        if seeds is not None:
            config = replace(config, seeds=tuple(seeds))
        if seed is not None:
            config = replace(config, seed=seed)
        if out is not None:
            config = replace(config, out=str(out))
        if epochs is not None:
            if epochs < 0:
                raise ConfigurationError(f"epochs 는 0 이상이어야 합니다: {epochs}")
            config = replace(config, epochs=epochs)
        if dtype is not None:
            config = replace(config, model=config.model.replace(dtype=dtype))
        return config

    def for_cell(self, cell, seed):
        """sweep 셀 하나의 설정"""
        if cell.init_mode is InitMode.ADMIN:
            mode = BlockMode.ADMIN
        else:
            mode = BlockMode.POSTLN if self.model.block_mode is BlockMode.ADMIN else self.model.block_mode
        model = self.model.replace(
            n_enc_layers=cell.n_enc_layers, n_dec_layers=cell.n_dec_layers, block_mode=mode
        )
        return replace(self, model=model, init_mode=cell.init_mode, seed=seed, cells=(), seeds=())

    def to_dict(self):
        model = dict(self.model_section)
        model.update(
            {
                "n_enc_layers": self.model.n_enc_layers,
                "n_dec_layers": self.model.n_dec_layers,
                "d_model": self.model.d_model,
                "d_ff": self.model.d_ff,
                "n_heads": self.model.n_heads,
                "block_mode": BlockMode.POSTLN.value if self.is_admin else self.model.block_mode.value,
                "dropout": self.model.dropout,
                "label_smoothing": self.model.label_smoothing,
                "max_len": self.model.max_len,
                "ln_eps": self.model.ln_eps,
                "tie_embeddings": self.model.tie_embeddings,
            }
        )
        task = self.task.to_dict()
        task["seed"] = self.data_seed
        run = {
            "init": self.init_mode.value,
            "seed": self.seed,
            "epochs": self.epochs,
            "token_budget": self.budget,
            "accumulation": self.accumulation,
            "clip_norm": self.clip_norm,
            "profiling_tokens": self.profiling_budget,
            "per_feature": self.per_feature,
            "dtype": self.model.dtype,
        }
        for name in ("explosion_factor", "patience", "out"):
            if getattr(self, name) is not None:
                run[name] = getattr(self, name)
        data = {"model": model, "schedule": self.schedule.to_dict(), "task": task, "run": run}
        if self.cells:
            data["sweep"] = {"cells": [cell.label for cell in self.cells], "seeds": list(self.seeds)}
        return data

    def to_json(self):
        return JSONRenderer().render(self.to_dict(), renderer_context={"indent": 2}) + b"\n"

    def save(self, path):
        Path(path).write_bytes(self.to_json())

    @classmethod
    def from_dict(cls, data):
        data = _sectioned(data)
        serializer = RunConfigSerializer(data=data)
        serializer.is_valid(raise_exception=True)
        return cls._build(serializer.validated_data)

    @classmethod
    def _build(cls, validated):
        model_section = dict(validated["model"])
        schedule_section = dict(validated["schedule"])
        task_section = dict(validated["task"])
        run = dict(validated["run"])
        sweep = validated.get("sweep")

        preset = model_section.pop("preset")
        block_mode = model_section.pop("block_mode")
        init_mode = InitMode(run["init"])
        task_values = {**settings.DEEPFORMER["TASK"], **task_section}
        data_seed = task_values.pop("seed")
        task = TaskSpec(**task_values)
        model = ModelConfig.from_preset(
            preset,
            **model_section,
            block_mode=BlockMode.ADMIN if init_mode is InitMode.ADMIN else BlockMode(block_mode),
            src_vocab_size=task.vocab_size,
            tgt_vocab_size=task.vocab_size,
            dtype=run["dtype"],
        )

        preset_name = schedule_section.pop("preset", None)
        schedule_values = dict(settings.DEEPFORMER["SCHEDULE_PRESETS"][preset_name]) if preset_name else {}
        schedule_values.update(schedule_section)
        schedule = Schedule(**schedule_values)

        cells = tuple(SweepCell.parse(cell) for cell in sweep["cells"]) if sweep else ()
        seeds = tuple(sweep.get("seeds") or (run["seed"],)) if sweep else ()
        return cls(
            model=model,
            schedule=schedule,
            task=task,
            init_mode=init_mode,
            seed=run["seed"],
            data_seed=data_seed,
            epochs=run["epochs"],
            token_budget=run.get("token_budget"),
            accumulation=run["accumulation"],
            clip_norm=run.get("clip_norm"),
            profiling_tokens=run.get("profiling_tokens"),
            per_feature=run["per_feature"],
            explosion_factor=run.get("explosion_factor"),
            patience=run.get("patience"),
            out=run.get("out"),
            cells=cells,
            seeds=seeds,
            model_section={"preset": preset},
        )


def _sectioned(data):
    """평평한 JSON 사전은 키 이름으로 섹션을 찾아 나눈다."""
    if not isinstance(data, dict):
        raise ConfigurationError("설정은 사전(객체) 이어야 합니다.")
    if set(data) & set(SECTIONS):
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigurationError(f"알 수 없는 섹션입니다: {sorted(unknown)}")
        sectioned = {name: dict(data.get(name) or {}) for name in SECTIONS if name != "sweep"}
        if data.get("sweep"):
            sectioned["sweep"] = dict(data["sweep"])
        return sectioned

    fields = {
        name: set(serializer.fields)
        for name, serializer in RunConfigSerializer().fields.items()
    }
    sectioned = {name: {} for name in SECTIONS if name != "sweep"}
    for key, value in data.items():
        owners = [name for name in ("run", "model", "schedule", "task", "sweep") if key in fields[name]]
        if not owners:
            raise ConfigurationError(f"알 수 없는 설정 키입니다: {key}")
        # seed / max_len / preset 처럼 겹치는 키는 앞의 섹션(run, model) 이 가져간다
        sectioned.setdefault(owners[0], {})[key] = value
    return sectioned


def parse_ini(text):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"INI 설정을 읽을 수 없습니다: {exc}") from exc
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"알 수 없는 섹션입니다: {sorted(unknown)}")
    # 빈 값은 기본값을 쓰겠다는 뜻이다
    return {section: {k: v for k, v in parser[section].items() if v.strip()} for section in parser.sections()}


def load_run_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"설정 파일이 없습니다: {path}")
    content = path.read_bytes()
    if path.suffix == ".json":
        data = JSONParser().parse(io.BytesIO(content))
    else:
        data = parse_ini(content.decode("utf-8"))
    config = RunConfig.from_dict(data)
    logger.debug("설정 읽음: %s (%s, init=%s)", path, config.model.label, config.init_mode.value)
    return config
