# experiments/checkpoints.py
"""
체크포인트 = checkpoint.json(메타데이터) + params.bin(파라미터 원본 바이트)

params.bin 은 파라미터 색인 순서대로 little-endian float32/float64 값을 이어 붙인 것이다.
같은 체크포인트를 읽고 다시 저장하면 두 파일 모두 바이트 단위로 같다.
"""

import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from rest_framework.exceptions import ValidationError
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from apps.admin_init.profile import OmegaProfile
from apps.architecture.branches import residual_branches
from apps.architecture.config import BlockMode, ModelConfig
from apps.architecture.model import INIT_SCHEME, Transformer
from apps.corpus.vocab import Vocab
from apps.exceptions import ConfigurationError, DataError
from apps.experiments.serializers import CheckpointSerializer
from apps.numerics.tensor import Parameter

__all__ = ("FORMAT_VERSION", "METADATA_FILE", "PARAMS_FILE", "Checkpoint", "save_checkpoint", "load_checkpoint")

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
METADATA_FILE = "checkpoint.json"
PARAMS_FILE = "params.bin"
WIDTHS = {"float32": 32, "float64": 64}


@dataclass
class Checkpoint:
    model: Transformer
    vocab: Vocab
    step: int = 0
    run_config: Optional[dict] = None

    @property
    def init_mode(self):
        """학습 때의 초기화. ω 를 접은 postln 체크포인트도 run_config 의 init 을 따른다."""
        if self.model.block_mode is BlockMode.ADMIN:
            return "admin"
        run = (self.run_config or {}).get("run") or {}
        return "admin" if run.get("init") == "admin" else "default"


def _omegas_to_json(model):
    if model.block_mode is not BlockMode.ADMIN:
        return None
    omegas = np.asarray(model.omegas, dtype=np.float64)
    # 가지마다 스칼라 ω 면 스칼라 목록으로 적는다
    if np.all(omegas == omegas[:, :1]):
        return omegas[:, 0].tolist()
    return omegas.tolist()


def _metadata(checkpoint):
    model = checkpoint.model
    entries, offset = [], 0
    for name, param in model.params.items():
        entries.append({"name": name, "shape": list(param.shape), "offset": offset, "count": int(param.size)})
        offset += int(param.size)
    profile = model.omega_profile
    return {
        "format_version": FORMAT_VERSION,
        "endianness": "little",
        "float_width": WIDTHS[model.config.dtype],
        "init_mode": checkpoint.init_mode,
        "init_scheme": INIT_SCHEME,
        "step": checkpoint.step,
        "config": model.config.to_dict(),
        "vocab": list(checkpoint.vocab.tokens),
        "branch_eps": np.asarray(model.branch_eps, dtype=np.float64).tolist(),
        "omegas": _omegas_to_json(model),
        "omega_profile": profile.to_dict() if profile is not None else None,
        "parameters": entries,
        "run_config": checkpoint.run_config,
    }


def save_checkpoint(checkpoint, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model = checkpoint.model
    little = np.dtype(model.dtype).newbyteorder("<")
    with open(directory / PARAMS_FILE, "wb") as stream:
        for param in model.params.values():
            stream.write(np.ascontiguousarray(param.data, dtype=little).tobytes())
    metadata = JSONRenderer().render(_metadata(checkpoint), renderer_context={"indent": 2}) + b"\n"
    (directory / METADATA_FILE).write_bytes(metadata)
    logger.info("체크포인트 저장: %s (step %d, 파라미터 %d 개)", directory, checkpoint.step, len(model.params))
    return directory


def load_checkpoint(directory):
    directory = Path(directory)
    metadata_path, params_path = directory / METADATA_FILE, directory / PARAMS_FILE
    if not metadata_path.exists() or not params_path.exists():
        raise DataError(f"체크포인트가 없습니다: {directory}")

    data = JSONParser().parse(io.BytesIO(metadata_path.read_bytes()))
    serializer = CheckpointSerializer(data=data)
    try:
        serializer.is_valid(raise_exception=True)
    except ValidationError as exc:
        raise DataError(f"체크포인트 메타데이터가 잘못되었습니다: {exc.detail}") from exc
    if data["format_version"] != FORMAT_VERSION:
        raise DataError(f"지원하지 않는 체크포인트 형식 버전입니다: {data['format_version']}")

    try:
        config = ModelConfig(**data["config"])
    except (TypeError, ConfigurationError) as exc:
        raise DataError(f"체크포인트 모델 설정이 잘못되었습니다: {exc}") from exc
    if WIDTHS[config.dtype] != data["float_width"]:
        raise DataError(f"float_width {data['float_width']} 가 dtype {config.dtype} 와 다릅니다.")

    dtype = np.dtype(config.np_dtype).newbyteorder("<")
    values = np.frombuffer(params_path.read_bytes(), dtype=dtype)
    entries = data["parameters"]
    expected = sum(entry["count"] for entry in entries)
    if values.size != expected:
        raise DataError(f"params.bin 원소 수 {values.size} 가 색인의 {expected} 와 다릅니다.")
    params = {}
    for entry in entries:
        chunk = values[entry["offset"] : entry["offset"] + entry["count"]]
        name = entry["name"]
        params[name] = Parameter(chunk.reshape(entry["shape"]).astype(config.np_dtype), name=name)

    for branch in residual_branches(config):
        for name in (branch.output_weight, branch.output_bias):
            if name not in params:
                raise DataError(f"체크포인트에 {name} 파라미터가 없습니다.")

    profile = OmegaProfile.from_dict(data["omega_profile"]) if data.get("omega_profile") else None
    model = Transformer(config, params, branch_eps=data["branch_eps"])
    if data["omegas"] is not None:
        if config.block_mode is not BlockMode.ADMIN:
            raise DataError("admin 이 아닌 체크포인트에 ω 가 있습니다.")
        model.set_omegas(data["omegas"], profile)
    elif config.block_mode is BlockMode.ADMIN:
        raise DataError("admin 체크포인트에 ω 가 없습니다.")

    checkpoint = Checkpoint(model, Vocab(data["vocab"]), step=data["step"], run_config=data.get("run_config"))
    if checkpoint.init_mode != data["init_mode"]:
        raise DataError(
            f"init_mode {data['init_mode']} 가 모델 block_mode {config.block_mode.value} / run_config 와 다릅니다."
        )
    logger.debug("체크포인트 읽음: %s (%s, step %d)", directory, config.label, checkpoint.step)
    return checkpoint
