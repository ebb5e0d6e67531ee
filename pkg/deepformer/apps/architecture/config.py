# architecture/config.py
import enum
from dataclasses import asdict, dataclass, replace

import numpy as np
from django.conf import settings

from apps.corpus.vocab import SPECIAL_TOKENS
from apps.exceptions import ConfigurationError

__all__ = ("BlockMode", "ModelConfig", "DTYPES")

DTYPES = {"float32": np.float32, "float64": np.float64}


class BlockMode(str, enum.Enum):
    POSTLN = "postln"
    PRELN = "preln"
    ADMIN = "admin"


@dataclass(frozen=True)
class ModelConfig:
    """
    인코더-디코더 구조 설정

    기본값은 CPU 에서 돌릴 수 있는 desk 프리셋(64/128/2)이다.
    프리셋 값은 settings.DEEPFORMER["MODEL_PRESETS"] 에서 읽는다.
    """

    n_enc_layers: int = 6
    n_dec_layers: int = 6
    d_model: int = 64
    d_ff: int = 128
    n_heads: int = 2
    src_vocab_size: int = 64
    tgt_vocab_size: int = 64
    dropout: float = 0.1
    block_mode: BlockMode = BlockMode.POSTLN
    label_smoothing: float = 0.1
    max_len: int = 64
    ln_eps: float = 1e-5
    dtype: str = "float32"
    tie_embeddings: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "block_mode", BlockMode(self.block_mode))
        except ValueError as exc:
            raise ConfigurationError(f"알 수 없는 block_mode 입니다: {self.block_mode}") from exc
        self.validate()

    def validate(self):
        if self.n_enc_layers < 1 or self.n_dec_layers < 1:
            raise ConfigurationError(
                f"인코더/디코더 층 수는 1 이상이어야 합니다: N={self.n_enc_layers}, M={self.n_dec_layers}"
            )
        if self.d_model < 1 or self.d_ff < 1 or self.n_heads < 1:
            raise ConfigurationError("d_model, d_ff, n_heads 는 양수여야 합니다.")
        if self.d_model % self.n_heads:
            raise ConfigurationError(f"d_model({self.d_model}) 은 n_heads({self.n_heads}) 로 나누어져야 합니다.")
        min_vocab = len(SPECIAL_TOKENS) + 1
        if self.src_vocab_size < min_vocab or self.tgt_vocab_size < min_vocab:
            raise ConfigurationError(f"어휘 크기는 {min_vocab} 이상이어야 합니다.")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout 은 [0, 1) 범위여야 합니다: {self.dropout}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigurationError(f"label_smoothing 은 [0, 1) 범위여야 합니다: {self.label_smoothing}")
        if self.max_len < 2:
            raise ConfigurationError(f"max_len 은 2 이상이어야 합니다: {self.max_len}")
        if self.ln_eps < 0:
            raise ConfigurationError(f"ln_eps 는 음수일 수 없습니다: {self.ln_eps}")
        if self.dtype not in DTYPES:
            raise ConfigurationError(f"dtype 은 {tuple(DTYPES)} 중 하나여야 합니다: {self.dtype}")

    @classmethod
    def from_preset(cls, name="desk", **overrides):
        presets = settings.DEEPFORMER["MODEL_PRESETS"]
        if name not in presets:
            raise ConfigurationError(f"알 수 없는 모델 프리셋입니다: {name} (가능: {sorted(presets)})")
        values = {
            "dropout": settings.DEEPFORMER["DROPOUT"],
            "label_smoothing": settings.DEEPFORMER["LABEL_SMOOTHING"],
            "max_len": settings.DEEPFORMER["MAX_LEN"],
            "ln_eps": settings.DEEPFORMER["LN_EPS"],
            **presets[name],
        }
        values.update(overrides)
        return cls(**values)

    @property
    def n_branches(self):
        return 2 * self.n_enc_layers + 3 * self.n_dec_layers

    @property
    def d_head(self):
        return self.d_model // self.n_heads

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        data = asdict(self)
        data["block_mode"] = self.block_mode.value
        return data

    @property
    def label(self):
        return f"{self.n_enc_layers}L-{self.n_dec_layers}L"
