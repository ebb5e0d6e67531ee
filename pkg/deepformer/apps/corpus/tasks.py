# corpus/tasks.py
"""
합성 번역 과제 생성

copy 는 tgt = src, reverse_substitute 는 src 를 뒤집은 뒤 고정 순열 π 로 토큰을
치환한다. 문장 단위 해시로 train/dev/test 를 나누므로 세 분할은 구성상 겹치지 않는다.
"""

import enum
import hashlib
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from apps.corpus.vocab import Vocab, build_vocab
from apps.exceptions import DataError, SpecError

__all__ = (
    "TaskKind",
    "TaskSpec",
    "SentencePair",
    "ParallelCorpus",
    "EncodedCorpus",
    "SPLITS",
    "substitution_map",
    "make_target",
    "invert_target",
    "gen_task",
    "write_parallel",
    "read_parallel",
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")

# 분할을 채우지 못할 때 포기하기 전까지 시도할 후보 문장 수 배수
MAX_ATTEMPT_FACTOR = 50


class TaskKind(str, enum.Enum):
    COPY = "copy"
    REVERSE_SUBSTITUTE = "reverse_substitute"


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind = TaskKind.REVERSE_SUBSTITUTE
    vocab_size: int = 64
    min_len: int = 5
    max_len: int = 24
    # None 이면 항등 순열
    permutation_seed: Optional[int] = 0
    train_size: int = 20000
    dev_size: int = 1000
    test_size: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        if self.min_len < 1 or self.max_len < self.min_len:
            raise SpecError(f"문장 길이 범위가 잘못되었습니다: [{self.min_len}, {self.max_len}]")
        if self.train_size < 1 or self.dev_size < 0 or self.test_size < 0:
            raise SpecError("train 은 1 문장 이상, dev/test 는 0 이상이어야 합니다.")

    @property
    def sizes(self):
        return {"train": self.train_size, "dev": self.dev_size, "test": self.test_size}

    def to_dict(self):
        data = asdict(self)
        data["kind"] = self.kind.value
        return data


@dataclass(frozen=True)
class SentencePair:
    src: tuple
    tgt: tuple


@dataclass
class ParallelCorpus:
    vocab: Vocab
    train: list = field(default_factory=list)
    dev: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def split(self, name):
        return getattr(self, name)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.vocab.save(directory / "vocab.txt")
        for name in SPLITS:
            write_parallel(directory / name, self.split(name))

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        vocab = Vocab.load(directory / "vocab.txt")
        return cls(vocab, **{name: read_parallel(directory / name) for name in SPLITS})

    @staticmethod
    def exists(directory):
        directory = Path(directory)
        return (directory / "vocab.txt").exists() and all(
            (directory / f"{name}.src").exists() for name in SPLITS
        )

    def encode(self):
        return EncodedCorpus(
            **{
                name: [(self.vocab.encode(p.src), self.vocab.encode(p.tgt)) for p in self.split(name)]
                for name in SPLITS
            }
        )


@dataclass
class EncodedCorpus:
    """id 로 바뀐 (src, tgt) 쌍 목록"""

    train: list = field(default_factory=list)
    dev: list = field(default_factory=list)
    test: list = field(default_factory=list)


def substitution_map(vocab, permutation_seed):
    content = vocab.content_tokens
    if permutation_seed is None:
        return {token: token for token in content}
    order = np.random.default_rng(permutation_seed).permutation(len(content))
    return {token: content[j] for token, j in zip(content, order)}


def make_target(kind, src, mapping):
    kind = TaskKind(kind)
    if kind is TaskKind.COPY:
        return tuple(src)
    return tuple(mapping[token] for token in reversed(src))


def invert_target(kind, tgt, mapping):
    kind = TaskKind(kind)
    if kind is TaskKind.COPY:
        return tuple(tgt)
    inverse = {value: key for key, value in mapping.items()}
    return tuple(inverse[token] for token in reversed(tgt))


def _split_of(src, boundaries):
    digest = hashlib.blake2b(" ".join(src).encode("utf-8"), digest_size=8).digest()
    position = int.from_bytes(digest, "big") / 2.0**64
    for name, boundary in zip(SPLITS, boundaries):
        if position < boundary:
            return name
    return SPLITS[-1]


def gen_task(spec, seed):
    """
    (spec, seed) 의 순수 함수로 병렬 코퍼스를 만든다.

    i 번째 후보 문장은 (seed, i) 로 만든 난수열에서 길이와 토큰을 뽑는다.
    중복 문장은 버리고, 해시로 정해진 분할이 이미 찼으면 그 후보도 버린다.
    """
    vocab = build_vocab(spec)
    mapping = substitution_map(vocab, spec.permutation_seed)
    content = vocab.content_tokens
    sizes = spec.sizes
    total = sum(sizes.values())
    boundaries = np.cumsum([sizes[name] / total for name in SPLITS])

    splits = {name: [] for name in SPLITS}
    seen = set()
    max_attempts = MAX_ATTEMPT_FACTOR * total + 1000
    for index in range(max_attempts):
        if all(len(splits[name]) >= sizes[name] for name in SPLITS):
            break
        rng = np.random.default_rng([seed, index])
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        src = tuple(content[i] for i in rng.integers(0, len(content), size=length))
        if src in seen:
            continue
        seen.add(src)
        name = _split_of(src, boundaries)
        if len(splits[name]) < sizes[name]:
            splits[name].append(SentencePair(src, make_target(spec.kind, src, mapping)))
    else:
        raise SpecError(
            f"{max_attempts} 번 시도 안에 분할 크기 {sizes} 를 채우지 못했습니다. "
            "어휘나 길이 범위를 늘리세요."
        )

    logger.info(
        "%s 과제 생성: train=%d dev=%d test=%d (seed=%d)",
        spec.kind.value,
        len(splits["train"]),
        len(splits["dev"]),
        len(splits["test"]),
        seed,
    )
    return ParallelCorpus(vocab, **splits)


def write_parallel(prefix, pairs):
    prefix = Path(prefix)
    with open(f"{prefix}.src", "w", encoding="utf-8") as src_file, open(
        f"{prefix}.tgt", "w", encoding="utf-8"
    ) as tgt_file:
        for pair in pairs:
            src_file.write(" ".join(pair.src) + "\n")
            tgt_file.write(" ".join(pair.tgt) + "\n")


def read_parallel(prefix):
    prefix = Path(prefix)
    src_lines = Path(f"{prefix}.src").read_text(encoding="utf-8").splitlines()
    tgt_lines = Path(f"{prefix}.tgt").read_text(encoding="utf-8").splitlines()
    if len(src_lines) != len(tgt_lines):
        raise DataError(f"{prefix}: src {len(src_lines)} 줄, tgt {len(tgt_lines)} 줄로 개수가 다릅니다.")
    return [SentencePair(tuple(s.split()), tuple(t.split())) for s, t in zip(src_lines, tgt_lines)]
