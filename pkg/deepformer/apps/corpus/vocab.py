# corpus/vocab.py
import logging
from pathlib import Path

from apps.exceptions import DataError, SpecError

__all__ = (
    "PAD_ID",
    "BOS_ID",
    "EOS_ID",
    "UNK_ID",
    "SPECIAL_TOKENS",
    "MIN_VOCAB_SIZE",
    "Vocab",
    "build_vocab",
)

logger = logging.getLogger(__name__)

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<s>", "</s>", "<unk>")
MIN_VOCAB_SIZE = 8


class Vocab:
    """토큰 <-> id 전단사. 0~3 번은 pad/bos/eos/unk 로 고정된다."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise DataError(f"어휘의 앞 {len(SPECIAL_TOKENS)}개는 {SPECIAL_TOKENS} 여야 합니다.")
        if len(set(tokens)) != len(tokens):
            raise DataError("어휘에 중복 토큰이 있습니다.")
        self.tokens = tokens
        self.index = {token: i for i, token in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __contains__(self, token):
        return token in self.index

    @property
    def content_tokens(self):
        return self.tokens[len(SPECIAL_TOKENS) :]

    def token_to_id(self, token):
        return self.index.get(token, UNK_ID)

    def id_to_token(self, token_id):
        return self.tokens[token_id]

    def encode(self, tokens):
        return [self.token_to_id(token) for token in tokens]

    def decode(self, ids):
        """특수 토큰을 뺀 본문 토큰만 돌려준다."""
        return [self.tokens[i] for i in ids if i >= len(SPECIAL_TOKENS)]

    def unknown_tokens(self, sentences):
        return sorted({token for sentence in sentences for token in sentence if token not in self.index})

    def save(self, path):
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([line for line in lines if line])


def build_vocab(spec):
    """예약 id 0~3 다음에 본문 토큰 t4 .. t{V-1} 이 온다."""
    if spec.vocab_size < MIN_VOCAB_SIZE:
        raise SpecError(f"어휘 크기는 {MIN_VOCAB_SIZE} 이상이어야 합니다: {spec.vocab_size}")
    content = [f"t{i}" for i in range(len(SPECIAL_TOKENS), spec.vocab_size)]
    return Vocab(list(SPECIAL_TOKENS) + content)
