# architecture/branches.py
import enum
from dataclasses import dataclass

__all__ = ("BranchKind", "Chain", "ResidualBranch", "residual_branches")


class BranchKind(str, enum.Enum):
    SELF_ATTENTION = "self_attention"
    MASKED_SELF_ATTENTION = "masked_self_attention"
    CROSS_ATTENTION = "cross_attention"
    FEED_FORWARD = "feed_forward"


class Chain(str, enum.Enum):
    ENCODER = "encoder"
    DECODER = "decoder"


@dataclass(frozen=True)
class ResidualBranch:
    """
    잔차 가지 f_i 하나

    index 는 전체 순서(인코더 먼저, forward 순서), chain_index 는 인코더/디코더
    각 체인 안에서의 0 기반 위치이다. prefix 는 가지 파라미터 이름의 공통 앞부분이다.
    """

    kind: BranchKind
    index: int
    chain: Chain
    chain_index: int
    layer: int
    prefix: str

    @property
    def is_attention(self):
        return self.kind is not BranchKind.FEED_FORWARD

    @property
    def norm_prefix(self):
        return f"{self.prefix}_ln"

    @property
    def output_weight(self):
        """ω 폴딩 때 나눌 출력 projection 이름"""
        return f"{self.prefix}.wo" if self.is_attention else f"{self.prefix}.w2"

    @property
    def output_bias(self):
        return f"{self.prefix}.bo" if self.is_attention else f"{self.prefix}.b2"


def residual_branches(config):
    """인코더 2N 개, 디코더 3M 개의 가지를 forward 순서로 돌려준다."""
    branches = []
    for layer in range(config.n_enc_layers):
        for kind, name in ((BranchKind.SELF_ATTENTION, "attn"), (BranchKind.FEED_FORWARD, "ff")):
            branches.append(
                ResidualBranch(kind, len(branches), Chain.ENCODER, len(branches), layer, f"enc.{layer}.{name}")
            )
    n_encoder = len(branches)
    for layer in range(config.n_dec_layers):
        for kind, name in (
            (BranchKind.MASKED_SELF_ATTENTION, "self_attn"),
            (BranchKind.CROSS_ATTENTION, "cross_attn"),
            (BranchKind.FEED_FORWARD, "ff"),
        ):
            branches.append(
                ResidualBranch(
                    kind, len(branches), Chain.DECODER, len(branches) - n_encoder, layer, f"dec.{layer}.{name}"
                )
            )
    return branches
