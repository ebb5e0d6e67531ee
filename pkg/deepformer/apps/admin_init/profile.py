# admin_init/profile.py
"""
ADMIN 초기화

1) ω ≡ 1 인 기본 초기화 모델로 한 번 forward 해서 가지별 출력 분산을 잰다.
2) 체인(인코더, 디코더)마다 ω_1 = 1, ω_i = sqrt(Σ_{j<i} v_j) 로 ω 를 정한다.
"""

import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from apps.admin_init.serializers import OmegaProfileSerializer
from apps.architecture.branches import Chain
from apps.architecture.config import BlockMode
from apps.corpus.batching import collate, pair_cost
from apps.exceptions import DataError, ProfilingError

__all__ = (
    "OmegaProfile",
    "profile_variances",
    "compute_omega",
    "compute_profile_omegas",
    "check_profile",
    "initialize_admin",
    "select_profiling_batch",
)

logger = logging.getLogger(__name__)

# ω_i² 와 분산 누적합 비교 허용 오차
OMEGA_TOLERANCE = 1e-9


@dataclass(frozen=True)
class OmegaProfile:
    """가지별 분산과 ω. 원소는 스칼라, per-feature 프로파일이면 d_model 벡터이다."""

    branch_variances: list
    omegas: list = field(default_factory=list)
    profiling_tokens: int = 0
    chain_layout: dict = field(default_factory=dict)

    @property
    def per_feature(self):
        return bool(self.branch_variances) and isinstance(self.branch_variances[0], list)

    @property
    def n_branches(self):
        return self.chain_layout["encoder"] + self.chain_layout["decoder"]

    def chains(self, values):
        """인코더/디코더 체인으로 나눈 (이름, 값) 목록"""
        n_encoder = self.chain_layout["encoder"]
        return [(Chain.ENCODER, values[:n_encoder]), (Chain.DECODER, values[n_encoder:])]

    def to_dict(self):
        return {
            "branch_variances": self.branch_variances,
            "omegas": self.omegas,
            "profiling_tokens": self.profiling_tokens,
            "chain_layout": dict(self.chain_layout),
        }

    @classmethod
    def from_dict(cls, data):
        serializer = OmegaProfileSerializer(data=data)
        serializer.is_valid(raise_exception=True)
        validated = serializer.validated_data
        return cls(
            branch_variances=validated["branch_variances"],
            omegas=validated["omegas"],
            profiling_tokens=validated["profiling_tokens"],
            chain_layout=dict(validated["chain_layout"]),
        )

    def to_json(self):
        return JSONRenderer().render(self.to_dict(), renderer_context={"indent": 2}) + b"\n"

    def save(self, path):
        Path(path).write_bytes(self.to_json())

    @classmethod
    def load(cls, path):
        return cls.from_dict(JSONParser().parse(io.BytesIO(Path(path).read_bytes())))


def _as_list(values):
    return np.asarray(values, dtype=np.float64).tolist()


def select_profiling_batch(pairs, token_budget, seed):
    """seed 순서로 섞은 학습 문장을 토큰 예산까지 담은 한 배치"""
    if not pairs:
        raise ProfilingError("프로파일링에 쓸 문장이 없습니다.")
    order = np.random.default_rng(seed).permutation(len(pairs))
    chosen, used = [], 0
    for index in order:
        cost = pair_cost(*pairs[index])
        if used + cost > token_budget:
            if chosen:
                break
            continue
        chosen.append(int(index))
        used += cost
    if not chosen:
        raise ProfilingError(f"토큰 예산 {token_budget} 안에 들어가는 문장이 없습니다.")
    return collate([pairs[i] for i in chosen], indices=chosen)


def profile_variances(model, batch, per_feature=False):
    """
    ω ≡ 1, dropout 없이 한 번 forward 하며 가지 출력 f_i(x_{i-1}) 의 분산을 잰다.

    분산은 pad 가 아닌 모든 토큰 위치와 모든 특성에 대한 모분산이며
    per_feature=True 이면 특성별 분산 벡터를 남긴다. 파라미터는 바뀌지 않는다.
    """
    if model.block_mode is not BlockMode.ADMIN:
        raise ProfilingError(f"프로파일링은 admin 모드 모델에서만 합니다: {model.block_mode.value}")
    if not np.all(model.omegas == 1):
        raise ProfilingError("프로파일링은 ω ≡ 1 인 모델에서 해야 합니다.")
    if batch is None or len(batch) == 0 or batch.n_source_tokens == 0 or batch.n_target_tokens == 0:
        raise ProfilingError("프로파일링 배치가 비어 있거나 전부 pad 입니다.")

    variances = [None] * model.config.n_branches

    def observe(branch, output, token_mask):
        values = output.data[np.asarray(token_mask, dtype=bool)].astype(np.float64)
        if per_feature:
            variances[branch.index] = values.var(axis=0)
        else:
            variances[branch.index] = values.var()

    was_training, rng = model.training, model.rng
    model.eval()
    try:
        model.forward(batch, observer=observe)
    finally:
        if was_training:
            model.train(rng)

    if any(v is None for v in variances):
        raise ProfilingError("forward 중 관측되지 않은 가지가 있습니다.")
    profile = OmegaProfile(
        branch_variances=_as_list(variances),
        profiling_tokens=batch.n_source_tokens + batch.n_target_tokens,
        chain_layout={"encoder": 2 * model.config.n_enc_layers, "decoder": 3 * model.config.n_dec_layers},
    )
    for branch, variance in zip(model.branches, profile.branch_variances):
        logger.debug("가지 %d (%s) 분산 %s", branch.index, branch.prefix, variance)
    return profile


def compute_omega(variances):
    """
    한 체인의 분산 -> ω

    ω_1 = 1, ω_i = sqrt(Σ_{j<i} v_j) 이고 누적합이 0 이면 1 이다.
    특성별 분산([n, d])이면 특성마다 같은 규칙을 쓴다.
    """
    values = np.asarray(variances, dtype=np.float64)
    if values.size and np.any(values < 0):
        raise DataError("분산은 음수일 수 없습니다.")
    if not np.all(np.isfinite(values)):
        raise DataError("분산에 유한하지 않은 값이 있습니다.")
    if len(values) == 0:
        return []
    running = np.concatenate([np.zeros((1,) + values.shape[1:]), np.cumsum(values, axis=0)[:-1]])
    omegas = np.where(running > 0, np.sqrt(running), 1.0)
    omegas[0] = 1.0
    return omegas.tolist()


def compute_profile_omegas(profile):
    """체인별로 compute_omega 를 적용한 새 프로파일"""
    omegas = []
    for _, variances in profile.chains(profile.branch_variances):
        omegas.extend(compute_omega(variances))
    return replace(profile, omegas=omegas)


def check_profile(profile):
    """
    구성 검사: 길이, ω > 0, 체인 첫 ω = 1, ω_i² = 누적 분산합,
    누적합이 양수인 i ≥ 2 구간에서 ω 비감소.
    """
    if len(profile.branch_variances) != profile.n_branches or len(profile.omegas) != profile.n_branches:
        raise ProfilingError(
            f"프로파일 길이가 가지 수 {profile.n_branches} 와 다릅니다: "
            f"variances={len(profile.branch_variances)}, omegas={len(profile.omegas)}"
        )
    for (chain, variances), (_, omegas) in zip(
        profile.chains(profile.branch_variances), profile.chains(profile.omegas)
    ):
        variances = np.asarray(variances, dtype=np.float64)
        omegas = np.asarray(omegas, dtype=np.float64)
        if not np.all(omegas > 0) or not np.all(np.isfinite(omegas)):
            raise ProfilingError(f"{chain.value} 체인에 양의 유한값이 아닌 ω 가 있습니다.")
        if not np.all(omegas[0] == 1.0):
            raise ProfilingError(f"{chain.value} 체인의 첫 ω 가 1 이 아닙니다.")
        running = np.cumsum(variances, axis=0)[:-1]
        positive = running > 0
        expected = np.sqrt(np.where(positive, running, 1.0))
        deviation = np.abs(omegas[1:] - expected) / np.maximum(1.0, expected)
        if np.any(deviation[positive] > OMEGA_TOLERANCE) or np.any(omegas[1:][~positive] != 1.0):
            raise ProfilingError(f"{chain.value} 체인의 ω 가 누적 분산합과 맞지 않습니다.")
        tail, tail_mask = omegas[1:], positive
        later = tail_mask[1:] & tail_mask[:-1]
        if np.any((tail[1:] < tail[:-1] * (1 - OMEGA_TOLERANCE))[later]):
            raise ProfilingError(f"{chain.value} 체인의 ω 가 감소합니다.")
    return profile


def initialize_admin(model, batch, per_feature=False):
    """프로파일링 -> ω 계산 -> 검사 -> 모델에 ω 설정"""
    profile = check_profile(compute_profile_omegas(profile_variances(model, batch, per_feature)))
    model.set_omegas(profile.omegas, profile)
    logger.info(
        "ADMIN ω 설정: 가지 %d 개, 토큰 %d, 인코더 최대 ω %.4g, 디코더 최대 ω %.4g",
        profile.n_branches,
        profile.profiling_tokens,
        float(np.max(profile.chains(profile.omegas)[0][1])),
        float(np.max(profile.chains(profile.omegas)[1][1])),
    )
    return profile
