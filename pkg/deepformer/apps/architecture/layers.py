# architecture/layers.py
"""
Transformer 구성 요소

파라미터는 이름 -> Parameter 매핑으로 받는다. 어텐션은 wq/bq/wk/bk/wv/bv/wo/bo,
feed-forward 는 w1/b1/w2/b2 를 쓰며 선형층 가중치는 [in, out] 이다.
"""

import math

import numpy as np

from apps.architecture.config import BlockMode
from apps.exceptions import AttentionMaskError, ConfigurationError
from apps.numerics import ops

__all__ = (
    "sinusoid_table",
    "causal_mask",
    "linear",
    "multi_head_attention",
    "feed_forward",
    "block_forward",
)


def sinusoid_table(max_len, d_model):
    """
    고정 sinusoidal 위치 인코딩 [max_len, d_model]

    짝수 열 2k 는 sin(t / 10000^(2k/d)), 홀수 열 2k+1 은 같은 주파수의 cos 이다.
    """
    positions = np.arange(max_len, dtype=np.float64)[:, None]
    rates = np.power(10000.0, -np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    table = np.zeros((max_len, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: d_model // 2])
    return table


def causal_mask(length):
    return np.tril(np.ones((length, length), dtype=bool))


def linear(x, weight, bias):
    return ops.add(ops.matmul(x, weight), bias)


def _split_heads(x, n_heads):
    batch, length, d_model = x.shape
    return ops.transpose(ops.reshape(x, (batch, length, n_heads, d_model // n_heads)), (0, 2, 1, 3))


def _attention_mask(mask, batch, lq, lk):
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 2:
        mask = mask[None]
    mask = np.broadcast_to(mask, (batch, lq, lk))
    if not mask.any(axis=-1).all():
        raise AttentionMaskError("어텐션 가능한 key 가 하나도 없는 query 행이 있습니다.")
    return mask[:, None]


def multi_head_attention(query, key, value, proj, n_heads, mask=None, return_weights=False):
    """
    scaled dot-product 다중 헤드 어텐션

    query [B, Lq, d], key/value [B, Lk, d] (배치 축 없이 [L, d] 도 받는다).
    mask 는 [Lq, Lk] 또는 [B, Lq, Lk] 로 브로드캐스트되는 bool 이며 True 가 허용이다.
    """
    unbatched = query.ndim == 2
    if unbatched:
        query, key, value = (ops.reshape(t, (1,) + t.shape) for t in (query, key, value))
    batch, lq, d_model = query.shape
    lk = key.shape[1]
    d_head = d_model // n_heads

    q = _split_heads(linear(query, proj["wq"], proj["bq"]), n_heads)
    k = _split_heads(linear(key, proj["wk"], proj["bk"]), n_heads)
    v = _split_heads(linear(value, proj["wv"], proj["bv"]), n_heads)

    scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d_head))
    if mask is not None:
        scores = ops.masked_fill(scores, _attention_mask(mask, batch, lq, lk))
    weights = ops.softmax(scores, axis=-1)

    context = ops.reshape(ops.transpose(ops.matmul(weights, v), (0, 2, 1, 3)), (batch, lq, d_model))
    out = linear(context, proj["wo"], proj["bo"])
    if unbatched:
        out = ops.reshape(out, (lq, d_model))
        weights = ops.reshape(weights, weights.shape[1:])
    return (out, weights) if return_weights else out


def feed_forward(x, proj):
    return linear(ops.relu(linear(x, proj["w1"], proj["b1"])), proj["w2"], proj["b2"])


def block_forward(
    x, branch_fn, mode, gain, bias, eps, omega=None, dropout=0.0, rng=None, on_output=None
):
    """
    잔차 블록 하나

    postln: LN(x + f(x)), preln: x + f(LN(x)), admin: LN(x⊙ω + f(x)).
    on_output 은 dropout 전 가지 출력 f(.) 을 받는다 (분산 프로파일링용).
    """
    mode = BlockMode(mode)
    if mode is BlockMode.PRELN:
        branch_out = branch_fn(ops.layer_norm(x, gain, bias, eps))
        if on_output is not None:
            on_output(branch_out)
        return ops.add(x, ops.dropout(branch_out, dropout, rng))

    skip = x
    if mode is BlockMode.ADMIN:
        if omega is None:
            raise ConfigurationError("admin 블록에는 ω 가 필요합니다.")
        omega = np.asarray(omega, dtype=x.dtype)
        if not np.all(omega > 0):
            raise ConfigurationError("ω 는 모두 양수여야 합니다.")
        skip = ops.mul(x, omega)
    branch_out = branch_fn(x)
    if on_output is not None:
        on_output(branch_out)
    return ops.layer_norm(ops.add(skip, ops.dropout(branch_out, dropout, rng)), gain, bias, eps)
