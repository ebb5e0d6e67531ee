# numerics/ops.py
"""
미분 가능한 연산 모음

각 연산은 numpy 로 forward 를 계산하고, 활성 테이프가 있으면 backward 클로저를
기록한다. 브로드캐스팅은 뒤쪽 축 정렬(numpy 규칙)만 사용하고, backward 에서
브로드캐스트된 축은 합산해 입력 shape 로 되돌린다.
"""

import numpy as np

from apps.exceptions import ConfigurationError, DataError, DimensionError, TokenIndexError
from apps.numerics.tensor import Tensor, active_tape

__all__ = (
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "reshape",
    "transpose",
    "sum",
    "mean",
    "relu",
    "softmax",
    "log_softmax",
    "masked_fill",
    "layer_norm",
    "dropout",
    "embedding",
    "cross_entropy_ls",
)


def _as_tensor(value, like=None):
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(op, inputs, data, backward_fn):
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op, inputs, out, backward_fn)
    return out


def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def backward(grad):
        return (
            _unbroadcast(grad, a.shape) if a.requires_grad else None,
            _unbroadcast(grad, b.shape) if b.requires_grad else None,
        )

    return _result("add", (a, b), a.data + b.data, backward)


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def backward(grad):
        return (
            _unbroadcast(grad, a.shape) if a.requires_grad else None,
            _unbroadcast(-grad, b.shape) if b.requires_grad else None,
        )

    return _result("sub", (a, b), a.data - b.data, backward)


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def backward(grad):
        return (
            _unbroadcast(grad * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(grad * a.data, b.shape) if b.requires_grad else None,
        )

    return _result("mul", (a, b), a.data * b.data, backward)


def div(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def backward(grad):
        return (
            _unbroadcast(grad / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-grad * a.data / (b.data * b.data), b.shape) if b.requires_grad else None,
        )

    return _result("div", (a, b), a.data / b.data, backward)


def matmul(a, b):
    """(.., p, q) x (.., q, r) -> (.., p, r). 배치 축은 앞쪽에서만 브로드캐스트된다."""
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul 차원 불일치: {a.shape} x {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul 배치 차원 불일치: {a.shape} x {b.shape}") from exc

    def backward(grad):
        grad_a = grad_b = None
        if a.requires_grad:
            grad_a = _unbroadcast(np.matmul(grad, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            grad_b = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), grad), b.shape)
        return grad_a, grad_b

    return _result("matmul", (a, b), data, backward)


def reshape(x, shape):
    x = _as_tensor(x)

    def backward(grad):
        return (grad.reshape(x.shape),)

    return _result("reshape", (x,), x.data.reshape(shape), backward)


def transpose(x, axes=None):
    x = _as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(grad):
        return (grad.transpose(inverse),)

    return _result("transpose", (x,), x.data.transpose(axes), backward)


def _expand_reduced(grad, shape, axis, keepdims):
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        for a in sorted(axes):
            grad = np.expand_dims(grad, a)
    return np.broadcast_to(grad, shape)


def sum(x, axis=None, keepdims=False):
    x = _as_tensor(x)

    def backward(grad):
        return (np.array(_expand_reduced(grad, x.shape, axis, keepdims)),)

    return _result("sum", (x,), x.data.sum(axis=axis, keepdims=keepdims), backward)


def mean(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    data = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size // max(np.asarray(data).size, 1)

    def backward(grad):
        return (np.array(_expand_reduced(grad, x.shape, axis, keepdims)) / count,)

    return _result("mean", (x,), data, backward)


def relu(x):
    x = _as_tensor(x)
    active = x.data > 0

    def backward(grad):
        return (grad * active,)

    return _result("relu", (x,), np.where(active, x.data, 0).astype(x.dtype), backward)


def softmax(x, axis=-1):
    """최댓값을 빼고 계산하므로 큰 입력에서도 overflow 가 나지 않는다."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=axis, keepdims=True)

    def backward(grad):
        return (probs * (grad - (grad * probs).sum(axis=axis, keepdims=True)),)

    return _result("softmax", (x,), probs, backward)


def _log_softmax_data(data, axis):
    peak = data.max(axis=axis, keepdims=True)
    shifted = data - peak
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def log_softmax(x, axis=-1):
    x = _as_tensor(x)
    logp = _log_softmax_data(x.data, axis)
    probs = np.exp(logp)

    def backward(grad):
        return (grad - probs * grad.sum(axis=axis, keepdims=True),)

    return _result("log_softmax", (x,), logp, backward)


def masked_fill(x, mask, value=-np.inf):
    """mask 가 True 인 위치는 유지하고 나머지를 value 로 채운다."""
    x = _as_tensor(x)
    keep = np.asarray(mask, dtype=bool)
    data = np.where(keep, x.data, np.asarray(value, dtype=x.dtype)).astype(x.dtype)

    def backward(grad):
        return (_unbroadcast(grad * keep, x.shape),)

    return _result("masked_fill", (x,), data, backward)


def layer_norm(x, gain, bias, eps=1e-5):
    """
    마지막 축 기준 layer normalization

    모분산(biased variance)을 쓰고 eps 는 제곱근 안에 더한다.
    """
    x = _as_tensor(x)
    gain = _as_tensor(gain, x)
    bias = _as_tensor(bias, x)
    if eps < 0:
        raise ConfigurationError(f"layer_norm eps 는 음수일 수 없습니다: {eps}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm 차원 불일치: x={x.shape}, gain={gain.shape}, bias={bias.shape}")

    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(variance + eps)
    normed = centered * rstd

    def backward(grad):
        grad_x = grad_gain = grad_bias = None
        if x.requires_grad:
            dnormed = grad * gain.data
            grad_x = rstd * (
                dnormed
                - dnormed.mean(axis=-1, keepdims=True)
                - normed * (dnormed * normed).mean(axis=-1, keepdims=True)
            )
        if gain.requires_grad:
            grad_gain = (grad * normed).reshape(-1, d).sum(axis=0)
        if bias.requires_grad:
            grad_bias = grad.reshape(-1, d).sum(axis=0)
        return grad_x, grad_gain, grad_bias

    return _result("layer_norm", (x, gain, bias), normed * gain.data + bias.data, backward)


def dropout(x, rate, rng):
    """rate == 0 이거나 rng 가 없으면 입력을 그대로 돌려준다 (검증 모드, 프로파일링)."""
    x = _as_tensor(x)
    if rate <= 0.0 or rng is None:
        return x
    if rate >= 1.0:
        raise ConfigurationError(f"dropout 비율은 1 보다 작아야 합니다: {rate}")
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) * scale

    def backward(grad):
        return (grad * keep,)

    return _result("dropout", (x,), x.data * keep, backward)


def embedding(table, ids):
    ids = np.asarray(ids, dtype=np.int64)
    vocab_size = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise TokenIndexError(f"토큰 id 가 어휘 범위 [0, {vocab_size}) 를 벗어났습니다: max={ids.max()}")

    def backward(grad):
        grad_table = np.zeros_like(table.data)
        np.add.at(grad_table, ids, grad)
        return (grad_table,)

    return _result("embedding", (table,), table.data[ids], backward)


def cross_entropy_ls(logits, targets, smoothing=0.0, pad_id=0, reduction="mean"):
    """
    label smoothing 이 들어간 cross entropy

    토큰별 손실은 (1 - smoothing) * NLL(target) + smoothing * (어휘 전체 평균 NLL) 이고,
    pad 위치는 평균에서 제외한다. reduction="sum" 이면 합계를 돌려준다.
    """
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    vocab_size = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise DimensionError(f"targets shape {targets.shape} 가 logits {logits.shape} 와 맞지 않습니다.")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab_size):
        raise TokenIndexError(f"target id 가 어휘 범위 [0, {vocab_size}) 를 벗어났습니다: max={targets.max()}")
    mask = targets != pad_id
    n_tokens = int(mask.sum())
    if n_tokens == 0:
        raise DataError("pad 가 아닌 target 토큰이 없습니다.")

    logp = _log_softmax_data(logits.data, -1)
    nll = -np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    per_token = (1.0 - smoothing) * nll
    if smoothing:
        per_token = per_token - smoothing * logp.mean(axis=-1)
    denominator = n_tokens if reduction == "mean" else 1
    loss = np.asarray((per_token * mask).sum() / denominator, dtype=logits.dtype)

    def backward(grad):
        target_dist = np.full(logits.shape, smoothing / vocab_size, dtype=logits.dtype)
        np.put_along_axis(
            target_dist,
            targets[..., None],
            np.take_along_axis(target_dist, targets[..., None], axis=-1) + (1.0 - smoothing),
            axis=-1,
        )
        grad_logits = (np.exp(logp) - target_dist) * mask[..., None] * (grad / denominator)
        return (grad_logits.astype(logits.dtype),)

    return _result("cross_entropy_ls", (logits,), loss, backward)
