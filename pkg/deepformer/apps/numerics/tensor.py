# numerics/tensor.py
import contextlib
import logging

import numpy as np

from apps.exceptions import DimensionError, StaleTapeError, TapeError

__all__ = (
    "Tensor",
    "Parameter",
    "TapeNode",
    "Tape",
    "recording",
    "active_tape",
)

logger = logging.getLogger(__name__)

_tape_stack = []


def active_tape():
    return _tape_stack[-1] if _tape_stack else None


@contextlib.contextmanager
def recording():
    """
    역전파용 테이프를 열어 둔다.

    블록 안에서 requires_grad 입력을 받는 연산만 테이프에 기록되며,
    블록 밖의 연산(추론, 평가)은 기록 없이 바로 계산된다.
    """
    tape = Tape()
    _tape_stack.append(tape)
    try:
        yield tape
    finally:
        _tape_stack.pop()


class Tensor:
    """numpy 배열을 감싼 불변 텐서. 연산 결과는 항상 새 Tensor 이다."""

    __slots__ = ("data", "requires_grad", "node")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad=False, dtype=None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype.kind != "f":
            array = array.astype(np.float64)
        self.data = array
        self.requires_grad = requires_grad
        self.node = None

    def __repr__(self):
        return f"<Tensor shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}>"

    @property
    def shape(self):
        return tuple(self.data.shape)

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise DimensionError(f"스칼라가 아닌 텐서입니다: shape={self.shape}")
        return float(self.data.reshape(-1)[0])

    def backward(self):
        if self.node is None:
            raise TapeError("기록 중인 테이프에서 만들어진 텐서가 아닙니다.")
        self.node.tape.backward(self)

    # 연산자는 ops 모듈에 위임한다.

    def __add__(self, other):
        from apps.numerics import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from apps.numerics import ops

        return ops.add(other, self)

    def __sub__(self, other):
        from apps.numerics import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from apps.numerics import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from apps.numerics import ops

        return ops.mul(self, other)

    def __rmul__(self, other):
        from apps.numerics import ops

        return ops.mul(other, self)

    def __truediv__(self, other):
        from apps.numerics import ops

        return ops.div(self, other)

    def __neg__(self):
        from apps.numerics import ops

        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from apps.numerics import ops

        return ops.matmul(self, other)

    def reshape(self, *shape):
        from apps.numerics import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from apps.numerics import ops

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        from apps.numerics import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from apps.numerics import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def relu(self):
        from apps.numerics import ops

        return ops.relu(self)


class Parameter(Tensor):
    """
    학습 가능한 텐서

    name 은 enc.3.attn.wq 같은 계층형 이름이고, grad 는 누적 구간이 시작될 때
    zero_grad() 로 0 이 된다. 값은 옵티마이저만 스텝 사이에 바꾼다.
    """

    __slots__ = ("name", "grad")

    def __init__(self, data, name, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"<Parameter {self.name} shape={self.shape}, dtype={self.dtype}>"

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def assign(self, data):
        array = np.asarray(data, dtype=self.data.dtype)
        if array.shape != self.data.shape:
            raise DimensionError(
                f"{self.name}: 값의 shape {array.shape} 가 파라미터 shape {self.data.shape} 와 다릅니다."
            )
        self.data = array
        if self.grad.shape != array.shape:
            self.grad = np.zeros_like(array)


class TapeNode:
    __slots__ = ("tape", "index", "op", "inputs", "output", "backward_fn", "grad")

    def __init__(self, tape, index, op, inputs, output, backward_fn):
        self.tape = tape
        self.index = index
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.grad = None

    def __repr__(self):
        return f"<TapeNode #{self.index} {self.op} -> {self.output.shape}>"


class Tape:
    """
    위상 순서로 쌓이는 연산 기록

    backward 는 기록된 순서의 정확한 역순으로 노드를 방문하며, 한 번 쓰인
    테이프는 다시 쓸 수 없다 (forward 를 다시 해야 한다).
    """

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def __len__(self):
        return len(self.nodes)

    def record(self, op, inputs, output, backward_fn):
        if self.consumed:
            raise StaleTapeError("backward 가 끝난 테이프에는 더 기록할 수 없습니다.")
        node = TapeNode(self, len(self.nodes), op, tuple(inputs), output, backward_fn)
        self.nodes.append(node)
        output.node = node
        output.requires_grad = True
        return node

    def backward(self, loss):
        if self.consumed:
            raise StaleTapeError("이미 backward 를 수행한 테이프입니다. forward 를 다시 실행하세요.")
        if loss.data.size != 1:
            raise DimensionError(f"loss 는 스칼라여야 합니다: shape={loss.shape}")
        if loss.node is None or loss.node.tape is not self:
            raise TapeError("loss 가 이 테이프에 기록되지 않았습니다.")
        self.consumed = True

        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes[: loss.node.index + 1]):
            grad = grads.pop(id(node.output), None)
            if grad is None:
                continue
            node.grad = grad
            for tensor, input_grad in zip(node.inputs, node.backward_fn(grad)):
                if input_grad is None or not tensor.requires_grad:
                    continue
                if isinstance(tensor, Parameter):
                    tensor.grad += input_grad
                elif id(tensor) in grads:
                    grads[id(tensor)] = grads[id(tensor)] + input_grad
                else:
                    grads[id(tensor)] = input_grad
        logger.debug("backward 완료: 노드 %d 개", len(self.nodes))
