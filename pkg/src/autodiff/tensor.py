"""
Dense tensors and the reverse-mode differentiation tape.

A Tensor wraps a row-major numpy array. Ops record themselves on the thread's
active Tape when any input requires gradients; ``backward`` replays the tape in
reverse. Tensors are treated as immutable values: only ``grad`` changes after
creation.
"""
import threading
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import ContractError, NonFiniteError

logger = logging.getLogger(__name__)

_state = threading.local()

SUPPORTED_DTYPES = (np.float32, np.float64)


def default_dtype():
    return getattr(_state, 'dtype', np.float32)


@contextmanager
def precision(dtype):
    """Select the floating-point width of newly created tensors on this thread"""
    dtype = np.dtype(dtype).type
    if dtype not in SUPPORTED_DTYPES:
        raise ValueError(f"unsupported precision {dtype}; use float32 or float64")
    previous = default_dtype()
    _state.dtype = dtype
    try:
        yield
    finally:
        _state.dtype = previous


def _tape_stack() -> List['Tape']:
    stack = getattr(_state, 'tapes', None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def active_tape() -> Optional['Tape']:
    if getattr(_state, 'suspended', 0):
        return None
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad():
    """Run ops without recording them (inference, finite differences)"""
    _state.suspended = getattr(_state, 'suspended', 0) + 1
    try:
        yield
    finally:
        _state.suspended -= 1


@dataclass(frozen=True, eq=False)
class NodeRef:
    tape: 'Tape'
    node_id: int


class Tensor:
    """n-dimensional float array participating in a differentiation tape"""

    __slots__ = ('data', 'requires_grad', 'grad', 'node', 'name')

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        array = np.asarray(data, dtype=dtype or default_dtype())
        if array.ndim == 0:
            array = array.reshape(())
        self.data = np.ascontiguousarray(array)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[NodeRef] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        return Tensor(self.data, requires_grad=False, name=self.name, dtype=self.data.dtype)

    def astype(self, dtype) -> 'Tensor':
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name, dtype=dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Record:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule


@dataclass(eq=False)
class Tape:
    """Ordered list of recorded operations; inputs always precede their consumers"""
    records: List[Record] = field(default_factory=list)

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardRule):
        output.node = NodeRef(self, len(self.records))
        self.records.append(Record(op, tuple(inputs), output, backward))

    def leaves(self) -> List[Tensor]:
        seen = set()
        leaves = []
        for record in self.records:
            for tensor in record.inputs:
                is_leaf = tensor.node is None or tensor.node.tape is not self
                if tensor.requires_grad and is_leaf and id(tensor) not in seen:
                    seen.add(id(tensor))
                    leaves.append(tensor)
        return leaves


def make_result(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardRule) -> Tensor:
    """
    Wrap an op's forward value, check finiteness, and record it on the active tape
    when any input requires gradients.
    """
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    needs_grad = any(t.requires_grad for t in inputs)
    tape = active_tape() if needs_grad else None
    out = Tensor(data, requires_grad=tape is not None, dtype=data.dtype)
    if tape is not None:
        tape.record(op, inputs, out, backward)
    return out


def backward(loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> None:
    """
    Reverse-mode accumulation from a scalar loss.

    Every requires_grad leaf reached gets ``grad`` accumulated; leaves recorded on the
    tape but not on the path to the loss, and any extra ``params`` given, receive zero
    gradients.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        raise ContractError("loss was not produced on an active tape")

    tape = loss.node.tape
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for index in range(loss.node.node_id, -1, -1):
        record = tape.records[index]
        upstream = grads.pop(id(record.output), None)
        if upstream is None:
            continue
        input_grads = record.backward(upstream)
        for tensor, grad in zip(record.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            if grad.shape != tensor.shape:
                raise ContractError(
                    f"backward rule of '{record.op}' returned gradient of shape {grad.shape} "
                    f"for input of shape {tensor.shape}"
                )
            if tensor.node is None or tensor.node.tape is not tape:
                tensor.grad = grad if tensor.grad is None else tensor.grad + grad
                continue
            key = id(tensor)
            grads[key] = grads[key] + grad if key in grads else grad

    for leaf in list(tape.leaves()) + list(params or []):
        if leaf.requires_grad and leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
