import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from src.autodiff.tensor import Tensor
from src.utils.errors import ContractError, ParameterError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Per-parameter moments and the shared step counter"""
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError(f"learning rate must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError(f"betas must be in [0, 1), got ({self.beta1}, {self.beta2})")

    def to_entries(self) -> Dict[str, np.ndarray]:
        """Checkpoint entries under the reserved opt/ names"""
        entries = {}
        for name in sorted(self.m):
            entries[f"opt/m/{name}"] = self.m[name]
            entries[f"opt/v/{name}"] = self.v[name]
        entries["opt/t"] = np.array([self.t], dtype=np.int64)
        return entries

    @classmethod
    def from_entries(cls, entries: Mapping[str, np.ndarray], lr: float, **kwargs) -> 'AdamState':
        state = cls(lr=lr, **kwargs)
        for key, value in entries.items():
            if key.startswith("opt/m/"):
                state.m[key[len("opt/m/"):]] = np.array(value)
            elif key.startswith("opt/v/"):
                state.v[key[len("opt/v/"):]] = np.array(value)
        if "opt/t" in entries:
            state.t = int(np.asarray(entries["opt/t"]).reshape(-1)[0])
        return state


def adam_step(params: Mapping[str, Tensor], state: AdamState) -> Dict[str, Tensor]:
    """
    One bias-corrected Adam update. Returns new parameter tensors; ``state`` is
    advanced in place (t increases by exactly 1).
    """
    for name, param in params.items():
        if param.grad is None:
            raise ContractError(f"adam_step: parameter '{name}' has no gradient")
        if param.grad.shape != param.shape:
            raise ContractError(f"adam_step: gradient of '{name}' has shape {param.grad.shape}, "
                                f"parameter has {param.shape}")

    state.t += 1
    bias1 = 1 - state.beta1 ** state.t
    bias2 = 1 - state.beta2 ** state.t

    updated: Dict[str, Tensor] = {}
    for name, param in params.items():
        grad = param.grad.astype(param.dtype, copy=False)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1 - state.beta1) * grad
        v = state.beta2 * v + (1 - state.beta2) * grad * grad
        state.m[name] = m.astype(param.dtype, copy=False)
        state.v[name] = v.astype(param.dtype, copy=False)

        m_hat = m / bias1
        v_hat = v / bias2
        new_data = param.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        updated[name] = Tensor(new_data.astype(param.dtype), requires_grad=param.requires_grad,
                               name=param.name, dtype=param.dtype)
    return updated
