"""
Named parameter collections shared by the text, image and fusion networks.

Tensor names are slash-separated (``text/fc1/weight``) and double as checkpoint
entry names. Batch-norm running statistics are kept as non-trainable buffers and
saved as ``<layer>/running_mean`` / ``<layer>/running_var``.
"""
import copy
import logging
from typing import Dict, Iterable, Mapping, Optional, Set

import numpy as np

from src.autodiff.ops import BatchNormState
from src.autodiff.tensor import Tensor
from src.utils.errors import IncompatibilityError

logger = logging.getLogger(__name__)


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


class ParamSet:
    """Ordered name -> Tensor map plus batch-norm buffers and a frozen set"""

    def __init__(self):
        self.tensors: Dict[str, Tensor] = {}
        self.buffers: Dict[str, BatchNormState] = {}
        self.frozen: Set[str] = set()

    # -- construction -----------------------------------------------------
    def add(self, name: str, data: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self.tensors:
            raise ValueError(f"duplicate parameter name '{name}'")
        tensor = Tensor(data, requires_grad=True, name=name, dtype=np.asarray(data).dtype)
        self.tensors[name] = tensor
        if not trainable:
            self.frozen.add(name)
        return tensor

    def add_dense(self, rng: np.random.Generator, prefix: str, fan_in: int, fan_out: int):
        self.add(f"{prefix}/weight", he_normal(rng, (fan_in, fan_out), fan_in))
        self.add(f"{prefix}/bias", np.zeros(fan_out, dtype=np.float32))

    def add_batchnorm(self, prefix: str, features: int):
        self.add(f"{prefix}/gamma", np.ones(features, dtype=np.float32))
        self.add(f"{prefix}/beta", np.zeros(features, dtype=np.float32))
        self.buffers[prefix] = BatchNormState.fresh(features)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    # -- views ------------------------------------------------------------
    def trainable(self) -> Dict[str, Tensor]:
        return {name: t for name, t in self.tensors.items() if name not in self.frozen}

    def freeze(self, prefix: str):
        for name in self.tensors:
            if name.startswith(prefix):
                self.frozen.add(name)

    def remove(self, prefix: str) -> int:
        doomed = [name for name in self.tensors if name.startswith(prefix)]
        for name in doomed:
            del self.tensors[name]
            self.frozen.discard(name)
        return len(doomed)

    def replace(self, updated: Mapping[str, Tensor]):
        for name, tensor in updated.items():
            if name not in self.tensors:
                raise KeyError(f"unknown parameter '{name}'")
            self.tensors[name] = tensor

    def with_tensors(self, overrides: Mapping[str, Tensor]) -> 'ParamSet':
        """Shallow copy with some tensors substituted (gradient checks, ablations)"""
        clone = copy.copy(self)
        clone.tensors = dict(self.tensors)
        clone.tensors.update(overrides)
        clone.buffers = {name: BatchNormState(s.running_mean.copy(), s.running_var.copy())
                         for name, s in self.buffers.items()}
        return clone

    def zero_grad(self):
        for tensor in self.tensors.values():
            tensor.grad = None

    def parameter_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    # -- persistence ------------------------------------------------------
    def state_entries(self) -> Dict[str, np.ndarray]:
        entries = {name: t.data for name, t in self.tensors.items()}
        for prefix, state in self.buffers.items():
            entries[f"{prefix}/running_mean"] = state.running_mean
            entries[f"{prefix}/running_var"] = state.running_var
        return entries

    def load_entries(self, entries: Mapping[str, np.ndarray], strict: bool = True,
                     names: Optional[Iterable[str]] = None) -> Set[str]:
        """
        Copy matching entries in; shape mismatches always raise. With ``strict`` every
        tensor and buffer of this set must be present. Returns the names loaded.
        """
        wanted = list(names) if names is not None else list(self.tensors)
        loaded: Set[str] = set()
        for name in wanted:
            if name not in entries:
                if strict:
                    raise IncompatibilityError("checkpoint is missing a tensor", tensor=name)
                continue
            current = self.tensors[name]
            value = np.asarray(entries[name])
            if value.shape != current.shape:
                raise IncompatibilityError(
                    f"shape {value.shape} in checkpoint, model expects {current.shape}", tensor=name)
            self.tensors[name] = Tensor(value.astype(current.dtype), requires_grad=True,
                                        name=name, dtype=current.dtype)
            loaded.add(name)

        for prefix, state in self.buffers.items():
            if names is not None and not any(n.startswith(prefix + '/') for n in wanted):
                continue
            mean_key, var_key = f"{prefix}/running_mean", f"{prefix}/running_var"
            if mean_key in entries and var_key in entries:
                if np.shape(entries[mean_key]) != state.running_mean.shape:
                    raise IncompatibilityError("batch-norm statistics width differs", tensor=mean_key)
                state.running_mean = np.array(entries[mean_key], dtype=state.running_mean.dtype)
                state.running_var = np.array(entries[var_key], dtype=state.running_var.dtype)
                loaded.update((mean_key, var_key))
            elif strict:
                raise IncompatibilityError("checkpoint is missing batch-norm statistics", tensor=mean_key)
        return loaded
