"""
Differentiable ops over Tensor.

Every op validates its shape algebra (no implicit broadcasting), computes the
forward value with numpy and records a backward rule. Backward rules live in
module-level ``_<op>_backward`` functions that are looked up at call time.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.autodiff.tensor import Tensor, make_result
from src.utils.errors import (
    BatchTooSmallError,
    DimensionError,
    EmptyOutputError,
    LabelError,
    ParameterError,
    SequenceTooShortError,
)

logger = logging.getLogger(__name__)


def _expect_rank(op: str, name: str, tensor: Tensor, rank: int):
    if tensor.data.ndim != rank:
        raise DimensionError(op, f"'{name}' must have rank {rank}", tensor.shape)


# ---------------------------------------------------------------------------
# Elementwise / structural helpers
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError("add", "operands must have identical shapes", a.shape, b.shape)
    return make_result("add", a.data + b.data, [a, b], lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError("mul", "operands must have identical shapes", a.shape, b.shape)
    return make_result("mul", a.data * b.data, [a, b], lambda g: (g * b.data, g * a.data))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return make_result("sum", out, [x], lambda g: (np.full_like(x.data, g),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", f"cannot reshape to {shape}", x.shape) from None
    return make_result("reshape", out, [x], lambda g: (g.reshape(x.shape),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def embedding(indices: np.ndarray, table: Tensor, padding_idx: int = 0) -> Tensor:
    """Row gather [B,L] -> [B,L,D]; padding positions read as zeros and never receive gradient"""
    indices = np.asarray(indices)
    _expect_rank("embedding", "table", table, 2)
    if not np.issubdtype(indices.dtype, np.integer):
        raise DimensionError("embedding", "indices must be integers", indices.shape)
    vocab = table.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= vocab):
        bad = int(indices[(indices < 0) | (indices >= vocab)].reshape(-1)[0])
        raise LabelError(f"embedding: token index outside vocabulary of size {vocab}", index=bad)
    out = table.data[indices]
    if padding_idx is not None:
        out[indices == padding_idx] = 0
    return make_result("embedding", out, [table],
                       lambda g: (_embedding_backward(indices, table.data, g, padding_idx),))


def _embedding_backward(indices, table, g, padding_idx):
    grad = np.zeros_like(table)
    np.add.at(grad, indices.reshape(-1), g.reshape(-1, table.shape[1]))
    if padding_idx is not None:
        grad[padding_idx] = 0
    return grad


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Feature-axis concatenation of [B,D_i] tensors in argument order"""
    parts = list(parts)
    if not parts:
        raise DimensionError("concat", "needs at least one tensor")
    for part in parts:
        _expect_rank("concat", "part", part, 2)
    batch = parts[0].shape[0]
    if any(p.shape[0] != batch for p in parts):
        raise DimensionError("concat", "batch dimensions differ", *[p.shape for p in parts])
    widths = [p.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)
    return make_result("concat", out, parts, lambda g: _concat_backward(widths, g))


def _concat_backward(widths, g):
    bounds = np.cumsum(widths)[:-1]
    return tuple(np.split(g, bounds, axis=1))


def slice_features(x: Tensor, start: int, stop: int) -> Tensor:
    _expect_rank("slice_features", "x", x, 2)
    if not 0 <= start < stop <= x.shape[1]:
        raise DimensionError("slice_features", f"invalid feature range [{start}, {stop})", x.shape)
    out = x.data[:, start:stop]
    return make_result("slice_features", out, [x], lambda g: (_slice_backward(x.data, start, stop, g),))


def _slice_backward(x, start, stop, g):
    grad = np.zeros_like(x)
    grad[:, start:stop] = g
    return grad


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

def dense(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """out[n,o] = sum_i x[n,i] * W[i,o] + b[o]"""
    _expect_rank("dense", "x", x, 2)
    _expect_rank("dense", "W", W, 2)
    _expect_rank("dense", "b", b, 1)
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise DimensionError("dense", "inner dimensions disagree", x.shape, W.shape, b.shape)
    out = x.data @ W.data + b.data
    return make_result("dense", out, [x, W, b], lambda g: _dense_backward(x.data, W.data, g))


def _dense_backward(x, W, g):
    return g @ W.T, x.T @ g, g.sum(axis=0)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid (no padding) 1-D convolution: [B,L,D] * [F,W,D] -> [B,L-W+1,F]"""
    _expect_rank("conv1d", "x", x, 3)
    _expect_rank("conv1d", "kernels", kernels, 3)
    _expect_rank("conv1d", "bias", bias, 1)
    batch, length, depth = x.shape
    filters, window, kernel_depth = kernels.shape
    if kernel_depth != depth or bias.shape[0] != filters:
        raise DimensionError("conv1d", "kernel depth or bias width disagrees with input",
                             x.shape, kernels.shape, bias.shape)
    if length < window:
        raise SequenceTooShortError(length, window)
    out_len = length - window + 1
    cols = _conv1d_columns(x.data, window)
    kmat = kernels.data.reshape(filters, window * depth)
    out = (cols @ kmat.T).reshape(batch, out_len, filters) + bias.data
    return make_result("conv1d", out, [x, kernels, bias],
                       lambda g: _conv1d_backward(x.data, kernels.data, g))


def _conv1d_columns(x, window):
    batch, length, depth = x.shape
    out_len = length - window + 1
    # [B, Lo, D, W] -> [B, Lo, W, D]
    windows = sliding_window_view(x, window, axis=1).transpose(0, 1, 3, 2)
    return windows.reshape(batch * out_len, window * depth)


def _conv1d_backward(x, kernels, g):
    batch, length, depth = x.shape
    filters, window, _ = kernels.shape
    out_len = length - window + 1
    g2 = g.reshape(batch * out_len, filters)
    cols = _conv1d_columns(x, window)
    kmat = kernels.reshape(filters, window * depth)
    d_kernels = (g2.T @ cols).reshape(filters, window, depth)
    d_bias = g.sum(axis=(0, 1))
    d_cols = (g2 @ kmat).reshape(batch, out_len, window, depth)
    d_x = np.zeros_like(x)
    for w in range(window):
        d_x[:, w:w + out_len, :] += d_cols[:, :, w, :]
    return d_x, d_kernels, d_bias


def maxpool1d(x: Tensor, pool_len: int) -> Tensor:
    """Non-overlapping max pooling over the sequence axis; trailing remainder dropped"""
    _expect_rank("maxpool1d", "x", x, 3)
    if pool_len < 1:
        raise ParameterError(f"maxpool1d: pool_len must be >= 1, got {pool_len}")
    batch, length, features = x.shape
    if pool_len > length:
        raise EmptyOutputError("maxpool1d", length, pool_len)
    out_len = length // pool_len
    blocks = x.data[:, :out_len * pool_len, :].reshape(batch, out_len, pool_len, features)
    argmax = blocks.argmax(axis=2)
    out = np.take_along_axis(blocks, argmax[:, :, None, :], axis=2)[:, :, 0, :]
    return make_result("maxpool1d", out, [x],
                       lambda g: (_maxpool1d_backward(x.data, argmax, pool_len, g),))


def _maxpool1d_backward(x, argmax, pool_len, g):
    batch, length, features = x.shape
    out_len = argmax.shape[1]
    blocks = np.zeros((batch, out_len, pool_len, features), dtype=x.dtype)
    np.put_along_axis(blocks, argmax[:, :, None, :], g[:, :, None, :], axis=2)
    grad = np.zeros_like(x)
    grad[:, :out_len * pool_len, :] = blocks.reshape(batch, out_len * pool_len, features)
    return grad


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, padding: int = 1) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1: [B,C,H,W] -> [B,F,H,W]"""
    _expect_rank("conv2d", "x", x, 4)
    _expect_rank("conv2d", "kernels", kernels, 4)
    _expect_rank("conv2d", "bias", bias, 1)
    if padding != 1 or kernels.shape[2:] != (3, 3):
        raise DimensionError("conv2d", "only 3x3 kernels with padding 1 are supported", kernels.shape)
    batch, channels, height, width = x.shape
    filters = kernels.shape[0]
    if kernels.shape[1] != channels:
        raise DimensionError("conv2d", "kernel channels disagree with input channels", x.shape, kernels.shape)
    if bias.shape[0] != filters:
        raise DimensionError("conv2d", "bias width disagrees with filter count", kernels.shape, bias.shape)
    cols = _conv2d_columns(x.data)
    kmat = kernels.data.reshape(filters, channels * 9)
    out = (cols @ kmat.T).reshape(batch, height, width, filters).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out) + bias.data[None, :, None, None]
    return make_result("conv2d", out, [x, kernels, bias],
                       lambda g: _conv2d_backward(x.data, kernels.data, g))


def _conv2d_columns(x):
    batch, channels, height, width = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    # [B, C, H, W, 3, 3] -> [B, H, W, C, 3, 3]
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5)
    return windows.reshape(batch * height * width, channels * 9)


def _conv2d_backward(x, kernels, g):
    batch, channels, height, width = x.shape
    filters = kernels.shape[0]
    g2 = g.transpose(0, 2, 3, 1).reshape(batch * height * width, filters)
    cols = _conv2d_columns(x)
    kmat = kernels.reshape(filters, channels * 9)
    d_kernels = (g2.T @ cols).reshape(kernels.shape)
    d_bias = g.sum(axis=(0, 2, 3))
    d_cols = (g2 @ kmat).reshape(batch, height, width, channels, 3, 3)
    d_padded = np.zeros((batch, channels, height + 2, width + 2), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            d_padded[:, :, i:i + height, j:j + width] += d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return d_padded[:, :, 1:-1, 1:-1], d_kernels, d_bias


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 / stride 2 max pooling; ties go to the first element in row-major order"""
    _expect_rank("maxpool2d", "x", x, 4)
    batch, channels, height, width = x.shape
    if height % 2 or width % 2:
        raise DimensionError("maxpool2d", "height and width must be even", x.shape)
    windows = _pool_windows(x.data)
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return make_result("maxpool2d", out, [x], lambda g: (_maxpool2d_backward(x.data, argmax, g),))


def _pool_windows(x):
    batch, channels, height, width = x.shape
    return (x.reshape(batch, channels, height // 2, 2, width // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, height // 2, width // 2, 4))


def _maxpool2d_backward(x, argmax, g):
    batch, channels, height, width = x.shape
    windows = np.zeros(argmax.shape + (4,), dtype=x.dtype)
    np.put_along_axis(windows, argmax[..., None], g[..., None], axis=-1)
    return (windows.reshape(batch, channels, height // 2, width // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, height, width))


def relu(x: Tensor) -> Tensor:
    out = np.where(x.data > 0, x.data, 0).astype(x.dtype)
    return make_result("relu", out, [x], lambda g: (_relu_backward(x.data, g),))


def _relu_backward(x, g):
    # subgradient at exactly 0 is 0
    return g * (x > 0)


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity at inference and at rate 0"""
    if not 0 <= rate < 1:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    if rng is None:
        raise ParameterError("dropout in training mode needs a seeded random generator")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1 - rate)
    return make_result("dropout", x.data * mask, [x], lambda g: (g * mask,))


@dataclass
class BatchNormState:
    """Running statistics of one batch-norm layer"""
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, features: int, dtype=np.float32) -> 'BatchNormState':
        return cls(np.zeros(features, dtype=dtype), np.ones(features, dtype=dtype))


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool,
              eps: float = 1e-5, momentum: float = 0.1) -> Tensor:
    """Batch normalization over the batch axis with population variance"""
    _expect_rank("batchnorm", "x", x, 2)
    batch, features = x.shape
    if gamma.shape != (features,) or beta.shape != (features,):
        raise DimensionError("batchnorm", "gamma/beta width disagrees with features",
                             x.shape, gamma.shape, beta.shape)
    if state.running_mean.shape != (features,):
        raise DimensionError("batchnorm", "running statistics width disagrees with features",
                             x.shape, state.running_mean.shape)

    if training:
        if batch < 2:
            raise BatchTooSmallError(batch)
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        state.running_mean = ((1 - momentum) * state.running_mean + momentum * mean).astype(state.running_mean.dtype)
        state.running_var = ((1 - momentum) * state.running_var + momentum * var).astype(state.running_var.dtype)
    else:
        mean = state.running_mean.astype(x.dtype)
        var = state.running_var.astype(x.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mean) * inv_std
    out = (gamma.data * x_hat + beta.data).astype(x.dtype)
    return make_result("batchnorm", out, [x, gamma, beta],
                       lambda g: _batchnorm_backward(x_hat, inv_std, gamma.data, g, training))


def _batchnorm_backward(x_hat, inv_std, gamma, g, training):
    d_gamma = (g * x_hat).sum(axis=0)
    d_beta = g.sum(axis=0)
    d_xhat = g * gamma
    if training:
        n = x_hat.shape[0]
        d_x = (inv_std / n) * (n * d_xhat - d_xhat.sum(axis=0) - x_hat * (d_xhat * x_hat).sum(axis=0))
    else:
        d_x = d_xhat * inv_std
    return d_x.astype(x_hat.dtype), d_gamma, d_beta


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> Tuple[Tensor, Tensor]:
    """Mean negative log-likelihood over the batch, plus the softmax probabilities"""
    _expect_rank("softmax_cross_entropy", "logits", logits, 2)
    labels = np.asarray(labels)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise DimensionError("softmax_cross_entropy", "need one label per row", logits.shape, labels.shape)
    bad = np.flatnonzero((labels < 0) | (labels >= classes))
    if bad.size:
        raise LabelError(f"label {int(labels[bad[0]])} outside [0, {classes})", index=int(bad[0]))
    labels = labels.astype(np.int64)

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    probs = np.exp(log_probs)
    loss_value = np.asarray(-log_probs[np.arange(batch), labels].mean(), dtype=logits.dtype)
    loss = make_result("softmax_cross_entropy", loss_value, [logits],
                       lambda g: (_cross_entropy_backward(probs, labels, g),))
    return loss, Tensor(probs, dtype=logits.dtype)


def _cross_entropy_backward(probs, labels, g):
    batch = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(batch), labels] -= 1
    return (grad * (g / batch)).astype(probs.dtype)
