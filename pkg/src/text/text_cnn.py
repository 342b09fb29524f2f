"""
Text branch: embedding -> three parallel conv1d/ReLU/max-pool branches -> concat ->
dense(1000)+batchnorm+ReLU+dropout -> dense(hidden)+ReLU+dropout -> dense(K).

``features`` mode returns the 1000-d layer (after ReLU, before dropout), which the
fusion model projects; ``logits`` mode runs the full stack.
"""
import logging
from typing import Any, Dict, Optional

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.models.params import ParamSet, he_normal
from src.text.vocabulary import EMBEDDING_DIM, PAD_INDEX, EmbeddingTable
from src.utils.errors import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)

FILTERS = (100, 150, 200)
WINDOWS = (2, 3, 4)
FEATURE_DIM = 1000
DEFAULT_HIDDEN = 500
DEFAULT_DROPOUT = 0.02


def pool_length(window: int, seq_len: int) -> int:
    """Pool length equals the window, shortened when the conv output is shorter"""
    return min(window, seq_len - window + 1)


def flat_width(seq_len: int) -> int:
    width = 0
    for filters, window in zip(FILTERS, WINDOWS):
        conv_len = seq_len - window + 1
        width += filters * (conv_len // pool_length(window, seq_len))
    return width


class TextCnnParams(ParamSet):
    def __init__(self, embedding: EmbeddingTable, max_len: int, num_classes: Optional[int],
                 hidden: int = DEFAULT_HIDDEN, dropout: float = DEFAULT_DROPOUT, seed: int = 0):
        super().__init__()
        if max_len < max(WINDOWS):
            raise ConfigurationError(f"text CNN needs sequences of at least {max(WINDOWS)} tokens, max_len={max_len}")
        self.max_len = max_len
        self.num_classes = num_classes
        self.hidden = hidden
        self.dropout = dropout
        rng = np.random.default_rng(seed)

        self.add("text/embedding", embedding.matrix.astype(np.float32), trainable=embedding.trainable)
        for filters, window in zip(FILTERS, WINDOWS):
            fan_in = window * EMBEDDING_DIM
            self.add(f"text/conv{window}/kernel", he_normal(rng, (filters, window, EMBEDDING_DIM), fan_in))
            self.add(f"text/conv{window}/bias", np.zeros(filters, dtype=np.float32))
        self.add_dense(rng, "text/fc1", flat_width(max_len), FEATURE_DIM)
        self.add_batchnorm("text/bn1", FEATURE_DIM)
        self.add_dense(rng, "text/fc2", FEATURE_DIM, hidden)
        if num_classes is not None:
            self.add_dense(rng, "text/out", hidden, num_classes)

        logger.debug(f"Text CNN: vocab {embedding.matrix.shape[0]}, max_len {max_len}, "
                     f"flatten {flat_width(max_len)}, {self.parameter_count()} parameters")

    @property
    def vocab_size(self) -> int:
        return self["text/embedding"].shape[0]

    def architecture(self) -> Dict[str, Any]:
        return {
            'vocab_size': self.vocab_size,
            'max_len': self.max_len,
            'num_classes': self.num_classes,
            'hidden': self.hidden,
            'dropout': self.dropout,
            'filters': list(FILTERS),
            'windows': list(WINDOWS),
        }


def text_cnn_forward(indices: np.ndarray, params: TextCnnParams, mode: str = 'logits',
                     training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
    indices = np.asarray(indices)
    if indices.ndim != 2 or indices.shape[1] != params.max_len:
        raise DimensionError("text_cnn_forward", f"expected index matrix [B, {params.max_len}]", indices.shape)
    if mode not in ('features', 'logits'):
        raise ValueError(f"mode must be 'features' or 'logits', got '{mode}'")
    if mode == 'logits' and params.num_classes is None:
        raise ConfigurationError("this text CNN was built without an output head")

    embedded = ops.embedding(indices, params["text/embedding"], padding_idx=PAD_INDEX)

    branches = []
    for window in WINDOWS:
        conv = ops.relu(ops.conv1d(embedded, params[f"text/conv{window}/kernel"], params[f"text/conv{window}/bias"]))
        pooled = ops.maxpool1d(conv, pool_length(window, params.max_len))
        branches.append(ops.flatten(pooled))
    merged = ops.concat(branches)

    hidden = ops.dense(merged, params["text/fc1/weight"], params["text/fc1/bias"])
    hidden = ops.batchnorm(hidden, params["text/bn1/gamma"], params["text/bn1/beta"],
                           params.buffers["text/bn1"], training)
    features = ops.relu(hidden)
    if mode == 'features':
        return features

    hidden = ops.dropout(features, params.dropout, training, rng)
    hidden = ops.relu(ops.dense(hidden, params["text/fc2/weight"], params["text/fc2/bias"]))
    hidden = ops.dropout(hidden, params.dropout, training, rng)
    return ops.dense(hidden, params["text/out/weight"], params["text/out/bias"])
