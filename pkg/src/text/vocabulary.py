"""
Vocabulary, embedding table and index encoding for the text branch.

Index 0 is padding (zero row, never updated) and index 1 is out-of-vocabulary.
The embedding file is plain text: a ``V 300`` header, then one token followed by
300 decimals per line.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.errors import ConfigurationError, FormatError

logger = logging.getLogger(__name__)

PAD_TOKEN = '<pad>'
OOV_TOKEN = '<unk>'
PAD_INDEX = 0
OOV_INDEX = 1
EMBEDDING_DIM = 300
INIT_RANGE = 0.25
MIN_SEQUENCE_LENGTH = 2  # smallest convolution window


@dataclass
class Vocabulary:
    """token -> index map with reserved padding and OOV slots"""
    tokens: List[str] = field(default_factory=lambda: [PAD_TOKEN, OOV_TOKEN])
    index: Dict[str, int] = field(init=False)

    def __post_init__(self):
        if self.tokens[:2] != [PAD_TOKEN, OOV_TOKEN]:
            raise ValueError("vocabulary must start with the padding and OOV tokens")
        self.index = {token: i for i, token in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def lookup(self, token: str) -> int:
        return self.index.get(token, OOV_INDEX)

    @classmethod
    def from_corpus(cls, token_lists: Iterable[Sequence[str]], min_count: int = 1) -> 'Vocabulary':
        """Frequency-descending, then alphabetical; reserved tokens never re-enter"""
        counts = Counter(token for tokens in token_lists for token in tokens)
        kept = sorted(
            (token for token, count in counts.items()
             if count >= min_count and token not in (PAD_TOKEN, OOV_TOKEN)),
            key=lambda token: (-counts[token], token),
        )
        return cls([PAD_TOKEN, OOV_TOKEN] + kept)


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # [V, 300] float32
    trainable: bool = True
    pretrained_rows: int = 0

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != EMBEDDING_DIM:
            raise ValueError(f"embedding matrix must be [V, {EMBEDDING_DIM}], got {self.matrix.shape}")


def read_embeddings(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Parse the embedding text format; malformed lines raise FormatError with the line number"""
    vectors: Dict[str, np.ndarray] = {}
    with open(path, 'r', encoding='utf-8') as handle:
        header = handle.readline().split()
        if len(header) != 2 or not all(part.isdigit() for part in header):
            raise FormatError("embedding header must be '<count> <dim>'", line=1)
        count, dim = int(header[0]), int(header[1])
        if dim != EMBEDDING_DIM:
            raise FormatError(f"embedding dimension must be {EMBEDDING_DIM}, header says {dim}", line=1)
        for line_number, line in enumerate(handle, start=2):
            parts = line.rstrip('\n').split(' ')
            if len(parts) != dim + 1:
                raise FormatError(f"expected token plus {dim} values, found {len(parts)} fields", line=line_number)
            try:
                vector = np.array([float(value) for value in parts[1:]], dtype=np.float32)
            except ValueError as exc:
                raise FormatError(f"non-numeric embedding value ({exc})", line=line_number) from exc
            vectors[parts[0]] = vector
    if len(vectors) != count:
        logger.warning(f"Embedding header announces {count} vectors, file holds {len(vectors)}")
    logger.info(f"Read {len(vectors)} embedding vectors from {path}")
    return vectors


def save_embeddings(path: Union[str, Path], tokens: Sequence[str], matrix: np.ndarray) -> None:
    """Write vectors so that read_embeddings recovers them bit-exactly"""
    matrix = np.asarray(matrix, dtype=np.float32)
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(f"{len(tokens)} {matrix.shape[1]}\n")
        for token, row in zip(tokens, matrix):
            handle.write(token + ' ' + ' '.join(repr(float(value)) for value in row) + '\n')


def build_vocab(train_tokens: Iterable[Sequence[str]],
                embeddings_path: Optional[Union[str, Path]] = None,
                seed: int = 0,
                trainable: bool = True,
                min_count: int = 1) -> Tuple[Vocabulary, EmbeddingTable]:
    """
    Vocabulary from the training split; rows for tokens in the embedding file are
    copied, every other row (OOV included) is uniform(-0.25, 0.25), padding is zero.
    """
    vocab = Vocabulary.from_corpus(train_tokens, min_count=min_count)
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(len(vocab), EMBEDDING_DIM)).astype(np.float32)
    matrix[PAD_INDEX] = 0.0

    pretrained_rows = 0
    if embeddings_path:
        vectors = read_embeddings(embeddings_path)
        for token, i in vocab.index.items():
            if i > OOV_INDEX and token in vectors:
                matrix[i] = vectors[token]
                pretrained_rows += 1
        coverage = pretrained_rows / max(len(vocab) - 2, 1)
        logger.info(f"Pretrained embeddings cover {pretrained_rows}/{len(vocab) - 2} tokens ({coverage:.1%})")
    else:
        logger.info("No embedding file supplied; all embedding rows randomly initialized")

    return vocab, EmbeddingTable(matrix, trainable=trainable, pretrained_rows=pretrained_rows)


def encode_batch(token_lists: Sequence[Sequence[str]], vocab: Vocabulary, max_len: int) -> np.ndarray:
    """Right-pad with index 0 and truncate at the tail: -> int64 [B, max_len]"""
    if max_len < MIN_SEQUENCE_LENGTH:
        raise ConfigurationError(
            f"max_len={max_len} is smaller than the smallest convolution window ({MIN_SEQUENCE_LENGTH})"
        )
    encoded = np.full((len(token_lists), max_len), PAD_INDEX, dtype=np.int64)
    for row, tokens in enumerate(token_lists):
        ids = [vocab.lookup(token) for token in tokens[:max_len]]
        encoded[row, :len(ids)] = ids
    return encoded
