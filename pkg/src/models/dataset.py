import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.schema import TaskSchema, TweetRecord
from src.image.preprocessing import ImageBatchLoader
from src.text.preprocessing import preprocess_many
from src.text.vocabulary import Vocabulary, encode_batch
from src.utils.errors import ConfigurationError, LabelError

logger = logging.getLogger(__name__)


@dataclass
class PairDataset:
    """
    Encoded examples of one split. Images are either held in memory (``images``)
    or decoded on demand from ``image_paths`` through ``loader``.
    """
    labels: np.ndarray
    text: Optional[np.ndarray] = None
    images: Optional[np.ndarray] = None
    image_paths: Optional[List[str]] = None
    loader: Optional[ImageBatchLoader] = None
    keys: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.labels)
        for name, value in (('text', self.text), ('images', self.images), ('image_paths', self.image_paths)):
            if value is not None and len(value) != n:
                raise ConfigurationError(f"{name} has {len(value)} rows, labels have {n}")
        if self.image_paths is not None and self.loader is None:
            raise ConfigurationError("image paths given without an image loader")
        if not self.keys:
            self.keys = [str(i) for i in range(n)]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def has_images(self) -> bool:
        return self.images is not None or self.image_paths is not None

    def batch(self, indices: np.ndarray) -> Tuple[Optional[np.ndarray], Optional[np.ndarray], np.ndarray]:
        text = self.text[indices] if self.text is not None else None
        if self.images is not None:
            images = self.images[indices]
        elif self.image_paths is not None:
            images = self.loader.load([self.image_paths[i] for i in indices])
        else:
            images = None
        return text, images, self.labels[indices]


def minibatches(n: int, batch_size: int, rng: Optional[np.random.Generator] = None) -> List[np.ndarray]:
    """
    Index batches covering 0..n-1, shuffled when ``rng`` is given. A trailing batch of
    one example is folded into the previous batch (batch norm needs two rows).
    """
    order = rng.permutation(n) if rng is not None else np.arange(n)
    batches = [order[start:start + batch_size] for start in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def build_dataset(records: Sequence[TweetRecord], schema: TaskSchema, mode: str,
                  vocab: Optional[Vocabulary] = None, max_len: Optional[int] = None,
                  loader: Optional[ImageBatchLoader] = None, max_workers: int = 1) -> PairDataset:
    """
    Encode curated records for one training mode. Text mode keeps one row per tweet;
    image and multimodal modes keep one row per (tweet, image) pair.
    """
    if mode == 'text':
        seen = set()
        unique = []
        for record in records:
            if record.tweet_id not in seen:
                seen.add(record.tweet_id)
                unique.append(record)
        records = unique

    labels = []
    for position, record in enumerate(records):
        label = record.label if record.label is not None else record.text_label
        if label not in schema.classes:
            raise LabelError(f"label '{label}' is not a {schema.task} class", index=position)
        labels.append(schema.index(label))

    text = None
    if mode in ('text', 'multimodal'):
        if vocab is None or max_len is None:
            raise ConfigurationError(f"{mode} mode needs a vocabulary and max_len")
        tokens = preprocess_many([r.text for r in records], max_workers=max_workers)
        text = encode_batch(tokens, vocab, max_len)

    image_paths = None
    if mode in ('image', 'multimodal'):
        if loader is None:
            raise ConfigurationError(f"{mode} mode needs an image loader")
        image_paths = [r.image_path for r in records]

    logger.debug(f"Built {mode} dataset with {len(records)} rows for task {schema.task}")
    return PairDataset(labels=np.array(labels, dtype=np.int64), text=text, image_paths=image_paths,
                       loader=loader, keys=[f"{r.tweet_id}:{r.image_id}" for r in records])
