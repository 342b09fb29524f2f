"""
Deterministic train/dev/test partitioning.

Tweets with more than one image always go to train. Remaining single-image tweets
are shuffled per class with a seeded generator; each class sends
floor(dev_ratio x its unique tweet count) to dev, the same number to test, and the
rest to train.
"""
import csv
import json
import logging
import math
import os
import shutil
import tempfile
from collections import Counter, OrderedDict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config.schema import TASK_SCHEMAS, DatasetSplits, TweetRecord
from src.curation.annotations import parse_annotations
from src.text.preprocessing import STOPWORDS_VERSION, preprocess_tweet
from src.text.text_cnn import WINDOWS
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

SPLIT_NAMES = ('train', 'dev', 'test')
MANIFEST_FILE = 'manifest.json'
MIN_SINGLE_IMAGE_TWEETS = 3


def _group_by_tweet(records: Sequence[TweetRecord]) -> "OrderedDict[str, List[TweetRecord]]":
    groups: "OrderedDict[str, List[TweetRecord]]" = OrderedDict()
    for record in records:
        groups.setdefault(record.tweet_id, []).append(record)
    return groups


def _class_counts(records: Sequence[TweetRecord], classes: Sequence[str]) -> Dict[str, Dict[str, int]]:
    """Per-class unique tweet (text) and pair (image) counts"""
    text = Counter()
    seen = set()
    for record in records:
        if record.tweet_id not in seen:
            seen.add(record.tweet_id)
            text[record.label] += 1
    image = Counter(record.label for record in records)
    return {label: {'text': text[label], 'image': image[label]} for label in classes}


def compute_max_len(records: Sequence[TweetRecord]) -> int:
    """Longest normalized training tweet, never below the widest convolution window"""
    longest = max((len(preprocess_tweet(r.text)) for r in records), default=0)
    return max(longest, max(WINDOWS))


def make_splits(records: Sequence[TweetRecord], ratios: Tuple[float, float, float] = (0.70, 0.15, 0.15),
                seed: int = 0, task: Optional[str] = None) -> DatasetSplits:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-6:
        raise ConfigurationError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    unlabeled = [r for r in records if r.label is None]
    if unlabeled:
        raise ConfigurationError(f"{len(unlabeled)} records have no unified label; run filter_agreement first")

    groups = _group_by_tweet(records)
    labels = sorted({r.label for r in records})
    classes = TASK_SCHEMAS[task].classes if task else tuple(labels)

    multi_image = {tweet_id for tweet_id, group in groups.items() if len(group) > 1}
    unique_per_class = Counter(group[0].label for group in groups.values())
    single_per_class: Dict[str, List[str]] = {label: [] for label in labels}
    for tweet_id, group in groups.items():
        if tweet_id not in multi_image:
            single_per_class[group[0].label].append(tweet_id)

    rng = np.random.default_rng(seed)
    dev_ids, test_ids = set(), set()
    dev_order: List[str] = []
    test_order: List[str] = []
    for label in labels:
        candidates = sorted(single_per_class[label])
        if len(candidates) < MIN_SINGLE_IMAGE_TWEETS:
            logger.warning(f"Class '{label}' has {len(candidates)} single-image tweets; all go to train")
            continue
        k = math.floor(ratios[1] * unique_per_class[label] + 1e-9)
        k_test = math.floor(ratios[2] * unique_per_class[label] + 1e-9)
        available = len(candidates)
        if k + k_test > available:
            logger.warning(f"Class '{label}': only {available} single-image tweets for "
                           f"{k} dev + {k_test} test; shrinking both")
            k = min(k, available // 2)
            k_test = min(k_test, available - k)
        shuffled = [candidates[i] for i in rng.permutation(available)]
        dev_order.extend(shuffled[:k])
        test_order.extend(shuffled[k:k + k_test])
    dev_ids.update(dev_order)
    test_ids.update(test_order)

    train = [r for r in records if r.tweet_id not in dev_ids and r.tweet_id not in test_ids]
    dev = [groups[tweet_id][0] for tweet_id in dev_order]
    test = [groups[tweet_id][0] for tweet_id in test_order]

    events = Counter(r.event_name for r in records)
    manifest: Dict[str, Any] = {
        'task': task,
        'classes': list(classes),
        'schema_version': TASK_SCHEMAS[task].version if task else None,
        'seed': seed,
        'ratios': list(ratios),
        'max_len': compute_max_len(train),
        'stopwords_version': STOPWORDS_VERSION,
        'multi_image_tweets': len(multi_image),
        'counts': {
            'train': _class_counts(train, classes),
            'dev': _class_counts(dev, classes),
            'test': _class_counts(test, classes),
        },
        'totals': {name: {'text': len({r.tweet_id for r in split}), 'image': len(split)}
                   for name, split in (('train', train), ('dev', dev), ('test', test))},
        'events': dict(sorted(events.items())),
    }
    logger.info(f"Split {len(groups)} tweets ({len(records)} pairs): train {len(train)}, "
                f"dev {len(dev)}, test {len(test)}; {len(multi_image)} multi-image tweets kept in train")
    return DatasetSplits(train=train, dev=dev, test=test, manifest=manifest)


def _frame(records: Sequence[TweetRecord]) -> pd.DataFrame:
    rows = [{
        'tweet_id': r.tweet_id,
        'image_id': r.image_id,
        'event_name': r.event_name,
        'tweet_text': r.text.replace('\t', ' ').replace('\n', ' '),
        'image_path': r.image_path,
        'label_text': r.text_label,
        'label_image': r.image_label,
        'label': r.label,
    } for r in records]
    columns = ['tweet_id', 'image_id', 'event_name', 'tweet_text', 'image_path', 'label_text', 'label_image', 'label']
    return pd.DataFrame(rows, columns=columns)


def write_splits(splits: DatasetSplits, out_dir: Union[str, Path]) -> Path:
    """
    Write train/dev/test TSVs plus the manifest. Files are staged in a sibling
    temporary directory and moved into place only once everything is written.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}-", dir=out_dir.parent))
    try:
        for name in SPLIT_NAMES:
            _frame(splits.split(name)).to_csv(staging / f"{name}.tsv", sep='\t', index=False,
                                              quoting=csv.QUOTE_NONE, escapechar='\\', lineterminator='\n')
        with open(staging / MANIFEST_FILE, 'w', encoding='utf-8') as handle:
            json.dump(splits.manifest, handle, indent=2, sort_keys=True)
            handle.write('\n')
        if out_dir.exists():
            if any(out_dir.iterdir()) and not (out_dir / MANIFEST_FILE).exists():
                raise ConfigurationError(f"{out_dir} exists and is not a prepared split directory")
            shutil.rmtree(out_dir)
        os.replace(staging, out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info(f"Wrote splits and manifest to {out_dir}")
    return out_dir


def read_manifest(data_dir: Union[str, Path]) -> Dict[str, Any]:
    path = Path(data_dir) / MANIFEST_FILE
    if not path.exists():
        raise FileNotFoundError(f"no manifest in {data_dir}; run the prepare command first")
    with open(path, 'r', encoding='utf-8') as handle:
        return json.load(handle)


def read_splits(data_dir: Union[str, Path]) -> DatasetSplits:
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    task = manifest.get('task')
    parts = {name: parse_annotations(data_dir / f"{name}.tsv", task=task) for name in SPLIT_NAMES}
    return DatasetSplits(train=parts['train'], dev=parts['dev'], test=parts['test'], manifest=manifest)
