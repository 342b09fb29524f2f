"""
Canonical annotation ingest, label-agreement filtering and category merging.

Canonical TSV columns: tweet_id, image_id, event_name, tweet_text, image_path,
label_text, label_image (plus an optional ``label`` column in split files).
Line numbers in errors count the header as line 1.
"""
import csv
import dataclasses
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import pandas as pd

from config.schema import CATEGORY_MERGES, RAW_LABELS, TASK_SCHEMAS, TweetRecord
from src.utils.errors import DuplicationError, LabelError, SchemaError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ('tweet_id', 'image_id', 'event_name', 'tweet_text', 'image_path', 'label_text', 'label_image')
# tweet text may legitimately normalize to nothing; every other column must be filled
NON_EMPTY_COLUMNS = ('tweet_id', 'image_id', 'event_name', 'image_path', 'label_text', 'label_image')


def _allowed_labels(task: Optional[str]) -> set:
    if task is None:
        return set().union(*RAW_LABELS.values()) | set().union(*(s.classes for s in TASK_SCHEMAS.values()))
    return set(RAW_LABELS[task]) | set(TASK_SCHEMAS[task].classes)


def read_table(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"annotation file not found: {path}")
    try:
        frame = pd.read_csv(path, sep='\t', dtype=str, keep_default_na=False, quoting=csv.QUOTE_NONE,
                            escapechar='\\')
    except pd.errors.ParserError as exc:
        raise SchemaError(f"cannot parse {path} as tab-separated values: {exc}") from exc
    # short rows come back as NaN
    return frame.fillna('')


def records_from_frame(frame: pd.DataFrame, task: Optional[str] = None, source: str = '<frame>') -> List[TweetRecord]:
    missing = [column for column in REQUIRED_COLUMNS if column not in frame.columns]
    if missing:
        raise SchemaError(f"{source}: missing required column(s): {', '.join(missing)}", line=1)

    allowed = _allowed_labels(task)
    has_label = 'label' in frame.columns
    seen = {}
    records: List[TweetRecord] = []

    for position, row in enumerate(frame.itertuples(index=False)):
        line = position + 2
        values = row._asdict()
        for column in NON_EMPTY_COLUMNS:
            if not str(values[column]).strip():
                raise SchemaError(f"{source}: empty value in column '{column}'", line=line)
        for column in ('label_text', 'label_image'):
            if values[column] not in allowed:
                raise LabelError(f"{source}: unknown label '{values[column]}' in column '{column}'", line=line)

        key = (values['tweet_id'], values['image_id'])
        if key in seen:
            raise DuplicationError(values['tweet_id'], values['image_id'], line)
        seen[key] = line

        label = values['label'] if has_label and values['label'] else None
        if label is not None and label not in allowed:
            raise LabelError(f"{source}: unknown label '{label}' in column 'label'", line=line)

        records.append(TweetRecord(
            tweet_id=values['tweet_id'],
            image_id=values['image_id'],
            event_name=values['event_name'],
            text=values['tweet_text'],
            image_path=values['image_path'],
            text_label=values['label_text'],
            image_label=values['label_image'],
            label=label,
        ))
    return records


def parse_annotations(path: Union[str, Path], task: Optional[str] = None) -> List[TweetRecord]:
    """One TweetRecord per row; labels checked against the raw label vocabulary"""
    frame = read_table(path)
    records = records_from_frame(frame, task=task, source=str(path))
    logger.info(f"Parsed {len(records)} annotation rows from {path}")
    return records


def filter_agreement(records: Iterable[TweetRecord], task: str) -> List[TweetRecord]:
    """Keep pairs whose text and image annotations agree and attach the shared label"""
    kept = [dataclasses.replace(r, label=r.text_label) for r in records if r.text_label == r.image_label]
    logger.info(f"Label agreement ({task}): kept {len(kept)} pairs")
    return kept


def _merged(label: str) -> str:
    return CATEGORY_MERGES.get(label, label)


def merge_categories(records: Iterable[TweetRecord]) -> List[TweetRecord]:
    """Fold minority humanitarian categories into their semantic neighbours"""
    records = list(records)
    classes = set(TASK_SCHEMAS['humanitarian'].classes)
    merged: List[TweetRecord] = []
    for position, record in enumerate(records):
        label = _merged(record.label) if record.label is not None else None
        if label is not None and label not in classes:
            raise LabelError(f"label '{record.label}' has no humanitarian category to merge into", index=position)
        merged.append(dataclasses.replace(
            record,
            text_label=_merged(record.text_label),
            image_label=_merged(record.image_label),
            label=label,
        ))
    changed = sum(1 for before, after in zip(records, merged)
                  if before.label != after.label)
    if changed:
        logger.info(f"Merged {changed} records into broader humanitarian categories")
    return merged


def curate(records: Iterable[TweetRecord], task: str) -> Tuple[List[TweetRecord], Dict[str, int]]:
    """Agreement filter, then (humanitarian only) category merge, plus counts for the manifest"""
    records = list(records)
    kept = filter_agreement(records, task)
    stats = {'parsed': len(records), 'disagreeing_dropped': len(records) - len(kept), 'merged': 0}
    if task == 'humanitarian':
        stats['merged'] = sum(1 for r in kept if r.label in CATEGORY_MERGES)
        kept = merge_categories(kept)
    return kept, stats
