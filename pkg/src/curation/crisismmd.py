"""
Column mapping from the public CrisisMMD annotation release to the canonical schema.

The release ships one TSV per disaster event (``<event>_final_data.tsv``) with
per-task text/image label columns. Rows missing a label for the requested task
are skipped with a warning.
"""
import logging
import re
from pathlib import Path
from typing import Iterable, List, Union

import pandas as pd

from config.schema import TASKS
from src.curation.annotations import read_table, records_from_frame
from src.utils.errors import ConfigurationError, SchemaError

logger = logging.getLogger(__name__)

TASK_COLUMNS = {
    'informative': ('text_info', 'image_info'),
    'humanitarian': ('text_human', 'image_human'),
}
RELEASE_COLUMNS = ('tweet_id', 'image_id', 'tweet_text', 'image_path')
EVENT_SUFFIX = re.compile(r'_final_data$')


def event_from_filename(path: Union[str, Path]) -> str:
    return EVENT_SUFFIX.sub('', Path(path).stem)


def map_release_file(path: Union[str, Path], task: str) -> pd.DataFrame:
    """One release file -> canonical frame (rows with an empty task label dropped)"""
    if task not in TASKS:
        raise ConfigurationError(f"unknown task '{task}'")
    frame = read_table(path)
    text_column, image_column = TASK_COLUMNS[task]
    missing = [c for c in RELEASE_COLUMNS + (text_column, image_column) if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: not a CrisisMMD release file, missing {', '.join(missing)}", line=1)

    mapped = pd.DataFrame({
        'tweet_id': frame['tweet_id'],
        'image_id': frame['image_id'],
        'event_name': frame['event_name'] if 'event_name' in frame.columns else event_from_filename(path),
        'tweet_text': frame['tweet_text'],
        'image_path': frame['image_path'],
        'label_text': frame[text_column].str.strip(),
        'label_image': frame[image_column].str.strip(),
    })
    unlabeled = (mapped['label_text'] == '') | (mapped['label_image'] == '')
    if unlabeled.any():
        logger.warning(f"{path}: skipping {int(unlabeled.sum())} rows without a {task} label")
    return mapped[~unlabeled].reset_index(drop=True)


def release_files(source: Union[str, Path]) -> List[Path]:
    source = Path(source)
    if source.is_file():
        return [source]
    if not source.is_dir():
        raise FileNotFoundError(f"CrisisMMD release not found: {source}")
    files = sorted(source.glob('*.tsv'))
    if not files:
        raise FileNotFoundError(f"no .tsv annotation files under {source}")
    return files


def load_release(sources: Iterable[Union[str, Path]], task: str):
    """All release files under ``sources`` as TweetRecords, ready for filter_agreement"""
    frames = []
    for source in sources:
        for path in release_files(source):
            frames.append(map_release_file(path, task))
            logger.info(f"Mapped {len(frames[-1])} rows from {path.name}")
    combined = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=RELEASE_COLUMNS)
    return records_from_frame(combined, task=task, source='CrisisMMD release')
