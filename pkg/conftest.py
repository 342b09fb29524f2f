"""
Shared pytest fixtures: seeded generators, synthetic tweet records and small raster files.
"""
import logging
import shutil
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from config.schema import TweetRecord

FIXTURES_DIR = Path(__file__).resolve().parent / 'data' / 'fixtures'
FIXTURE_TSV = FIXTURES_DIR / 'synthetic_tweets.tsv'
GOLDEN_JSON = FIXTURES_DIR / 'synthetic_tweets.golden.json'

LABEL_COLORS = {
    'informative': (200, 30, 30),
    'not_informative': (30, 30, 200),
}


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def _drop_cli_log_handlers():
    """setup_logging binds handlers to the captured stdout of one test; drop them afterwards"""
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if type(handler).__module__.startswith('_pytest'):
            continue
        root.removeHandler(handler)
        handler.close()


@pytest.fixture
def make_record():
    """Factory for TweetRecords whose modalities agree unless told otherwise"""
    def factory(tweet_id, label, image_index=0, event='hurricane_harvey', text=None, image_label=None):
        tweet_id = str(tweet_id)
        return TweetRecord(
            tweet_id=tweet_id,
            image_id=f"{tweet_id}_{image_index}",
            event_name=event,
            text=text if text is not None else f"tweet {tweet_id} about {label}",
            image_path=f"images/{tweet_id}_{image_index}.jpg",
            text_label=label,
            image_label=image_label if image_label is not None else label,
            label=None,
        )
    return factory


@pytest.fixture
def write_image(tmp_path):
    """Write a solid-colour raster (with a little noise) and return its path"""
    noise = np.random.default_rng(7)

    def writer(name, color, size=(20, 12), mode='RGB'):
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        pixels = np.clip(np.array(color, dtype=np.int16) + noise.integers(-10, 11, (size[1], size[0], 3)), 0, 255)
        image = Image.fromarray(pixels.astype(np.uint8))
        if mode != 'RGB':
            image = image.convert(mode)
        image.save(path)
        return path

    return writer


@pytest.fixture
def fixture_release(tmp_path, write_image):
    """The synthetic annotation file copied next to freshly drawn images for every row"""
    release = tmp_path / 'release'
    release.mkdir()
    annotations = release / FIXTURE_TSV.name
    shutil.copyfile(FIXTURE_TSV, annotations)

    frame = pd.read_csv(annotations, sep='\t', dtype=str, keep_default_na=False)
    for row in frame.itertuples(index=False):
        write_image(f"release/{row.image_path}", LABEL_COLORS[row.label_image], size=(16, 16))
    return annotations
