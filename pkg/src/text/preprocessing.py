"""
Tweet normalization ahead of vocabulary lookup.

Rules are applied in a fixed order: lowercase, drop URLs, drop <PLACEHOLDER>
tokens, strip non-ASCII, drop hashtag signs (keeping the word), punctuation to
spaces, whitespace split, drop digit-only tokens, drop stopwords.
"""
import logging
import re
import string
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional

logger = logging.getLogger(__name__)

STOPWORDS_PATH = Path(__file__).resolve().parent / 'assets' / 'stopwords_en.txt'
STOPWORDS_VERSION = 1

URL_PATTERN = re.compile(r"(?:https?://|www\.)\S+|\bt\.co/\S+")
PLACEHOLDER_PATTERN = re.compile(r"<[^<>\s]+>")
PUNCTUATION_TABLE = str.maketrans({ch: ' ' for ch in string.punctuation})


@lru_cache(maxsize=4)
def load_stopwords(path: Optional[str] = None) -> FrozenSet[str]:
    stopword_file = Path(path) if path else STOPWORDS_PATH
    with open(stopword_file, 'r', encoding='utf-8') as handle:
        words = frozenset(line.strip() for line in handle if line.strip())
    logger.debug(f"Loaded {len(words)} stopwords from {stopword_file}")
    return words


def preprocess_tweet(text: str, stopwords: Optional[FrozenSet[str]] = None) -> List[str]:
    """Normalize one tweet into a token list (possibly empty)"""
    if stopwords is None:
        stopwords = load_stopwords()

    text = str(text or '').lower()
    text = URL_PATTERN.sub(' ', text)
    text = PLACEHOLDER_PATTERN.sub(' ', text)
    text = text.encode('ascii', 'ignore').decode('ascii')
    text = text.replace('#', '')
    text = text.translate(PUNCTUATION_TABLE)

    return [
        token for token in text.split()
        if not token.isdigit() and token not in stopwords
    ]


def preprocess_many(texts: Iterable[str], max_workers: int = 1) -> List[List[str]]:
    """Preprocess a corpus; order of the output matches the input"""
    texts = list(texts)
    stopwords = load_stopwords()
    if max_workers <= 1 or len(texts) < 1000:
        return [preprocess_tweet(t, stopwords) for t in texts]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(lambda t: preprocess_tweet(t, stopwords), texts, chunksize=256))
