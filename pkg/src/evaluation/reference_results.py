"""
Published CrisisMMD reference numbers used as oracles and for side-by-side reports.

Humanitarian matrices are published with the axes ordered affected, infrastructure,
not_humanitarian, other, rescue; they are permuted into TaskSchema order on load.
Known inconsistencies are kept as published: the image-only informative matrix gives
83.1 accuracy against a reported 83.3, and the image-only humanitarian matrix gives
78.0 against a reported 76.8.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.schema import TASK_SCHEMAS
from src.evaluation.metrics import ConfusionMatrix, EvalReport

logger = logging.getLogger(__name__)

PUBLISHED_HUMANITARIAN_ORDER = (
    'affected_individuals',
    'infrastructure_and_utility_damage',
    'not_humanitarian',
    'other_relevant_information',
    'rescue_volunteering_or_donation_effort',
)

_INFORMATIVE_MATRICES = {
    'text': [[875, 155], [139, 365]],
    'image': [[916, 114], [145, 359]],
    'multimodal': [[929, 101], [139, 365]],
}

_HUMANITARIAN_MATRICES_PUBLISHED = {
    'text': [[0, 0, 5, 1, 3],
             [0, 17, 41, 12, 11],
             [0, 1, 458, 20, 25],
             [0, 6, 105, 112, 12],
             [0, 2, 37, 2, 85]],
    'image': [[1, 0, 4, 0, 4],
              [1, 56, 13, 6, 5],
              [0, 13, 437, 22, 32],
              [0, 5, 50, 178, 2],
              [0, 5, 43, 5, 73]],
    'multimodal': [[1, 0, 3, 0, 5],
                   [1, 61, 10, 4, 5],
                   [0, 17, 426, 26, 35],
                   [0, 3, 49, 180, 3],
                   [0, 9, 33, 3, 81]],
}

# accuracy, weighted precision, weighted recall, weighted F1 (percent)
REFERENCE_SCORES: Dict[Tuple[str, str], Tuple[float, float, float, float]] = {
    ('informative', 'text'): (80.8, 81.0, 81.0, 80.9),
    ('informative', 'image'): (83.3, 83.1, 83.3, 83.2),
    ('informative', 'multimodal'): (84.4, 84.1, 84.0, 84.2),
    ('humanitarian', 'text'): (70.4, 70.0, 70.0, 67.7),
    ('humanitarian', 'image'): (76.8, 76.4, 76.8, 76.3),
    ('humanitarian', 'multimodal'): (78.4, 78.5, 78.0, 78.3),
}

# class -> (train text, train image, dev, test); dev/test text and image counts are equal
REFERENCE_SPLIT_COUNTS: Dict[str, Dict[str, Tuple[int, int, int, int]]] = {
    'informative': {
        'informative': (5546, 6345, 1056, 1030),
        'not_informative': (2747, 3256, 517, 504),
    },
    'humanitarian': {
        'affected_individuals': (70, 71, 9, 9),
        'rescue_volunteering_or_donation_effort': (762, 912, 149, 126),
        'infrastructure_and_utility_damage': (496, 612, 80, 81),
        'other_relevant_information': (1192, 1279, 239, 235),
        'not_humanitarian': (2743, 3252, 521, 504),
    },
}


def reference_matrix(task: str, mode: str) -> ConfusionMatrix:
    """Published confusion matrix for (task, mode), axes in TaskSchema order"""
    schema = TASK_SCHEMAS[task]
    if task == 'informative':
        counts = np.array(_INFORMATIVE_MATRICES[mode], dtype=np.int64)
    else:
        published = np.array(_HUMANITARIAN_MATRICES_PUBLISHED[mode], dtype=np.int64)
        order = [PUBLISHED_HUMANITARIAN_ORDER.index(label) for label in schema.classes]
        counts = published[np.ix_(order, order)]
    return ConfusionMatrix(counts, list(schema.classes))


@dataclass
class ComparisonRow:
    metric: str
    ours: float
    reference: float

    @property
    def delta(self) -> float:
        return round(self.ours - self.reference, 1)


def compare_with_reference(report: EvalReport, task: str, mode: str) -> List[ComparisonRow]:
    reference = REFERENCE_SCORES.get((task, mode))
    if reference is None:
        return []
    ours = report.headline()
    return [ComparisonRow(metric, ours[metric], value)
            for metric, value in zip(('accuracy', 'precision', 'recall', 'f1'), reference)]


def compare_split_counts(manifest: Dict, task: Optional[str] = None) -> List[Dict]:
    """Per-class prepared counts next to the published split sizes"""
    task = task or manifest.get('task')
    reference = REFERENCE_SPLIT_COUNTS.get(task, {})
    counts = manifest.get('counts', {})
    rows = []
    for label, (train_text, train_image, dev, test) in reference.items():
        rows.append({
            'class': label,
            'train_text': (counts.get('train', {}).get(label, {}).get('text', 0), train_text),
            'train_image': (counts.get('train', {}).get(label, {}).get('image', 0), train_image),
            'dev': (counts.get('dev', {}).get(label, {}).get('text', 0), dev),
            'test': (counts.get('test', {}).get(label, {}).get('text', 0), test),
        })
    return rows
