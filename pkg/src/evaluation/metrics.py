"""
Confusion matrices and support-weighted precision / recall / F1.

Rows are the human (gold) label, columns the prediction, both in TaskSchema order.
A metric whose denominator is zero is defined as 0.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.utils.errors import ContractError, DimensionError, LabelError

logger = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # int64 [K, K]
    classes: Optional[List[str]] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise DimensionError("confusion_matrix", "counts must be square", self.counts.shape)
        if np.any(self.counts < 0):
            raise ValueError("confusion matrix counts must be non-negative")
        if self.classes is not None and len(self.classes) != self.counts.shape[0]:
            raise ValueError(f"{len(self.classes)} class names for a {self.counts.shape[0]}-class matrix")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        return int(np.trace(self.counts))

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def predicted(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def __add__(self, other: 'ConfusionMatrix') -> 'ConfusionMatrix':
        return ConfusionMatrix(self.counts + other.counts, self.classes)

    def to_dict(self) -> Dict:
        return {'classes': self.classes, 'counts': self.counts.tolist()}


@dataclass
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    """All values are fractions in [0, 1]; ``percent`` gives the one-decimal view"""
    accuracy: float
    per_class: List[ClassMetrics] = field(default_factory=list)
    weighted_precision: float = 0.0
    weighted_recall: float = 0.0
    weighted_f1: float = 0.0
    macro_precision: float = 0.0
    macro_recall: float = 0.0
    macro_f1: float = 0.0
    total: int = 0

    @staticmethod
    def percent(value: float) -> float:
        return round(100.0 * value, 1)

    def headline(self) -> Dict[str, float]:
        """Accuracy and weighted P/R/F1 as percentages, one decimal"""
        return {
            'accuracy': self.percent(self.accuracy),
            'precision': self.percent(self.weighted_precision),
            'recall': self.percent(self.weighted_recall),
            'f1': self.percent(self.weighted_f1),
        }

    def to_dict(self) -> Dict:
        return {
            'accuracy': self.accuracy,
            'weighted': {'precision': self.weighted_precision, 'recall': self.weighted_recall,
                         'f1': self.weighted_f1},
            'macro': {'precision': self.macro_precision, 'recall': self.macro_recall, 'f1': self.macro_f1},
            'per_class': {m.label: {'precision': m.precision, 'recall': m.recall, 'f1': m.f1,
                                    'support': m.support} for m in self.per_class},
            'total': self.total,
            'percent': self.headline(),
        }


def confusion_matrix(gold: Sequence[int], pred: Sequence[int], num_classes: int,
                     classes: Optional[Sequence[str]] = None) -> ConfusionMatrix:
    gold = np.asarray(gold, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if gold.shape != pred.shape:
        raise DimensionError("confusion_matrix", "gold and predicted ids differ in length", gold.shape, pred.shape)
    for name, ids in (('gold', gold), ('predicted', pred)):
        bad = np.flatnonzero((ids < 0) | (ids >= num_classes))
        if bad.size:
            raise LabelError(f"{name} class id {int(ids[bad[0]])} outside [0, {num_classes})", index=int(bad[0]))
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (gold, pred), 1)
    return ConfusionMatrix(counts, list(classes) if classes is not None else None)


def _safe_divide(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    numerator = numerator.astype(np.float64)
    denominator = denominator.astype(np.float64)
    out = np.zeros_like(numerator)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def classification_report(cm: ConfusionMatrix) -> EvalReport:
    total = cm.total
    if total == 0:
        raise ContractError("classification_report needs a non-empty confusion matrix")

    diagonal = np.diag(cm.counts)
    support = cm.support()
    precision = _safe_divide(diagonal, cm.predicted())
    recall = _safe_divide(diagonal, support)
    f1 = _safe_divide(2 * precision * recall, precision + recall)
    weights = support / total

    names = cm.classes or [str(k) for k in range(cm.num_classes)]
    report = EvalReport(
        accuracy=cm.trace / total,
        per_class=[ClassMetrics(names[k], float(precision[k]), float(recall[k]), float(f1[k]), int(support[k]))
                   for k in range(cm.num_classes)],
        weighted_precision=float(np.dot(weights, precision)),
        weighted_recall=float(np.dot(weights, recall)),
        weighted_f1=float(np.dot(weights, f1)),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        total=total,
    )
    # support-weighted recall collapses to trace / total
    assert abs(report.weighted_recall - report.accuracy) < 1e-9
    return report


@dataclass
class ClassErrors:
    """Misses (gold = class, predicted elsewhere) and false alarms (predicted = class, gold elsewhere)"""
    label: str
    false_negatives: int
    false_positives: int
    missed_as: Dict[str, int] = field(default_factory=dict)
    confused_from: Dict[str, int] = field(default_factory=dict)


def error_breakdown(cm: ConfusionMatrix, class_index: int) -> ClassErrors:
    if not 0 <= class_index < cm.num_classes:
        raise LabelError(f"class id {class_index} outside [0, {cm.num_classes})", index=class_index)
    names = cm.classes or [str(k) for k in range(cm.num_classes)]
    row = cm.counts[class_index]
    column = cm.counts[:, class_index]
    others = [k for k in range(cm.num_classes) if k != class_index]
    return ClassErrors(
        label=names[class_index],
        false_negatives=int(row.sum() - row[class_index]),
        false_positives=int(column.sum() - column[class_index]),
        missed_as={names[k]: int(row[k]) for k in others},
        confused_from={names[k]: int(column[k]) for k in others},
    )
