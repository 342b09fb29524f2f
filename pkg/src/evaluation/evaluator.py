import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from config.config import EVAL_BATCH_SIZE
from config.schema import TaskSchema
from src.evaluation.metrics import ConfusionMatrix, EvalReport, classification_report, confusion_matrix
from src.models.dataset import PairDataset, minibatches
from src.models.fusion import FusionParams, predict
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass
class Prediction:
    key: str
    gold: int
    predicted: int
    probabilities: List[float]


@dataclass
class EvaluationResult:
    report: EvalReport
    matrix: ConfusionMatrix
    predictions: List[Prediction]


def predict_dataset(params: FusionParams, dataset: PairDataset, batch_size: int = EVAL_BATCH_SIZE,
                    max_workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inference over a whole split with dropout off. Batches may run on worker threads;
    parameters are only read, and results are stitched back in dataset order.
    """
    if len(dataset) == 0:
        raise ConfigurationError("cannot run inference on an empty split")
    batches = minibatches(len(dataset), batch_size)

    def run(indices):
        text, images, _ = dataset.batch(indices)
        return predict(params, text, images)

    if max_workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            outputs = list(executor.map(run, batches))
    else:
        outputs = [run(indices) for indices in batches]

    labels = np.concatenate([ids for ids, _ in outputs])
    probs = np.concatenate([p for _, p in outputs], axis=0)
    return labels, probs


def accuracy(params: FusionParams, dataset: PairDataset, batch_size: int = EVAL_BATCH_SIZE,
             max_workers: int = 1) -> float:
    predicted, _ = predict_dataset(params, dataset, batch_size, max_workers)
    return float(np.mean(predicted == dataset.labels))


def evaluate(params: FusionParams, dataset: PairDataset, schema: TaskSchema,
             batch_size: int = EVAL_BATCH_SIZE, max_workers: int = 1) -> EvaluationResult:
    """Confusion matrix, weighted report and per-example predictions for one split"""
    if params.num_classes != schema.num_classes:
        raise ConfigurationError(f"model predicts {params.num_classes} classes, "
                                 f"task '{schema.task}' has {schema.num_classes}")
    predicted, probs = predict_dataset(params, dataset, batch_size, max_workers)
    matrix = confusion_matrix(dataset.labels, predicted, schema.num_classes, schema.classes)
    report = classification_report(matrix)

    predictions = [
        Prediction(key, int(gold), int(pred), [float(p) for p in row])
        for key, gold, pred, row in zip(dataset.keys, dataset.labels, predicted, probs)
    ]
    logger.info(f"Evaluated {len(dataset)} examples: accuracy {EvalReport.percent(report.accuracy)}, "
                f"weighted F1 {EvalReport.percent(report.weighted_f1)}")
    return EvaluationResult(report, matrix, predictions)
