"""
Epoch loop shared by the text, image and multimodal recipes.

Each epoch: seeded shuffle -> minibatches -> Adam step; then dev accuracy feeds the
plateau and early-stopping rules. The parameters returned are those of the epoch
with the best dev accuracy.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from config.config import EVAL_BATCH_SIZE
from config.schema import TrainConfig
from src.autodiff import ops
from src.autodiff.tensor import Tape, backward
from src.evaluation.evaluator import accuracy
from src.models.dataset import PairDataset, minibatches
from src.models.fusion import FusionParams, forward
from src.optim import AdamState, TrainingMonitor, adam_step, plateau_lr, should_stop
from src.utils.errors import ConfigurationError, DivergenceError, NonFiniteError

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    dev_accuracy: float
    lr: float
    best: bool

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: FusionParams
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_accuracy: float = 0.0
    stopped_early: bool = False
    optimizer_entries: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def _snapshot(entries: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {name: np.array(value, copy=True) for name, value in entries.items()}


def train(config: TrainConfig, train_set: PairDataset, dev_set: PairDataset, params: FusionParams,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None,
          max_workers: int = 1, eval_batch_size: int = EVAL_BATCH_SIZE,
          show_progress: bool = False) -> TrainResult:
    if len(train_set) == 0 or len(dev_set) == 0:
        raise ConfigurationError(f"training needs non-empty train and dev splits "
                                 f"(train={len(train_set)}, dev={len(dev_set)})")
    if len(train_set) < 2:
        raise ConfigurationError("training needs at least two examples for batch statistics")
    if params.mode != config.mode:
        raise ConfigurationError(f"model was built for mode '{params.mode}', config says '{config.mode}'")

    shuffle_rng = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng([config.seed, 1])
    optimizer = AdamState(lr=config.lr)
    monitor = TrainingMonitor(
        lr=config.lr,
        patience=config.patience,
        plateau_patience=config.plateau_patience,
        plateau_factor=config.plateau_factor,
        min_lr=config.min_lr,
        stop_requires_floor=config.stop_requires_floor,
    )

    logger.info(f"Training {config.mode} model on {len(train_set)} examples "
                f"(dev {len(dev_set)}), lr {config.lr}, batch {config.batch_size}, "
                f"max {config.max_epochs} epochs")

    result = TrainResult(params=params)
    best_state = None

    for epoch in range(1, config.max_epochs + 1):
        optimizer.lr = monitor.lr
        batches = minibatches(len(train_set), config.batch_size, shuffle_rng)
        loss_sum = 0.0
        correct = 0

        for batch_number, indices in enumerate(tqdm(batches, desc=f"epoch {epoch}", leave=False,
                                                     disable=not show_progress), start=1):
            text, images, labels = train_set.batch(indices)
            params.zero_grad()
            trainable = params.trainable()
            try:
                with Tape():
                    logits = forward(text, images, params, training=True, rng=dropout_rng)
                    loss, probs = ops.softmax_cross_entropy(logits, labels)
                    backward(loss, params=trainable.values())
            except NonFiniteError as exc:
                raise DivergenceError(epoch, batch_number, str(exc)) from exc
            params.replace(adam_step(trainable, optimizer))

            loss_sum += loss.item() * len(indices)
            correct += int(np.sum(probs.data.argmax(axis=1) == labels))

        dev_accuracy = accuracy(params, dev_set, eval_batch_size, max_workers)
        improved = monitor.record(dev_accuracy)
        if improved:
            best_state = (_snapshot(params.state_entries()), _snapshot(optimizer.to_entries()))

        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / len(train_set),
            train_accuracy=correct / len(train_set),
            dev_accuracy=dev_accuracy,
            lr=optimizer.lr,
            best=improved,
        )
        result.history.append(record)
        logger.info(f"Epoch {epoch}: loss {record.train_loss:.4f}, train acc {record.train_accuracy:.3f}, "
                    f"dev acc {dev_accuracy:.3f}, lr {optimizer.lr:.3g}" + (" (best)" if improved else ""))
        if on_epoch is not None:
            on_epoch(record)

        plateau_lr(monitor)
        if should_stop(monitor):
            logger.info(f"Early stop after epoch {epoch}: best dev accuracy {monitor.best_value:.3f} "
                        f"at epoch {monitor.best_epoch}")
            result.stopped_early = True
            break

    params.load_entries(best_state[0], strict=True)
    result.optimizer_entries = best_state[1]
    result.best_epoch = monitor.best_epoch
    result.best_dev_accuracy = monitor.best_value
    return result
