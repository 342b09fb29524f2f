"""
Dev-accuracy bookkeeping for early stopping and learning-rate reduction on plateau.

Improvement is strict: an epoch that only ties the best accuracy counts as
non-improving.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

from src.utils.errors import ContractError, ParameterError

logger = logging.getLogger(__name__)

MIN_LR = 1e-9


@dataclass
class TrainingMonitor:
    lr: float
    patience: int = 10
    plateau_patience: Optional[int] = None
    plateau_factor: float = 0.1
    min_lr: float = MIN_LR
    # image recipe: early stop only counts epochs spent at the lr floor
    stop_requires_floor: bool = False

    history: List[float] = field(default_factory=list)
    best_value: float = float('-inf')
    best_epoch: int = 0
    epochs_since_best: int = 0
    plateau_counter: int = 0
    stale_at_floor: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")
        if self.plateau_patience is not None and self.plateau_patience < 1:
            raise ParameterError(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        if not 0 < self.plateau_factor < 1:
            raise ParameterError(f"plateau_factor must be in (0, 1), got {self.plateau_factor}")

    @property
    def epoch(self) -> int:
        return len(self.history)

    @property
    def improved(self) -> bool:
        """Whether the most recent epoch set a new best"""
        return bool(self.history) and self.best_epoch == self.epoch

    @property
    def at_floor(self) -> bool:
        # tolerate rounding from repeated multiplication by the plateau factor
        return self.lr <= self.min_lr * (1 + 1e-6)

    def record(self, dev_accuracy: float) -> bool:
        """Append one epoch's dev accuracy; returns True on strict improvement"""
        self.history.append(float(dev_accuracy))
        if dev_accuracy > self.best_value:
            self.best_value = float(dev_accuracy)
            self.best_epoch = self.epoch
            self.epochs_since_best = 0
            self.plateau_counter = 0
            self.stale_at_floor = 0
            return True
        self.epochs_since_best += 1
        self.plateau_counter += 1
        if self.at_floor:
            self.stale_at_floor += 1
        return False


def should_stop(monitor: TrainingMonitor) -> bool:
    """True iff dev accuracy has not beaten the best for `patience` consecutive epochs"""
    if not monitor.history:
        raise ContractError("should_stop needs at least one recorded epoch")
    if monitor.improved:
        return False
    if monitor.stop_requires_floor:
        return monitor.at_floor and monitor.stale_at_floor >= monitor.patience
    return monitor.epochs_since_best >= monitor.patience


def plateau_lr(monitor: TrainingMonitor) -> float:
    """Multiply lr by the plateau factor after `plateau_patience` non-improving epochs"""
    if monitor.plateau_patience is None:
        return monitor.lr
    if monitor.plateau_counter >= monitor.plateau_patience and not monitor.at_floor:
        previous = monitor.lr
        monitor.lr = max(monitor.lr * monitor.plateau_factor, monitor.min_lr)
        monitor.plateau_counter = 0
        logger.info(f"Dev accuracy plateaued for {monitor.plateau_patience} epochs; "
                    f"lr {previous:.3g} -> {monitor.lr:.3g}")
    return monitor.lr
