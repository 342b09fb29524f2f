from src.optim.adam import AdamState, adam_step
from src.optim.monitor import TrainingMonitor, plateau_lr, should_stop

__all__ = ['AdamState', 'TrainingMonitor', 'adam_step', 'plateau_lr', 'should_stop']
