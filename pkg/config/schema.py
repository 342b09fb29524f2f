import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import List, Dict, Optional, Any, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.config import DEFAULT_SEED, MAX_WORKERS, RUNS_DIR

TASKS = ('informative', 'humanitarian')
MODES = ('text', 'image', 'multimodal')

# Labels as they appear in the CrisisMMD annotation release
RAW_LABELS: Dict[str, Tuple[str, ...]] = {
    'informative': ('informative', 'not_informative'),
    'humanitarian': (
        'affected_individuals',
        'infrastructure_and_utility_damage',
        'injured_or_dead_people',
        'missing_or_found_people',
        'not_humanitarian',
        'other_relevant_information',
        'rescue_volunteering_or_donation_effort',
        'vehicle_damage',
    ),
}

# Minority humanitarian categories folded into semantically close ones
CATEGORY_MERGES: Dict[str, str] = {
    'injured_or_dead_people': 'affected_individuals',
    'missing_or_found_people': 'affected_individuals',
    'vehicle_damage': 'infrastructure_and_utility_damage',
}


@dataclass(frozen=True)
class TaskSchema:
    """Closed, ordered class list of a task; confusion-matrix axes follow this order"""
    task: str
    classes: Tuple[str, ...]
    version: int = 1

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def index(self, label: str) -> int:
        return self.classes.index(label)

    def label(self, index: int) -> str:
        return self.classes[index]


TASK_SCHEMAS: Dict[str, TaskSchema] = {
    'informative': TaskSchema('informative', ('informative', 'not_informative')),
    'humanitarian': TaskSchema('humanitarian', (
        'affected_individuals',
        'rescue_volunteering_or_donation_effort',
        'infrastructure_and_utility_damage',
        'other_relevant_information',
        'not_humanitarian',
    )),
}


@dataclass
class TweetRecord:
    """One tweet text / image pair with its per-modality labels"""
    tweet_id: str
    image_id: str
    event_name: str
    text: str
    image_path: str
    text_label: str
    image_label: str
    label: Optional[str] = None  # unified label once the modalities agree

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class DatasetSplits:
    """Train/dev/test partitions plus everything needed to reproduce them"""
    train: List[TweetRecord] = field(default_factory=list)
    dev: List[TweetRecord] = field(default_factory=list)
    test: List[TweetRecord] = field(default_factory=list)
    manifest: Dict[str, Any] = field(default_factory=dict)

    def split(self, name: str) -> List[TweetRecord]:
        if name not in ('train', 'dev', 'test'):
            raise ValueError(f"unknown split '{name}'")
        return getattr(self, name)


# Training recipes per mode. image follows the transfer-learning recipe, text the CNN
# recipe; multimodal values the recipes leave open are documented in DESIGN.md.
MODE_DEFAULTS: Dict[str, Dict[str, Any]] = {
    'text': {
        'lr': 0.01,
        'batch_size': 32,
        'max_epochs': 50,
        'patience': 10,
        'plateau_patience': None,
        'plateau_factor': 0.1,
        'stop_requires_floor': False,
    },
    'image': {
        'lr': 1e-6,
        'batch_size': 32,
        'max_epochs': 1000,
        'patience': 100,
        'plateau_patience': 100,
        'plateau_factor': 0.1,
        'stop_requires_floor': True,
    },
    'multimodal': {
        'lr': 1e-4,
        'batch_size': 32,
        'max_epochs': 100,
        'patience': 10,
        'plateau_patience': 5,
        'plateau_factor': 0.1,
        'stop_requires_floor': False,
    },
}


class TrainConfig(BaseModel):
    """Hyperparameters of one training run"""
    model_config = ConfigDict(extra='forbid')

    mode: str = 'text'
    task: str = 'informative'
    lr: float = 0.01
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    plateau_patience: Optional[int] = None
    plateau_factor: float = 0.1
    min_lr: float = 1e-9
    stop_requires_floor: bool = False
    seed: int = DEFAULT_SEED

    # architecture
    text_hidden: int = 500
    text_dropout: float = 0.02
    fusion_hidden: int = 512
    width_scale: float = 1.0
    image_size: int = 224
    train_embeddings: bool = True

    # multimodal ablations
    freeze_text: bool = False
    freeze_image: bool = False

    @model_validator(mode='before')
    @classmethod
    def _fill_mode_defaults(cls, values):
        """Fields not given explicitly take the recipe of the requested mode"""
        if isinstance(values, dict):
            recipe = MODE_DEFAULTS.get(values.get('mode', 'text'), {})
            values = {**recipe, **values}
        return values

    @field_validator('mode')
    @classmethod
    def _check_mode(cls, value):
        if value not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got '{value}'")
        return value

    @field_validator('task')
    @classmethod
    def _check_task(cls, value):
        if value not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got '{value}'")
        return value

    @field_validator('lr', 'min_lr')
    @classmethod
    def _check_positive(cls, value):
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    @field_validator('batch_size', 'max_epochs', 'patience', 'text_hidden', 'fusion_hidden')
    @classmethod
    def _check_count(cls, value):
        if value < 1:
            raise ValueError(f"must be >= 1, got {value}")
        return value

    @field_validator('width_scale')
    @classmethod
    def _check_width_scale(cls, value):
        if not 0 < value <= 1:
            raise ValueError(f"width_scale must be in (0, 1], got {value}")
        return value

    @field_validator('image_size')
    @classmethod
    def _check_image_size(cls, value):
        if value < 8 or value % 8:
            raise ValueError(f"image_size must be a positive multiple of 8, got {value}")
        return value

    @field_validator('text_dropout')
    @classmethod
    def _check_dropout(cls, value):
        if not 0 <= value < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {value}")
        return value


class ExperimentConfig(TrainConfig):
    """Everything a run needs; serialized verbatim into the run directory"""
    data_dir: str = Field(..., description="directory produced by the prepare command")
    embeddings_path: Optional[str] = None
    pretrained_vgg16: Optional[str] = None
    warm_start_text: Optional[str] = None
    warm_start_image: Optional[str] = None
    image_root: Optional[str] = None  # overrides the image root recorded by prepare
    output_dir: str = RUNS_DIR
    run_name: Optional[str] = None
    max_workers: int = MAX_WORKERS

    @model_validator(mode='after')
    def _check_warm_start(self):
        if self.mode != 'multimodal' and (self.warm_start_text or self.warm_start_image):
            raise ValueError("warm starts only apply to multimodal mode")
        return self

    def resolved_run_name(self) -> str:
        return self.run_name or f"{self.task}-{self.mode}-seed{self.seed}"

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{name: getattr(self, name) for name in TrainConfig.model_fields})


def resolve_experiment_config(config_file: Optional[Union[str, Path]] = None,
                              overrides: Optional[Dict[str, Any]] = None,
                              defaults: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Precedence: command-line flag > config file > mode default > ``defaults``
    (environment) > field default. ``None`` values in ``overrides`` or ``defaults``
    mean "not given".
    """
    explicit: Dict[str, Any] = {}
    if config_file:
        with open(config_file, 'r', encoding='utf-8') as handle:
            explicit.update(json.load(handle))
    explicit.update({key: value for key, value in (overrides or {}).items() if value is not None})

    values: Dict[str, Any] = {key: value for key, value in (defaults or {}).items() if value is not None}
    values.update(MODE_DEFAULTS.get(explicit.get('mode', 'text'), {}))
    values.update(explicit)
    return ExperimentConfig(**values)


def train_config_for(mode: str, **overrides) -> TrainConfig:
    """Mode defaults plus explicit overrides"""
    return TrainConfig(mode=mode, **overrides)
