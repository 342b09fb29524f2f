"""
Joint text + image classifier and its single-modality variants.

Multimodal: text features -> dense(1000)+ReLU, image fc2 -> dense(1000)+ReLU,
concat [B, 2000] -> dense(hidden)+ReLU -> K-way head. Text and image modes run the
branch's own head and never touch the fusion layers.
"""
import copy
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from config.schema import TASK_SCHEMAS, TrainConfig
from src.autodiff import ops
from src.autodiff.tensor import Tensor, no_grad
from src.image.vgg16 import FC_WIDTH, HEAD_PREFIX, VggParams, scaled, vgg16_forward, vgg16_init
from src.models.params import ParamSet
from src.storage.checkpoint import load_checkpoint
from src.text.text_cnn import FEATURE_DIM, TextCnnParams, text_cnn_forward
from src.text.vocabulary import EMBEDDING_DIM, EmbeddingTable
from src.utils.errors import ConfigurationError, DimensionError, IncompatibilityError, InputError

logger = logging.getLogger(__name__)

PROJECTION_DIM = 1000
DEFAULT_FUSION_HIDDEN = 512


class FusionParams(ParamSet):
    """
    One flat tensor map over every branch. Branch parameter objects share this map
    and its buffers, so updates made through the fusion object reach the branch
    forward functions.
    """

    def __init__(self, mode: str, num_classes: int, text: Optional[TextCnnParams] = None,
                 image: Optional[VggParams] = None, hidden: int = DEFAULT_FUSION_HIDDEN, seed: int = 0):
        super().__init__()
        self.mode = mode
        self.num_classes = num_classes
        self.hidden = hidden
        self.text = text
        self.image = image

        for branch in (text, image):
            if branch is None:
                continue
            for name, tensor in branch.tensors.items():
                if name in self.tensors:
                    raise ValueError(f"duplicate parameter name '{name}'")
                self.tensors[name] = tensor
            self.buffers.update(branch.buffers)
            self.frozen |= branch.frozen

        if mode == 'multimodal':
            rng = np.random.default_rng([seed, 2])
            self.add_dense(rng, "fusion/text_proj", FEATURE_DIM, PROJECTION_DIM)
            self.add_dense(rng, "fusion/image_proj", image.feature_dim, PROJECTION_DIM)
            self.add_dense(rng, "fusion/hidden", 2 * PROJECTION_DIM, hidden)
            self.add_dense(rng, "fusion/out", hidden, num_classes)
        self._bind()

    def _bind(self):
        for branch in (self.text, self.image):
            if branch is not None:
                branch.tensors = self.tensors
                branch.buffers = self.buffers
                branch.frozen = self.frozen

    def with_tensors(self, overrides: Mapping[str, Tensor]) -> 'FusionParams':
        clone = super().with_tensors(overrides)
        clone.text = copy.copy(self.text) if self.text is not None else None
        clone.image = copy.copy(self.image) if self.image is not None else None
        clone._bind()
        return clone

    def architecture(self) -> Dict[str, Any]:
        return {
            'mode': self.mode,
            'num_classes': self.num_classes,
            'fusion_hidden': self.hidden,
            'text': self.text.architecture() if self.text is not None else None,
            'text_trainable_embeddings': (self.text is not None and "text/embedding" not in self.frozen),
            'image': self.image.architecture() if self.image is not None else None,
        }


def _warm_start(params: FusionParams, source: Union[str, Path, Mapping[str, np.ndarray]],
                label: str):
    from_file = isinstance(source, (str, Path))
    entries = load_checkpoint(source)[0] if from_file else source
    loaded = params.load_entries(entries, strict=True, names=branch_names(params, label))
    logger.info(f"Warm-started {len(loaded)} {label} tensors" + (f" from {source}" if from_file else ""))


def branch_names(params: ParamSet, prefix: str):
    return [name for name in params.tensors if name.startswith(prefix + '/')]


def build_model(config: TrainConfig, text_branch: Optional[TextCnnParams] = None,
                image_branch: Optional[VggParams] = None,
                warm_start_text: Optional[Union[str, Path, Mapping[str, np.ndarray]]] = None,
                warm_start_image: Optional[Union[str, Path, Mapping[str, np.ndarray]]] = None,
                num_classes: Optional[int] = None) -> FusionParams:
    """Assemble the classifier for ``config.mode`` around already-initialized branches"""
    k = num_classes or TASK_SCHEMAS[config.task].num_classes

    if config.mode == 'text':
        if text_branch is None:
            raise ConfigurationError("text mode needs a text branch")
        if text_branch.num_classes != k:
            raise IncompatibilityError(f"text head has {text_branch.num_classes} classes, task needs {k}",
                                       tensor="text/out/weight")
        return FusionParams('text', k, text=text_branch, seed=config.seed)

    if config.mode == 'image':
        if image_branch is None:
            raise ConfigurationError("image mode needs an image branch")
        if image_branch.num_classes != k:
            raise IncompatibilityError(f"image head has {image_branch.num_classes} classes, task needs {k}",
                                       tensor=f"{HEAD_PREFIX}/weight")
        return FusionParams('image', k, image=image_branch, seed=config.seed)

    if text_branch is None or image_branch is None:
        raise ConfigurationError("multimodal mode needs both branches")
    text_width = text_branch["text/fc1/bias"].shape[0]
    if text_width != FEATURE_DIM:
        raise IncompatibilityError(f"text features are {text_width} wide, fusion expects {FEATURE_DIM}",
                                   tensor="text/fc1/weight")
    expected_image = scaled(FC_WIDTH, config.width_scale)
    if image_branch.feature_dim != expected_image:
        raise IncompatibilityError(
            f"image fc2 features are {image_branch.feature_dim} wide, width_scale={config.width_scale} "
            f"expects {expected_image}", tensor="image/fc2/weight")

    # unimodal heads are unused once the branches feed the fusion layers
    text_branch.remove("text/out/")
    text_branch.num_classes = None
    image_branch.remove(HEAD_PREFIX + "/")
    image_branch.num_classes = None

    params = FusionParams('multimodal', k, text=text_branch, image=image_branch,
                          hidden=config.fusion_hidden, seed=config.seed)
    if warm_start_text is not None:
        _warm_start(params, warm_start_text, "text")
    if warm_start_image is not None:
        _warm_start(params, warm_start_image, "image")
    if config.freeze_text:
        params.freeze("text/")
    if config.freeze_image:
        params.freeze("image/")

    logger.info(f"Multimodal model: {params.parameter_count()} parameters, "
                f"{sum(t.size for t in params.trainable().values())} trainable")
    return params


def forward(text_batch: Optional[np.ndarray], image_batch: Optional[np.ndarray], params: FusionParams,
            training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Logits [B, K] for the modalities the model's mode consumes"""
    if params.mode in ('text', 'multimodal') and text_batch is None:
        raise InputError(f"{params.mode} mode needs the tweet text")
    if params.mode in ('image', 'multimodal') and image_batch is None:
        raise InputError(f"{params.mode} mode needs the tweet image")

    if params.mode == 'text':
        return text_cnn_forward(text_batch, params.text, 'logits', training, rng)
    if params.mode == 'image':
        return vgg16_forward(image_batch, params.image, 'logits', training, rng)

    text_rows = np.shape(text_batch)[0]
    image_rows = image_batch.shape[0] if isinstance(image_batch, Tensor) else np.shape(image_batch)[0]
    if text_rows != image_rows:
        raise DimensionError("forward", "text and image batches differ in size", (text_rows,), (image_rows,))

    text_features = text_cnn_forward(text_batch, params.text, 'features', training, rng)
    image_features = vgg16_forward(image_batch, params.image, 'fc2', training, rng)
    text_side = ops.relu(ops.dense(text_features, params["fusion/text_proj/weight"], params["fusion/text_proj/bias"]))
    image_side = ops.relu(ops.dense(image_features, params["fusion/image_proj/weight"], params["fusion/image_proj/bias"]))
    joint = ops.concat([text_side, image_side])
    hidden = ops.relu(ops.dense(joint, params["fusion/hidden/weight"], params["fusion/hidden/bias"]))
    return ops.dense(hidden, params["fusion/out/weight"], params["fusion/out/bias"])


def predict(params: FusionParams, text_batch: Optional[np.ndarray] = None,
            image_batch: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Class ids (ties go to the lowest id) and softmax probabilities, inference mode"""
    with no_grad():
        logits = forward(text_batch, image_batch, params, training=False)
    probs = ops.softmax(logits.data.astype(np.float64))
    return probs.argmax(axis=1).astype(np.int64), probs


def restore_model(architecture: Mapping[str, Any], entries: Mapping[str, np.ndarray]) -> FusionParams:
    """Rebuild a classifier from checkpoint metadata and load its tensors"""
    mode = architecture['mode']
    k = architecture['num_classes']
    text = image = None
    text_arch = architecture.get('text')
    if text_arch:
        table = EmbeddingTable(np.zeros((text_arch['vocab_size'], EMBEDDING_DIM), dtype=np.float32),
                               trainable=architecture.get('text_trainable_embeddings', True))
        text = TextCnnParams(table, text_arch['max_len'], text_arch['num_classes'],
                             hidden=text_arch['hidden'], dropout=text_arch['dropout'])
    image_arch = architecture.get('image')
    if image_arch:
        image = vgg16_init(image_arch['num_classes'], image_arch['width_scale'],
                           image_size=image_arch['image_size'])

    if mode == 'multimodal':
        params = FusionParams(mode, k, text=text, image=image, hidden=architecture['fusion_hidden'])
    else:
        params = FusionParams(mode, k, text=text, image=image)
    params.load_entries(entries, strict=True)
    return params
