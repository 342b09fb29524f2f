"""
VGG16-shaped image branch with a uniform width multiplier.

Thirteen 3x3 conv layers in five blocks, 2x2 max-pool after each block, then
fc1 -> fc2 -> K-way head. At the reference input size (224) the spatial size
after block k is 224 / 2**k and the flatten width is 512*s*7*7. Smaller inputs
are supported for desk runs: a block pools only while its spatial size is even.
"""
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.image.preprocessing import IMAGE_SIZE
from src.models.params import ParamSet, he_normal
from src.storage.checkpoint import load_checkpoint
from src.utils.errors import ConfigurationError, DimensionError, IncompatibilityError

logger = logging.getLogger(__name__)

BLOCKS: Tuple[Tuple[int, ...], ...] = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512), (512, 512, 512))
FC_WIDTH = 4096
FC_DROPOUT = 0.5
HEAD_PREFIX = "image/head"


def scaled(width: int, width_scale: float) -> int:
    return max(1, int(round(width * width_scale)))


def pooling_schedule(image_size: int) -> Tuple[List[bool], int]:
    """Which blocks pool, and the spatial size left after the last block"""
    size = image_size
    pools = []
    for _ in BLOCKS:
        pool = size % 2 == 0
        pools.append(pool)
        if pool:
            size //= 2
    return pools, size


def layer_shapes(num_classes: Optional[int], width_scale: float = 1.0,
                 image_size: int = IMAGE_SIZE) -> "OrderedDict[str, Tuple[int, ...]]":
    """Every tensor name and shape of the branch, in forward order, without allocating"""
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    channels = 3
    for b, block in enumerate(BLOCKS, start=1):
        for i, base in enumerate(block, start=1):
            filters = scaled(base, width_scale)
            shapes[f"image/conv{b}_{i}/kernel"] = (filters, channels, 3, 3)
            shapes[f"image/conv{b}_{i}/bias"] = (filters,)
            channels = filters
    _, final = pooling_schedule(image_size)
    flat = channels * final * final
    fc = scaled(FC_WIDTH, width_scale)
    shapes["image/fc1/weight"] = (flat, fc)
    shapes["image/fc1/bias"] = (fc,)
    shapes["image/fc2/weight"] = (fc, fc)
    shapes["image/fc2/bias"] = (fc,)
    if num_classes is not None:
        shapes[f"{HEAD_PREFIX}/weight"] = (fc, num_classes)
        shapes[f"{HEAD_PREFIX}/bias"] = (num_classes,)
    return shapes


class VggParams(ParamSet):
    def __init__(self, num_classes: Optional[int], width_scale: float = 1.0,
                 image_size: int = IMAGE_SIZE, seed: int = 0):
        super().__init__()
        if not 0 < width_scale <= 1:
            raise ConfigurationError(f"width_scale must be in (0, 1], got {width_scale}")
        self.num_classes = num_classes
        self.width_scale = width_scale
        self.image_size = image_size
        self.pools, self.final_size = pooling_schedule(image_size)
        if image_size == IMAGE_SIZE:
            assert self.final_size == 7 and all(self.pools)

        rng = np.random.default_rng(seed)
        for name, shape in layer_shapes(num_classes, width_scale, image_size).items():
            if name.endswith('/bias'):
                self.add(name, np.zeros(shape, dtype=np.float32))
            elif name.endswith('/kernel'):
                self.add(name, he_normal(rng, shape, shape[1] * 9))
            else:
                self.add(name, he_normal(rng, shape, shape[0]))

    @property
    def feature_dim(self) -> int:
        return self["image/fc2/bias"].shape[0]

    @property
    def flatten_dim(self) -> int:
        return self["image/fc1/weight"].shape[0]

    def architecture(self) -> Dict[str, Any]:
        return {
            'num_classes': self.num_classes,
            'width_scale': self.width_scale,
            'image_size': self.image_size,
        }


def _check_pretrained(entries: Mapping[str, np.ndarray], expected: Mapping[str, Tuple[int, ...]]):
    for name, shape in expected.items():
        if name.startswith(HEAD_PREFIX):
            continue
        if name not in entries:
            raise IncompatibilityError("pretrained checkpoint is missing a tensor", tensor=name)
        found = tuple(np.shape(entries[name]))
        if found != tuple(shape):
            raise IncompatibilityError(f"pretrained shape {found}, layer expects {tuple(shape)}", tensor=name)


def vgg16_init(num_classes: Optional[int], width_scale: float = 1.0,
               pretrained: Optional[Union[str, Path, Mapping[str, np.ndarray]]] = None,
               image_size: int = IMAGE_SIZE, seed: int = 0) -> VggParams:
    """
    He-initialized branch, or conv/fc tensors copied from a converted ImageNet checkpoint.
    The head is always fresh. Pretrained shapes are checked before any allocation.
    """
    entries = None
    if pretrained is not None:
        if width_scale != 1.0:
            raise IncompatibilityError(f"pretrained weights need width_scale=1, got {width_scale}")
        if isinstance(pretrained, (str, Path)):
            logger.info(f"Loading pretrained VGG16 weights from {pretrained}")
            entries, _ = load_checkpoint(pretrained)
        else:
            entries = pretrained
        _check_pretrained(entries, layer_shapes(num_classes, width_scale, image_size))

    params = VggParams(num_classes, width_scale=width_scale, image_size=image_size, seed=seed)
    if entries is not None:
        body = [name for name in params.tensors if not name.startswith(HEAD_PREFIX)]
        params.load_entries(entries, strict=True, names=body)
        logger.info(f"Initialized {len(body)} VGG16 tensors from pretrained weights; head is fresh")
    else:
        logger.debug(f"VGG16 at width_scale={width_scale}: {params.parameter_count()} parameters, He init")
    return params


def vgg16_forward(batch, params: VggParams, mode: str = 'logits', training: bool = False,
                  rng: Optional[np.random.Generator] = None) -> Tensor:
    """[B,3,S,S] images -> fc2 activations [B, 4096*s] or head logits [B, K]"""
    x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch))
    expected = (3, params.image_size, params.image_size)
    if x.data.ndim != 4 or x.shape[1:] != expected:
        raise DimensionError("vgg16_forward", f"expected images [B, {', '.join(map(str, expected))}]", x.shape)
    if mode not in ('fc2', 'logits'):
        raise ValueError(f"mode must be 'fc2' or 'logits', got '{mode}'")
    if mode == 'logits' and params.num_classes is None:
        raise ConfigurationError("this VGG16 branch was built without a head")

    for b, (block, pool) in enumerate(zip(BLOCKS, params.pools), start=1):
        for i in range(1, len(block) + 1):
            x = ops.relu(ops.conv2d(x, params[f"image/conv{b}_{i}/kernel"], params[f"image/conv{b}_{i}/bias"]))
        if pool:
            x = ops.maxpool2d(x)

    x = ops.flatten(x)
    x = ops.relu(ops.dense(x, params["image/fc1/weight"], params["image/fc1/bias"]))
    x = ops.dropout(x, FC_DROPOUT, training, rng)
    x = ops.relu(ops.dense(x, params["image/fc2/weight"], params["image/fc2/bias"]))
    if mode == 'fc2':
        return x
    return ops.dense(x, params[f"{HEAD_PREFIX}/weight"], params[f"{HEAD_PREFIX}/bias"])
