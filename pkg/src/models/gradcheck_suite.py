"""
Fixed-seed gradient checks over every tensor op and the three composite networks.

Each case builds a scalar from one op (or one network plus cross-entropy) and hands
it to gradient_check. Composite cases run at toy sizes: a short text CNN, VGG16 at
width 1/16 on 8x8 inputs, and the fusion head on top of both.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from config.config import GRADCHECK_MAX_COORDS, GRADCHECK_TOLERANCE
from config.schema import train_config_for
from src.autodiff import ops
from src.autodiff.gradcheck import ERROR_FLOOR, SMOOTH_ERROR_FLOOR, GradCheckReport, gradient_check
from src.autodiff.tensor import Tensor
from src.image.vgg16 import vgg16_forward, vgg16_init
from src.models.fusion import build_model, forward
from src.text.text_cnn import TextCnnParams, text_cnn_forward
from src.text.vocabulary import EMBEDDING_DIM, EmbeddingTable
from src.utils.errors import GradientCheckError

logger = logging.getLogger(__name__)

SMOOTH_TOLERANCE = 1e-5
TOY_WIDTH_SCALE = 1 / 16
TOY_IMAGE_SIZE = 8
TOY_MAX_LEN = 6
TOY_VOCAB = 12


@dataclass
class CheckCase:
    name: str
    builder: Callable[[Dict[str, Tensor]], Tensor]
    params: Dict[str, np.ndarray]
    tolerance: float
    floor: float = ERROR_FLOOR


@dataclass
class CaseResult:
    name: str
    tolerance: float
    report: Optional[GradCheckReport] = None
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and self.report is not None and self.report.passed

    @property
    def max_relative_error(self) -> float:
        return self.report.max_relative_error if self.report is not None else float('nan')


def _projection(shape: Sequence[int], seed: int) -> Tensor:
    return Tensor(np.random.default_rng(seed).standard_normal(shape))


def _scalarize(out: Tensor, seed: int = 99) -> Tensor:
    """Random linear functional of ``out`` so that every output coordinate matters"""
    return ops.sum(ops.mul(out, _projection(out.shape, seed)))


def _op_cases(rng: np.random.Generator, tolerance: float) -> List[CheckCase]:
    def normal(*shape):
        return rng.standard_normal(shape)

    indices = np.array([[2, 0, 3, 3], [1, 4, 0, 2]])
    bn_state = ops.BatchNormState.fresh(5, dtype=np.float64)
    bn_state.running_mean = normal(5) * 0.1
    bn_state.running_var = np.abs(normal(5)) + 0.5
    labels = np.array([0, 2, 1, 2])

    cases = [
        CheckCase("add", lambda p: _scalarize(ops.add(p["a"], p["b"])),
                  {"a": normal(3, 4), "b": normal(3, 4)}, SMOOTH_TOLERANCE),
        CheckCase("mul", lambda p: _scalarize(ops.mul(p["a"], p["b"])),
                  {"a": normal(3, 4), "b": normal(3, 4)}, SMOOTH_TOLERANCE),
        CheckCase("sum", lambda p: ops.sum(ops.mul(p["x"], p["x"])),
                  {"x": normal(2, 5)}, SMOOTH_TOLERANCE),
        CheckCase("reshape", lambda p: _scalarize(ops.reshape(p["x"], (4, 6))),
                  {"x": normal(2, 3, 4)}, SMOOTH_TOLERANCE),
        CheckCase("flatten", lambda p: _scalarize(ops.flatten(p["x"])),
                  {"x": normal(2, 3, 2, 2)}, SMOOTH_TOLERANCE),
        CheckCase("embedding", lambda p: _scalarize(ops.embedding(indices, p["table"], padding_idx=0)),
                  {"table": normal(5, 3)}, SMOOTH_TOLERANCE),
        CheckCase("concat", lambda p: _scalarize(ops.concat([p["a"], p["b"]])),
                  {"a": normal(3, 2), "b": normal(3, 4)}, SMOOTH_TOLERANCE),
        CheckCase("slice_features", lambda p: _scalarize(ops.slice_features(p["x"], 1, 4)),
                  {"x": normal(3, 6)}, SMOOTH_TOLERANCE),
        CheckCase("dense", lambda p: _scalarize(ops.dense(p["x"], p["W"], p["b"])),
                  {"x": normal(4, 5), "W": normal(5, 3), "b": normal(3)}, SMOOTH_TOLERANCE),
        CheckCase("conv1d", lambda p: _scalarize(ops.conv1d(p["x"], p["k"], p["b"])),
                  {"x": normal(2, 6, 4), "k": normal(3, 3, 4), "b": normal(3)}, SMOOTH_TOLERANCE),
        CheckCase("maxpool1d", lambda p: _scalarize(ops.maxpool1d(p["x"], 2)),
                  {"x": normal(2, 7, 3)}, tolerance),
        CheckCase("conv2d", lambda p: _scalarize(ops.conv2d(p["x"], p["k"], p["b"])),
                  {"x": normal(2, 2, 5, 5), "k": normal(3, 2, 3, 3), "b": normal(3)}, SMOOTH_TOLERANCE),
        CheckCase("maxpool2d", lambda p: _scalarize(ops.maxpool2d(p["x"])),
                  {"x": normal(2, 2, 4, 4)}, tolerance),
        CheckCase("relu", lambda p: _scalarize(ops.relu(p["x"])),
                  {"x": normal(3, 5)}, tolerance),
        CheckCase("dropout",
                  lambda p: _scalarize(ops.dropout(p["x"], 0.3, True, np.random.default_rng(5))),
                  {"x": normal(4, 5)}, SMOOTH_TOLERANCE),
        CheckCase("batchnorm[train]",
                  lambda p: _scalarize(ops.batchnorm(p["x"], p["gamma"], p["beta"],
                                                     ops.BatchNormState.fresh(5, np.float64), True)),
                  {"x": normal(6, 5), "gamma": normal(5), "beta": normal(5)}, SMOOTH_TOLERANCE),
        CheckCase("batchnorm[eval]",
                  lambda p: _scalarize(ops.batchnorm(p["x"], p["gamma"], p["beta"], bn_state, False)),
                  {"x": normal(6, 5), "gamma": normal(5), "beta": normal(5)}, SMOOTH_TOLERANCE),
        CheckCase("softmax_cross_entropy", lambda p: ops.softmax_cross_entropy(p["logits"], labels)[0],
                  {"logits": normal(4, 3)}, SMOOTH_TOLERANCE),
    ]
    for case in cases:
        if case.tolerance == SMOOTH_TOLERANCE:
            case.floor = SMOOTH_ERROR_FLOOR
    return cases


def _toy_text_branch(num_classes: Optional[int], seed: int) -> TextCnnParams:
    rng = np.random.default_rng(seed)
    table = EmbeddingTable(rng.uniform(-0.25, 0.25, (TOY_VOCAB, EMBEDDING_DIM)).astype(np.float32))
    table.matrix[0] = 0.0
    return TextCnnParams(table, TOY_MAX_LEN, num_classes, hidden=16, dropout=0.02, seed=seed)


def _composite_cases(seed: int, tolerance: float) -> List[CheckCase]:
    rng = np.random.default_rng([seed, 7])
    tokens = rng.integers(1, TOY_VOCAB, size=(4, TOY_MAX_LEN))
    tokens[:, -1] = 0
    images = rng.standard_normal((3, 3, TOY_IMAGE_SIZE, TOY_IMAGE_SIZE))
    text_labels = np.array([0, 1, 1, 0])
    image_labels = np.array([1, 0, 1])

    text = _toy_text_branch(2, seed)

    def text_graph(p):
        logits = text_cnn_forward(tokens, text.with_tensors(p), 'logits', True, np.random.default_rng(11))
        return ops.softmax_cross_entropy(logits, text_labels)[0]

    image = vgg16_init(2, TOY_WIDTH_SCALE, image_size=TOY_IMAGE_SIZE, seed=seed)

    def image_graph(p):
        logits = vgg16_forward(images, image.with_tensors(p), 'logits', True, np.random.default_rng(13))
        return ops.softmax_cross_entropy(logits, image_labels)[0]

    config = train_config_for('multimodal', width_scale=TOY_WIDTH_SCALE, image_size=TOY_IMAGE_SIZE,
                              fusion_hidden=16, seed=seed)
    fusion = build_model(
        config,
        text_branch=_toy_text_branch(2, seed),
        image_branch=vgg16_init(2, TOY_WIDTH_SCALE, image_size=TOY_IMAGE_SIZE, seed=seed),
        num_classes=2,
    )
    fusion_tokens = tokens[:3]
    # unchecked tensors still run in 64-bit
    fusion_base = {n: Tensor(t.data, dtype=np.float64) for n, t in fusion.tensors.items()}

    def fusion_graph(p):
        params = fusion.with_tensors({**fusion_base, **p})
        logits = forward(fusion_tokens, images, params, True, np.random.default_rng(17))
        return ops.softmax_cross_entropy(logits, image_labels)[0]

    # fusion layers plus one tensor per branch, so the check reaches through the concat
    fusion_names = [n for n in fusion.tensors if n.startswith('fusion/')]
    fusion_names += ["text/conv2/kernel", "text/bn1/gamma", "image/conv1_1/kernel", "image/fc2/weight"]

    return [
        CheckCase("text_cnn", text_graph, {n: t.data for n, t in text.tensors.items()}, tolerance),
        CheckCase("vgg16[1/16]", image_graph, {n: t.data for n, t in image.tensors.items()}, tolerance),
        CheckCase("fusion", fusion_graph, {n: fusion[n].data for n in fusion_names}, tolerance),
    ]


def suite_cases(seed: int = 0, tolerance: float = GRADCHECK_TOLERANCE,
                include_composites: bool = True) -> List[CheckCase]:
    cases = _op_cases(np.random.default_rng(seed), tolerance)
    if include_composites:
        cases.extend(_composite_cases(seed, tolerance))
    return cases


def run_suite(seed: int = 0, tolerance: float = GRADCHECK_TOLERANCE, max_coords: int = GRADCHECK_MAX_COORDS,
              include_composites: bool = True, cases: Optional[List[CheckCase]] = None) -> List[CaseResult]:
    """Run every case; a case that cannot be checked at all is reported as a failure"""
    results = []
    for case in cases if cases is not None else suite_cases(seed, tolerance, include_composites):
        try:
            report = gradient_check(case.builder, case.params, tolerance=case.tolerance,
                                    max_coords=max_coords, seed=seed, floor=case.floor)
            results.append(CaseResult(case.name, case.tolerance, report=report))
        except GradientCheckError as exc:
            results.append(CaseResult(case.name, case.tolerance, error=str(exc)))
        outcome = "ok" if results[-1].passed else "FAILED"
        logger.info(f"gradcheck {case.name}: {outcome} (max rel err {results[-1].max_relative_error:.2e})")
    return results
