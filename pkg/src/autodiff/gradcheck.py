"""
Finite-difference verification of backward rules.

The harness re-runs a scalar-valued builder in 64-bit mode, compares the taped
gradient with central differences (h = 1e-3) on sampled coordinates and reports the
worst relative error per parameter. The taped gradient is compared with the
Richardson combination of the h and h/2 differences.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Union

import numpy as np

from src.autodiff.tensor import Tape, Tensor, backward, no_grad, precision
from src.utils.errors import GradientCheckError, NonFiniteError

logger = logging.getLogger(__name__)

Builder = Callable[[Dict[str, Tensor]], Tensor]

STEP = 1e-3
ERROR_FLOOR = 1e-2
SMOOTH_ERROR_FLOOR = 1e-4


@dataclass
class ParameterCheck:
    name: str
    max_relative_error: float
    checked: int
    skipped: int
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    parameters: List[ParameterCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.parameters)

    @property
    def max_relative_error(self) -> float:
        return max((p.max_relative_error for p in self.parameters), default=0.0)

    def failures(self) -> List[ParameterCheck]:
        return [p for p in self.parameters if not p.passed]

    def raise_on_failure(self):
        failed = self.failures()
        if failed:
            worst = max(failed, key=lambda p: p.max_relative_error)
            raise GradientCheckError(
                worst.name,
                f"max relative error {worst.max_relative_error:.3e} exceeds {self.tolerance:.0e}",
            )


def relative_error(analytic: float, numeric: float, floor: float = ERROR_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(builder: Builder,
                   params: Mapping[str, Union[Tensor, np.ndarray]],
                   tolerance: float = 1e-4,
                   max_coords: int = 12,
                   seed: int = 0,
                   step: float = STEP,
                   floor: float = ERROR_FLOOR) -> GradCheckReport:
    """
    Compare analytic and numeric gradients of ``builder`` for every named parameter.

    ``floor`` bounds the denominator of the relative error; below it the check is
    absolute (tolerance x floor).

    ``builder`` must be a pure function of the tensors it receives (recreate any
    dropout generator inside it) because it is evaluated many times.
    """
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)

    with precision(np.float64):
        tensors = {
            name: Tensor(np.array(value.data if isinstance(value, Tensor) else value, dtype=np.float64),
                         requires_grad=True, name=name)
            for name, value in params.items()
        }

        with Tape():
            loss = builder(tensors)
            backward(loss, params=tensors.values())

        for name, tensor in tensors.items():
            analytic = tensor.grad
            if analytic is None or not np.all(np.isfinite(analytic)):
                raise GradientCheckError(name, "analytic gradient is missing or non-finite")
            report.parameters.append(
                _check_parameter(builder, tensors, name, analytic, tolerance, max_coords, rng, step, floor)
            )

    for entry in report.parameters:
        level = logging.DEBUG if entry.passed else logging.WARNING
        logger.log(level, f"gradcheck {entry.name}: max rel err {entry.max_relative_error:.2e} "
                          f"({entry.checked} coords, {entry.skipped} skipped at kinks)")
    return report


def _check_parameter(builder, tensors, name, analytic, tolerance, max_coords, rng, step, floor) -> ParameterCheck:
    flat_analytic = analytic.reshape(-1)
    size = flat_analytic.size
    candidates = np.arange(size) if size <= max_coords else rng.permutation(size)

    worst = 0.0
    checked = 0
    skipped = 0
    for coord in candidates:
        if checked >= max_coords or skipped > 2 * max_coords:
            break
        numeric = _central_difference(builder, tensors, name, int(coord), step)
        numeric_half = _central_difference(builder, tensors, name, int(coord), step / 2)
        if relative_error(numeric, numeric_half) > tolerance:
            # the +/- h step straddles a ReLU or max-pool kink
            skipped += 1
            continue
        extrapolated = (4.0 * numeric_half - numeric) / 3.0
        worst = max(worst, relative_error(float(flat_analytic[coord]), extrapolated, floor))
        checked += 1

    if checked == 0:
        raise GradientCheckError(name, "every sampled coordinate sits on a non-differentiable point")
    return ParameterCheck(name, worst, checked, skipped, worst <= tolerance)


def _central_difference(builder, tensors, name, coord, step) -> float:
    flat = tensors[name].data.reshape(-1)
    original = flat[coord]
    try:
        with no_grad():
            flat[coord] = original + step
            plus = builder(tensors).item()
            flat[coord] = original - step
            minus = builder(tensors).item()
    except NonFiniteError as exc:
        raise GradientCheckError(name, f"numeric difference produced non-finite values ({exc})") from exc
    finally:
        flat[coord] = original
    numeric = (plus - minus) / (2 * step)
    if not np.isfinite(numeric):
        raise GradientCheckError(name, "numeric gradient is non-finite")
    return numeric
