from src.autodiff.tensor import Tape, Tensor, backward, default_dtype, no_grad, precision
from src.autodiff.gradcheck import GradCheckReport, gradient_check

__all__ = [
    'GradCheckReport',
    'Tape',
    'Tensor',
    'backward',
    'default_dtype',
    'gradient_check',
    'no_grad',
    'precision',
]
