"""
Error types raised across the package.

Every error derives from CrisisFusionError and from the built-in exception a caller
would otherwise expect (ValueError for bad inputs, RuntimeError for failures during
a computation), so plain ``except ValueError`` handlers keep working.
"""
from typing import Optional, Sequence


class CrisisFusionError(Exception):
    """Base class for all package errors"""


class DimensionError(CrisisFusionError, ValueError):
    """Tensor shapes do not satisfy an op's shape algebra"""

    def __init__(self, op: str, message: str, *shapes: Sequence[int]):
        shapes_text = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: {message}" + (f" (shapes: {shapes_text})" if shapes else ""))
        self.op = op
        self.shapes = [tuple(s) for s in shapes]


class SequenceTooShortError(DimensionError):
    def __init__(self, length: int, window: int):
        super().__init__("conv1d", f"sequence length L={length} is shorter than window W={window}")
        self.length = length
        self.window = window


class EmptyOutputError(DimensionError):
    def __init__(self, op: str, length: int, pool_len: int):
        super().__init__(op, f"pool_len={pool_len} exceeds input length L={length}; output would be empty")


class ParameterError(CrisisFusionError, ValueError):
    """Hyperparameter outside its valid range"""


class BatchTooSmallError(CrisisFusionError, ValueError):
    def __init__(self, batch: int):
        super().__init__(f"batchnorm needs at least 2 examples in training mode, got B={batch}")
        self.batch = batch


class LabelError(CrisisFusionError, ValueError):
    """Class id out of range, or a label outside the task vocabulary"""

    def __init__(self, message: str, index: Optional[int] = None, line: Optional[int] = None):
        where = []
        if index is not None:
            where.append(f"index {index}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(message + (f" ({', '.join(where)})" if where else ""))
        self.index = index
        self.line = line


class ContractError(CrisisFusionError, RuntimeError):
    """An API was called outside its documented precondition"""


class NonFiniteError(CrisisFusionError, RuntimeError):
    def __init__(self, op: str):
        super().__init__(f"{op}: produced NaN or Inf values")
        self.op = op


class GradientCheckError(CrisisFusionError, RuntimeError):
    def __init__(self, parameter: str, message: str):
        super().__init__(f"gradient check failed for '{parameter}': {message}")
        self.parameter = parameter


class ConfigurationError(CrisisFusionError, ValueError):
    """Inconsistent or unusable configuration"""


class DivergenceError(CrisisFusionError, RuntimeError):
    def __init__(self, epoch: int, batch: int, detail: str = "non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {detail}")
        self.epoch = epoch
        self.batch = batch


class IncompatibilityError(CrisisFusionError, ValueError):
    """Checkpoint or branch shapes disagree with the model being built"""

    def __init__(self, message: str, tensor: Optional[str] = None):
        super().__init__(message + (f" (first mismatch: '{tensor}')" if tensor else ""))
        self.tensor = tensor


class SchemaError(CrisisFusionError, ValueError):
    """Annotation file is missing required columns or values"""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message + (f" (line {line})" if line is not None else ""))
        self.line = line


class DuplicationError(CrisisFusionError, ValueError):
    def __init__(self, tweet_id: str, image_id: str, line: int):
        super().__init__(f"duplicate record tweet_id={tweet_id} image_id={image_id} (line {line})")
        self.line = line


class InputError(CrisisFusionError, ValueError):
    """Unusable user input: bad raster, missing modality, missing path"""


class FormatError(CrisisFusionError, ValueError):
    """Malformed embedding file or checkpoint container"""

    def __init__(self, message: str, line: Optional[int] = None, offset: Optional[int] = None):
        where = f" (line {line})" if line is not None else (f" (byte offset {offset})" if offset is not None else "")
        super().__init__(message + where)
        self.line = line
        self.offset = offset


# Errors the CLI reports with exit code 2 (usage / input)
USAGE_ERRORS = (
    InputError,
    SchemaError,
    DuplicationError,
    LabelError,
    FormatError,
    ConfigurationError,
    FileNotFoundError,
)
