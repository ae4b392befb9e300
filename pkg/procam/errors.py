"""
Exception hierarchy for the procam toolkit
"""

from typing import Iterable, Optional


class ProcamError(Exception):
    """Root of every error raised by the toolkit"""


class NonPositiveDepth(ProcamError):
    """A point lies on or behind the device plane"""


class DegenerateConfiguration(ProcamError, ValueError):
    """Input points cannot determine the requested model"""


class RankDeficient(DegenerateConfiguration):
    """Design matrix has lower numerical rank than the model needs"""


class PointAtInfinity(ProcamError):
    """Homogeneous scale vanished after a projective mapping"""


class GimbalLock(ProcamError):
    """XYZ-Euler decomposition is not unique (|cos nu| ~ 0)"""


class ModelSingularity(ProcamError):
    """Division-model denominator vanished or went negative"""


class NoRealRoot(ProcamError):
    """Division model cannot be inverted inside the admissible radius"""


class NonConvergence(ProcamError):
    """Optimizer hit its iteration limit without meeting a tolerance"""


class DegenerateAxis(ProcamError):
    """Principal axis parallel to the board x-axis"""


class DimensionMismatch(ProcamError, ValueError):
    """Aligned inputs disagree in length or shape"""


class InsufficientSupport(ProcamError):
    """Too few decodable pixels around a corner for a local homography"""

    def __init__(self, corner_index: int, support: int, message: Optional[str] = None):
        self.corner_index = corner_index
        self.support = support
        super().__init__(
            message or f"corner {corner_index}: only {support} decodable pixels in window"
        )


class OutOfFrame(ProcamError):
    """Board corners projecting outside a device image"""

    def __init__(self, device: str, indices: Iterable[int]):
        self.device = device
        self.indices = list(indices)
        super().__init__(f"{device}: corners {self.indices} fall outside the image")


class SchemaError(ProcamError, ValueError):
    """File content violates its schema or an invariant"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class CalibrationStageError(ProcamError):
    """Failure inside a labelled pipeline stage"""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
