"""
Exception hierarchy for the slice-flow lab.

Library code raises these; the run_* scripts and main.py catch them and
turn them into exit codes (1 for experiment failures, 2 for bad configuration).
"""

from typing import Optional


class YMLabError(Exception):
    """Base class for every domain failure raised by the lab"""


class GridError(YMLabError, ValueError):
    """Field shapes do not match a valid grid, or two fields live on different grids"""


class ParameterRangeError(YMLabError, ValueError):
    """A numerical parameter is outside its admissible range"""


class ExperimentConfigError(YMLabError, ValueError):
    """Experiment configuration failed validation"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        if key is not None and key not in message:
            message = f"{key}: {message}"
        super().__init__(message)


class NoConvergence(YMLabError):
    """An iterative solver (gauge fixing, Kuranishi) did not reach its tolerance"""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class DidNotConverge(YMLabError):
    """A gradient flow reached t_max before the gradient tolerance; carries the partial trajectory"""

    def __init__(self, message: str, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class StepRejected(YMLabError):
    """A flow step increased the energy; the caller halves the step size"""

    def __init__(self, message: str, energy_before: float, energy_after: float):
        self.energy_before = energy_before
        self.energy_after = energy_after
        super().__init__(message)


class InsufficientDecay(YMLabError):
    """A decay fit was requested on a series that did not decay enough"""


class NotNearFlat(YMLabError):
    """A connection expected to be (nearly) flat has too much curvature"""


class NonCommuting(YMLabError):
    """Holonomies do not commute within tolerance"""

    def __init__(self, message: str, commutator_norm: float):
        self.commutator_norm = commutator_norm
        super().__init__(message)


class AmbiguousKernel(YMLabError):
    """A mode eigenvalue sits too close to the kernel threshold to classify"""


class DegenerateRay(YMLabError):
    """Every distance along a scanned ray is numerically zero"""


class SelftestFailure(YMLabError):
    """One or more invariant self-test checks failed"""

    def __init__(self, message: str, failed: int):
        self.failed = failed
        super().__init__(message)
