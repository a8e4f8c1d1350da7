"""Exceptions and warnings raised by qdist."""

from typing import Optional

import numpy as np


class QdistError(Exception):
    """Base class for all qdist errors."""


class ValidationError(QdistError, ValueError):
    """Input data or parameters are invalid."""


class NumericalError(QdistError, ArithmeticError):
    """A numerical procedure failed."""


class ConvergenceError(NumericalError):
    """An iterative fit did not converge.

    The last iterate is kept on the exception so callers can inspect it.
    """

    def __init__(self, message: str, iterate: Optional[np.ndarray] = None):
        super().__init__(message)
        self.iterate = iterate


class SeparationError(NumericalError):
    """A binomial fit diverged, most likely from complete separation."""

    def __init__(self, message: str = "separation suspected", iterate: Optional[np.ndarray] = None):
        super().__init__(message)
        self.iterate = iterate


class QdistWarning(UserWarning):
    """Base class for qdist warnings."""


class ClampingWarning(QdistWarning):
    """Values outside a basis domain or bin range were clamped."""


class SmoothingWarning(QdistWarning):
    """Smoothing-parameter selection hit a grid endpoint or skipped points."""


class ConvergenceWarning(QdistWarning):
    """An iterative procedure stopped before meeting its tolerance."""


class DegenerateColumnWarning(QdistWarning):
    """A design column was constant and was left out of the fit."""
