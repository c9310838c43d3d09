"""Modelling, planning and calibration for a cascaded microwave-to-optical transducer chain."""

from xduct.errors import (
    ConvergenceError,
    InstabilityError,
    MissingFieldError,
    NumericError,
    SingularMatrixError,
    UnidentifiableError,
    ValidationError,
)
from xduct.params import DeviceCard, ModeSpec, QubitSpec, load_device_card, reference_card

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DeviceCard", "InstabilityError", "MissingFieldError", "ModeSpec", "NumericError",
    "QubitSpec", "SingularMatrixError", "UnidentifiableError", "ValidationError", "load_device_card",
    "reference_card",
]
