"""Superexpressive fixed-architecture network construction and audit toolkit."""

from .scalar import (
    DEFAULT_PRECISION,
    Activation,
    BigReal,
    DomainError,
    frac,
    nu,
    psi,
    sigma3,
    sigma3_deriv,
    theta,
)

__all__ = [
    "DEFAULT_PRECISION",
    "Activation",
    "BigReal",
    "DomainError",
    "frac",
    "nu",
    "psi",
    "sigma3",
    "sigma3_deriv",
    "theta",
]

__version__ = "0.1.0"
