"""Exceptions raised by the numerical kernels, the losses and the trainer."""
from __future__ import annotations

from typing import Any


class DomainError(ValueError):
    """An argument lies outside the domain of the operation.

    ``location`` identifies the offending element when the call covered a
    batch or a grid (a pair index, or a dict of grid coordinates).
    """

    def __init__(self, message: str, location: Any = None) -> None:
        super().__init__(message)
        self.location = location

    def at(self, location: Any, prefix: str = "") -> "DomainError":
        """Return a copy of this error tagged with ``location``."""
        message = f"{prefix}{self}" if prefix else str(self)
        return type(self)(message, location=location)


class DegenerateGradientError(ArithmeticError):
    """The MLS gradient is requested at the antipodal singularity (kappa_tilde ~ 0)."""

    def __init__(self, message: str, location: Any = None) -> None:
        super().__init__(message)
        self.location = location


class TrainingDivergedError(RuntimeError):
    """The training loss grew beyond the divergence factor of its initial value."""

    def __init__(self, step: int, loss: float, initial_loss: float) -> None:
        super().__init__(
            f"loss {loss:.6g} at step {step} exceeds 10x the initial loss {initial_loss:.6g}"
        )
        self.step = step
        self.loss = loss
        self.initial_loss = initial_loss
