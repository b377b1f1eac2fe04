"""Exception types shared across the package."""

from __future__ import annotations


class SlaglabError(Exception):
    """Base class for all package-specific failures."""


class JacobiConvergenceError(SlaglabError):
    """Cyclic Jacobi failed to reach the off-diagonal target within the sweep cap."""

    def __init__(self, sweeps: int, offdiag_norm: float, target: float):
        self.sweeps = sweeps
        self.offdiag_norm = offdiag_norm
        self.target = target
        super().__init__(
            f"Jacobi eigensolver did not converge in {sweeps} sweeps: "
            f"off-diagonal norm {offdiag_norm:.3e} > target {target:.3e}"
        )


class PoleError(SlaglabError, ValueError):
    """A rotated eigenvalue angle landed on (or within tolerance of) a tangent pole."""

    def __init__(self, message: str, angle: float | None = None, where=None):
        self.angle = angle
        self.where = where
        super().__init__(message)


class BranchError(SlaglabError, ValueError):
    """A matrix or field left the admissible branch of its operator."""

    def __init__(self, message: str, where=None):
        self.where = where
        super().__init__(message)


class NonConvexFieldError(SlaglabError, ValueError):
    """A grid potential failed a required convexity (or shifted convexity) check."""

    def __init__(self, message: str, worst_eigenvalue: float, where=None):
        self.worst_eigenvalue = worst_eigenvalue
        self.where = where
        super().__init__(message)


class ExpansionError(SlaglabError, ValueError):
    """Rotated sample points collided: the distance-expansion guarantee failed."""


class NewtonStagnationError(SlaglabError):
    """Damped Newton made no sufficient progress; carries the partial report."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class GridFormatError(SlaglabError, ValueError):
    """A grid file violated the container format. ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")


class NotASolutionError(SlaglabError, ValueError):
    """A field handed to a solution-only diagnostic does not solve its equation."""

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)
