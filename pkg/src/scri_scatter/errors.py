"""Exception types raised by the solvers and audits."""

from __future__ import annotations


class ScriScatterError(RuntimeError):
    """Base class; ``details`` carries machine-readable diagnostics."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "details": self.details}


class WorldtubeContamination(ScriScatterError):
    """Field reached the inner worldtube while the strict monitor was armed."""


class NonlinearDivergence(ScriScatterError):
    """A local Picard loop for the cubic term failed to converge."""


class NoContraction(ScriScatterError):
    """Global Picard iteration stopped contracting."""


class CFLViolation(ScriScatterError):
    """Time step too large for the lattice."""


class BoundaryContamination(ScriScatterError):
    """Cauchy field support reached the outer edge of the r* interval."""


class ConeOutsideDomain(ScriScatterError):
    """Requested null cone leaves the computed (t, r*) trapezoid."""


class FoliationOutsideDomain(ScriScatterError):
    """Energy foliation is not covered by the field lattice."""


class ExtractionInconsistency(ScriScatterError):
    """Two extraction radii produced different scri traces."""


class NonFiniteField(ScriScatterError):
    """NaN or Inf detected in a solver field."""
