"""Exception types shared across the package."""

from __future__ import annotations


class FluxbranchError(Exception):
    """Base class for all package errors."""


class ConstraintViolated(FluxbranchError):
    """A physical-parameter inequality failed.

    The ``name`` attribute identifies the violated inequality, e.g.
    ``"kappa <= 1/2"`` or ``"kappa*T >= 1"``.
    """

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        super().__init__(f"{name}" + (f": {detail}" if detail else ""))


class NotGood(FluxbranchError):
    """Rectangle is not B*-good (aspect ratio or flux quantization)."""


class Infeasible(FluxbranchError):
    """Construction parameters cannot be realized; ``name`` cites the condition."""

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        super().__init__(f"{name}" + (f": {detail}" if detail else ""))


class AreaMismatch(FluxbranchError):
    """Tube endpoints have different areas beyond reconciliation tolerance."""


class TooShort(FluxbranchError):
    """Tube segment is shorter than the configured multiple of its cross-section."""


class FluxMismatch(FluxbranchError):
    """Total flux of a trace or field does not match the applied field."""


class ResolutionTooCoarse(FluxbranchError):
    """Grid spacing too coarse to resolve the diffuse interface shell."""


class NotDivergenceFree(FluxbranchError):
    """Discrete divergence residual above tolerance."""


class DimMismatch(FluxbranchError):
    """Grid fields have incompatible shapes or spacings."""


class BadScales(FluxbranchError):
    """Averaging scales must satisfy 0 < ell <= r."""


class ScalesInadmissible(FluxbranchError):
    """(r, ell) violate the admissibility window for the lower-bound audit."""


class MixedRegimes(FluxbranchError):
    """Scaling fit requires all rows to lie in a single parameter regime."""


class TooFewPoints(FluxbranchError):
    """Scaling fit requires at least four rows."""


class ConfigError(FluxbranchError):
    """Malformed or unknown configuration entry."""
