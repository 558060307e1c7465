"""Branched flux-tube constructions and energies for type-I superconductor slabs."""

from .core import (
    Params,
    Rect,
    bulk_value,
    is_good_rect,
    quanta_for_field,
    split_once,
    subdivide,
    validate_params,
)

__all__ = [
    "Params",
    "Rect",
    "bulk_value",
    "is_good_rect",
    "quanta_for_field",
    "split_once",
    "subdivide",
    "validate_params",
]

__version__ = "0.1.0"
