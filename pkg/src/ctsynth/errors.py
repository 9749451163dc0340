"""Exception hierarchy for the package.

Every error carries a short machine-readable ``category`` that the CLI maps
to a distinct exit code (see ``ctsynth.cli``).
"""
from __future__ import annotations


class CtSynthError(Exception):
    """Base class for all package errors."""

    category = "error"


# --- data-contract violations (dims, values, wire formats) ---------------

class GridError(CtSynthError):
    """Invalid grid construction: bad dims, spacing, or payload shape."""

    category = "data"


class ShapeMismatchError(CtSynthError):
    """Two grids that must share dims do not."""

    category = "data"


class MaskValueError(CtSynthError):
    """Mask payload contains values outside its allowed label set."""

    category = "data"


class StructureTooLargeError(CtSynthError):
    """Morphology structuring element does not fit inside the grid."""

    category = "data"


class EmptyMaskError(CtSynthError):
    """An operation requires a non-empty mask."""

    category = "data"


class ZeroVarianceError(CtSynthError):
    """Normalization requested on a constant volume."""

    category = "data"


class TrajectoryFormatError(CtSynthError):
    """Metric-trajectory records violate the JSONL wire contract."""

    category = "data"


# --- file I/O -------------------------------------------------------------

class NiftiError(CtSynthError):
    category = "io"


class CorruptHeaderError(NiftiError):
    """File too short, bad magic, or inconsistent header bytes."""


class UnsupportedFormatError(NiftiError):
    """Valid NIfTI, but a datatype/layout this codec does not support."""


class InvalidGeometryError(NiftiError):
    """Header declares non-positive dims or spacing."""


# --- configuration --------------------------------------------------------

class ConfigError(CtSynthError):
    category = "config"


# --- generation -----------------------------------------------------------

class GenerationError(CtSynthError):
    category = "generation"


class SubResolutionError(GenerationError):
    """Requested tumor geometry is below one voxel on some axis."""


class PlacementExhaustedError(GenerationError):
    """No valid tumor location found within the attempt budget."""
