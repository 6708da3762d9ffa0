"""Thermal GAWBS noise in solid and photonic-crystal fibers.

The pipeline runs cross-section -> mesh -> elastic modes (FEM or the analytic
cylinder) -> photoelastic overlap -> shot-noise-referenced spectra.
"""

from .errors import (CalibrationError, GawbsError, GeometryError, MeshError, MeshParseError,
                     NumericalError, ValidationError)
from .geometry import (FUSED_SILICA, FiberCrossSection, Material, OpticalMode, build_pcf,
                       build_standard_fiber)

__version__ = "0.1.0"

__all__ = [
    "CalibrationError", "GawbsError", "GeometryError", "MeshError", "MeshParseError", "NumericalError",
    "ValidationError", "FUSED_SILICA", "FiberCrossSection", "Material", "OpticalMode", "build_pcf",
    "build_standard_fiber", "__version__",
]
