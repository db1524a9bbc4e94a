"""Peridynamic enrichment of a flat-top partition of unity elasticity solver."""

from pdpum.materials import Material, calibrate, lame_parameters

__all__ = ["Material", "calibrate", "lame_parameters"]
__version__ = "0.1.0"
