"""Fractional k-Hessian operators as infima of anisotropic nonlocal operators."""

__version__ = "0.1.0"
