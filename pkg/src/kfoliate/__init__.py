"""Numerical constant-curvature foliations of the ends of convex-core complements in hyperbolic 3-space."""

__version__ = "0.1.0"
