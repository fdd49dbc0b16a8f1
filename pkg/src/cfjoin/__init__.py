"""Cutting-and-stacking group actions over R x| SU(2), equidistribution
tools, cocycle counterexample checks and empirical joining classification."""

__version__ = "0.1.0"
