"""Concentration bounds for polynomial chaos in variables with alpha-subexponential tails."""

__version__ = "0.1.0"
