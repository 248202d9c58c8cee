"""Counterfactual machine-learning estimates of a pervasive shock on firm export survival."""

__version__ = "0.1.0"
