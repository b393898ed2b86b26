"""Bayesian composite risk for sequential decisions under parameter uncertainty."""

__version__ = "0.1.0"
