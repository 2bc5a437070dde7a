"""Nonparametric, parametric and semiparametric ROC curve estimation."""

__version__ = "0.1.0"
