"""Heckman two-step selection estimator with learned prediction-feature assignment."""

__version__ = "0.1.0"
