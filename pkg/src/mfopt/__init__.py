"""Multi-fidelity Bayesian optimization with structured surrogate means
and interactive mid-run policy changes."""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
