"""Computable machinery for Besov spaces of variable smoothness."""

from varsmooth.logging_config import configure_logging

configure_logging()

__all__ = ["configure_logging"]
