"""Probabilistic forecasting of daily water flows with quantile learners."""

from __future__ import annotations

__version__ = "0.1.0"
