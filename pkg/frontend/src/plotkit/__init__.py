"""Batch CSV-to-figure tool for nsplab output tables."""

from .figures import FigureSpec, plot_ledger, plot_multipliers, plot_rates
from .schemas import (
    SchemaError,
    read_ledger,
    read_metrics,
    read_multipliers,
    read_rates,
)

__all__ = [
    "FigureSpec",
    "SchemaError",
    "plot_ledger",
    "plot_multipliers",
    "plot_rates",
    "read_ledger",
    "read_metrics",
    "read_multipliers",
    "read_rates",
]

__version__ = "0.1.0"
