"""Limit order book toolkit: LOBSTER parsing and cleaning, microstructure
statistics, forecasting datasets, evaluation and a synthetic book generator."""

from .errors import DataError, InvalidConfig, LobkitError
from .lobster_io import DaySeries, LobSnapshot, clean_day, parse_day

__version__ = "0.1.0"

__all__ = ["DaySeries", "LobSnapshot", "parse_day", "clean_day",
           "LobkitError", "DataError", "InvalidConfig"]
