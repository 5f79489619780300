"""Amortised likelihood-free inference for time series with signature kernels."""

from .errors import SigreError
from .series import Dataset, TimeSeries
from .simulators import get_model, simulate_dataset

__all__ = ["SigreError", "Dataset", "TimeSeries", "get_model", "simulate_dataset"]
__version__ = "0.1.0"
