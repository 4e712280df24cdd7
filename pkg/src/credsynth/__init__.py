"""Synthetic tabular data for credit scoring: synthesizers, fidelity metrics and a TSTR benchmark."""
from ._kernels import BACKEND
from .tabular import ColumnSchema, DataError, Dataset

__all__ = ["BACKEND", "ColumnSchema", "DataError", "Dataset"]
__version__ = "0.1.0"
