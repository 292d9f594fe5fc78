"""Coherent-QPSK deep-fading link simulator with blind SNR estimation."""

from .signal_core import IqStream, SymbolBlock, average_power, db_to_linear, linear_to_db

__all__ = [
    "IqStream",
    "SymbolBlock",
    "average_power",
    "db_to_linear",
    "linear_to_db",
]

__version__ = "0.1.0"
