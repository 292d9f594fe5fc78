"""Complex-baseband signal containers and dB/power helpers.

Everything downstream (tx, channel, rx, estimators) works on these two
value types. Amplitudes are dimensionless and the QPSK constellation is
normalized to unit average power, so the per-symbol SNR at the decision
point is simply 1/noise_power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_complex_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class IqStream:
    """Uniformly sampled complex baseband waveform."""

    samples: np.ndarray
    sample_rate: float  # Hz

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_complex_vector(self.samples, "samples"))
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return self.samples.size

    def times(self) -> np.ndarray:
        """Sample timestamps in seconds."""
        return np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True, eq=False)
class SymbolBlock:
    """One-sample-per-symbol complex sequence used for estimation/decision."""

    symbols: np.ndarray
    symbol_rate: float  # Hz

    def __post_init__(self):
        object.__setattr__(self, "symbols", _as_complex_vector(self.symbols, "symbols"))
        if not self.symbol_rate > 0:
            raise ValueError("symbol_rate must be positive")

    def __len__(self) -> int:
        return self.symbols.size


def average_power(block: SymbolBlock) -> float:
    """Mean of |symbol|^2 over the block.

    Raises
    ------
    ValueError
        On an empty input (cannot happen through SymbolBlock, but raw
        arrays are accepted for convenience).
    """
    symbols = block.symbols if isinstance(block, SymbolBlock) else np.asarray(block)
    if symbols.size == 0:
        raise ValueError("empty input")
    return float(np.mean(np.abs(symbols) ** 2))


def db_to_linear(x):
    """Power ratio from dB: 10^(x/10)."""
    return 10.0 ** (np.asarray(x, dtype=np.float64) / 10.0) if np.ndim(x) else 10.0 ** (x / 10.0)


def linear_to_db(x):
    """dB from a positive power ratio."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr <= 0):
        raise ValueError("non-positive power")
    out = 10.0 * np.log10(arr)
    return out if np.ndim(x) else float(out)
