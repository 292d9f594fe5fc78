"""Block-wise blind SNR estimation: M2M4 moments and EVM.

The M2M4 estimator depends only on symbol magnitudes, so it is exactly
insensitive to any per-symbol phase rotation. EVM against decided symbols
(the blind variant) is biased high at low SNR because decision errors
shrink the measured error vectors; the data-aided variant exists for
calibration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .rxchain import hard_decision
from .signal_core import SymbolBlock

REFERENCE_POWER = 1.0  # constellation normalized so P0 = 1
SNR_CAP = 1e6  # linear saturation for zero-denominator cases (60 dB)
_DENOM_EPS = 1e-9

M2M4 = "m2m4"
EVM_BLIND = "evm-blind"
EVM_AIDED = "evm-aided"
_METHODS = (M2M4, EVM_BLIND, EVM_AIDED)


@dataclass(frozen=True)
class MomentPair:
    m2: float
    m4: float

    def __post_init__(self):
        if not (np.isfinite(self.m2) and np.isfinite(self.m4)):
            raise ValueError("moments must be finite")
        if self.m2 < 0 or self.m4 < 0:
            raise ValueError("moments must be non-negative")
        # Cauchy-Schwarz on |s|^2; allow fp slack
        if self.m4 < self.m2**2 * (1.0 - 1e-12):
            raise ValueError("m4 < m2^2 violates Cauchy-Schwarz")


@dataclass(frozen=True)
class SnrEstimate:
    value: float  # linear SNR ratio, >= 0, saturates at SNR_CAP
    method: str
    block_index: int = 0
    block_len: int = 1

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("SNR estimate must be >= 0")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method: {self.method!r}")
        if self.block_len < 1:
            raise ValueError("block_len must be >= 1")


def compute_moments(block: SymbolBlock) -> MomentPair:
    """Second and fourth absolute moments of the block."""
    p = np.abs(block.symbols) ** 2
    if p.size == 0:
        raise ValueError("empty input")
    return MomentPair(m2=float(np.mean(p)), m4=float(np.mean(p**2)))


def m2m4_snr(moments: MomentPair, block_index: int = 0, block_len: int = 1) -> SnrEstimate:
    """QPSK M2M4 estimate: sqrt(2*m2^2 - m4) / (m2 - sqrt(2*m2^2 - m4)).

    A negative radicand (noise-dominated finite-N fluctuation) clamps to
    zero signal power; a vanishing denominator saturates at SNR_CAP.
    """
    m2, m4 = moments.m2, moments.m4
    if m2 == 0.0:
        return SnrEstimate(0.0, M2M4, block_index, block_len)
    signal = np.sqrt(max(2.0 * m2**2 - m4, 0.0))
    noise = m2 - signal
    if noise <= _DENOM_EPS * m2:
        return SnrEstimate(SNR_CAP, M2M4, block_index, block_len)
    return SnrEstimate(min(float(signal / noise), SNR_CAP), M2M4, block_index, block_len)


def evm_snr(
    received: SymbolBlock,
    reference: SymbolBlock,
    method: str = EVM_AIDED,
    block_index: int = 0,
) -> SnrEstimate:
    """EVM-based estimate: P0 / mean |received - reference|^2."""
    if received.symbols.size != reference.symbols.size:
        raise ValueError("length mismatch")
    err = float(np.mean(np.abs(received.symbols - reference.symbols) ** 2))
    n = received.symbols.size
    if err == 0.0:
        return SnrEstimate(SNR_CAP, method, block_index, n)
    return SnrEstimate(min(REFERENCE_POWER / err, SNR_CAP), method, block_index, n)


def evm_snr_blind(received: SymbolBlock, block_index: int = 0) -> SnrEstimate:
    """EVM against the receiver's own hard decisions."""
    return evm_snr(received, hard_decision(received), EVM_BLIND, block_index)


def blockwise_estimate(
    symbols: SymbolBlock,
    block_len: int = 10_000,
    methods: Iterable[str] = (M2M4, EVM_BLIND),
    reference: SymbolBlock | None = None,
) -> list[SnrEstimate]:
    """Partition into consecutive non-overlapping blocks and estimate.

    One SnrEstimate per method per block; the trailing partial block is
    dropped. Block k is timestamped at its center, (k + 0.5) * block_len /
    symbol_rate (see block_time). EVM_AIDED requires a reference block of
    matching length.
    """
    if block_len < 100:
        raise ValueError("block_len must be >= 100")
    methods = tuple(methods)
    for m in methods:
        if m not in _METHODS:
            raise ValueError(f"unknown method: {m!r}")
    if EVM_AIDED in methods and reference is None:
        raise ValueError("evm-aided requires a reference")
    n_blocks = symbols.symbols.size // block_len
    out: list[SnrEstimate] = []
    for k in range(n_blocks):
        chunk = SymbolBlock(
            symbols.symbols[k * block_len : (k + 1) * block_len], symbols.symbol_rate
        )
        for m in methods:
            if m == M2M4:
                out.append(m2m4_snr(compute_moments(chunk), k, block_len))
            elif m == EVM_BLIND:
                est = evm_snr_blind(chunk, k)
                out.append(SnrEstimate(est.value, EVM_BLIND, k, block_len))
            else:
                ref_chunk = SymbolBlock(
                    reference.symbols[k * block_len : (k + 1) * block_len],
                    reference.symbol_rate,
                )
                out.append(evm_snr(chunk, ref_chunk, EVM_AIDED, k))
    return out


def block_time(estimate: SnrEstimate, symbol_rate: float) -> float:
    """Block-center timestamp in seconds."""
    return (estimate.block_index + 0.5) * estimate.block_len / symbol_rate


def trace_for(estimates: Sequence[SnrEstimate], method: str) -> list[SnrEstimate]:
    """Single-method, block-ordered view of a mixed estimate list."""
    return sorted((e for e in estimates if e.method == method), key=lambda e: e.block_index)
