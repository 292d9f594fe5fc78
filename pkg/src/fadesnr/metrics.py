"""Ground-truth BER, SNR->BER mapping, PRBS alignment, resync control."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .estimators import SnrEstimate, block_time
from .signal_core import db_to_linear

AGREEMENT_MIN = 0.9


class AlignmentError(ValueError):
    """Raised when no cyclic offset reaches the agreement threshold."""


@dataclass(frozen=True)
class BerPoint:
    time: float  # seconds
    ber: float
    source: str  # "counted" | "m2m4-derived" | "evm-derived"

    def __post_init__(self):
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError("ber must be in [0, 1]")


@dataclass(frozen=True)
class ResyncEvent:
    time: float  # seconds
    block_index: int
    alignment_offset: int | None = None  # bits; None if alignment failed

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("time must be >= 0")


def snr_to_ber(snr: float) -> float:
    """BER = erfc(sqrt(SNR/2)), the differential-QPSK mapping.

    Twice the coherent Gray-QPSK bit error rate, accounting for the
    doubling introduced by differential decoding.
    """
    if snr < 0:
        raise ValueError("snr must be >= 0")
    return float(min(max(erfc(np.sqrt(snr / 2.0)), 0.0), 1.0))


def prbs_align(received_bits, reference_bits) -> tuple[int, float]:
    """Cyclic offset maximizing bit agreement with the reference period.

    Correlates the first period-worth of received bits against all cyclic
    shifts of the reference (via FFT). Returns (offset, agreement) such
    that received[n] == reference[(n + offset) % period] at the best
    offset; received sequences of at least two periods are recommended
    for reliable correlation.

    Raises
    ------
    AlignmentError
        If the best agreement is <= 0.9 (signal still in a deep fade).
    """
    received = np.asarray(received_bits, dtype=np.int8)
    reference = np.asarray(reference_bits, dtype=np.int8)
    period = reference.size
    if received.size < period:
        raise ValueError("received sequence shorter than the reference period")
    a = 1.0 - 2.0 * received[:period]
    b = 1.0 - 2.0 * reference
    # corr[k] = sum_n a[n] * b[(n + k) % period]
    corr = np.real(np.fft.ifft(np.fft.fft(b) * np.conj(np.fft.fft(a))))
    offset = int(np.argmax(corr))
    agreement = float((corr[offset] + period) / (2.0 * period))
    if agreement <= AGREEMENT_MIN:
        raise AlignmentError("no alignment found")
    return offset, agreement


def moving_ber(errors: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average of a 0/1 error indicator.

    Edge windows are clipped to the available range, so every position
    gets a value.
    """
    csum = np.concatenate(([0.0], np.cumsum(errors, dtype=np.float64)))
    idx = np.arange(errors.size)
    half = window // 2
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, errors.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def counted_ber(
    received_bits,
    reference_bits,
    symbol_rate: float,
    window: int = 50_000,
    stride: int = 1,
) -> list[BerPoint]:
    """Error-counting BER in a centered moving window of `window` bits.

    One point per `stride` bit positions, timestamped at the bit rate
    2 * symbol_rate. Inputs must be aligned and of equal length >= window.
    """
    received = np.asarray(received_bits, dtype=np.int8)
    reference = np.asarray(reference_bits, dtype=np.int8)
    if received.size != reference.size:
        raise ValueError("length mismatch")
    if received.size < window:
        raise ValueError("fewer bits than the averaging window")
    ber = moving_ber((received != reference).astype(np.float64), window)
    bit_rate = 2.0 * symbol_rate
    return [
        BerPoint(time=i / bit_rate, ber=float(ber[i]), source="counted")
        for i in range(0, received.size, stride)
    ]


def resync_controller(
    snr_trace: Sequence[SnrEstimate],
    symbol_rate: float,
    threshold_db: float = 0.0,
    refractory_blocks: int = 1,
) -> list[ResyncEvent]:
    """Rising-crossing detector on a block-ordered SNR estimate trace.

    Emits one event at each block k where snr(k-1) < threshold <= snr(k);
    after an event, crossings within `refractory_blocks` blocks are
    ignored so a noisy estimate cannot fire repeatedly within one fade.
    Alignment offsets are filled in by the caller, which owns the bits.
    """
    threshold = db_to_linear(threshold_db)
    events: list[ResyncEvent] = []
    last_fire = None
    for prev, cur in zip(snr_trace, snr_trace[1:]):
        if prev.value < threshold <= cur.value:
            if last_fire is not None and cur.block_index - last_fire <= refractory_blocks:
                continue
            events.append(
                ResyncEvent(
                    time=block_time(cur, symbol_rate),
                    block_index=cur.block_index,
                )
            )
            last_fire = cur.block_index
    return events
