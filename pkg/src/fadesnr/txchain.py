"""Transmitter chain: PRBS bits -> differential Gray QPSK -> RRC waveform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .signal_core import IqStream, SymbolBlock

PRBS_ORDER = 15
PRBS_PERIOD = 2**PRBS_ORDER - 1  # 32767
_PRBS_MASK = 2**PRBS_ORDER - 1

# Gray-indexed unit-power QPSK: index k sits at phase pi/4 + k*pi/2.
QPSK_POINTS = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)

# bit pair (b0, b1) -> Gray index and back; adjacent indices differ in one bit
_BITS_TO_INDEX = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}
_INDEX_TO_BITS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.uint8)


@dataclass(frozen=True)
class PrbsState:
    """PRBS15 shift register (polynomial x^15 + x^14 + 1)."""

    register: int = _PRBS_MASK  # all-ones default seed

    def __post_init__(self):
        if not 0 < self.register <= _PRBS_MASK:
            raise ValueError("degenerate LFSR seed")


def _prbs_run(register: int, n: int) -> tuple[np.ndarray, int]:
    bits = np.empty(n, dtype=np.uint8)
    r = register
    for i in range(n):
        bits[i] = (r >> 14) & 1
        fb = ((r >> 14) ^ (r >> 13)) & 1
        r = ((r << 1) | fb) & _PRBS_MASK
    return bits, r


def prbs_generate(state: PrbsState, n_bits: int) -> tuple[np.ndarray, PrbsState]:
    """Generate n_bits of the maximal-length PRBS15 sequence.

    Returns the bit array and the advanced register state. Sequences
    longer than one period (32767 bits) are tiled from a single period
    run, which is exact for a maximal-length LFSR.
    """
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    if n_bits <= PRBS_PERIOD:
        bits, r = _prbs_run(state.register, n_bits)
        return bits, PrbsState(r)
    period, _ = _prbs_run(state.register, PRBS_PERIOD)
    reps = -(-n_bits // PRBS_PERIOD)
    bits = np.tile(period, reps)[:n_bits]
    _, r = _prbs_run(state.register, n_bits % PRBS_PERIOD or PRBS_PERIOD)
    if n_bits % PRBS_PERIOD == 0:
        r = state.register
    return bits, PrbsState(r)


def qpsk_map(bits, symbol_rate: float) -> SymbolBlock:
    """Gray-map bit pairs (b0, b1) -> ((1-2*b0) + j*(1-2*b1)) / sqrt(2)."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % 2 != 0:
        raise ValueError("dangling bit")
    b0 = bits[0::2]
    b1 = bits[1::2]
    symbols = ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2.0)
    return SymbolBlock(symbols, symbol_rate)


def constellation_index(symbols: np.ndarray) -> np.ndarray:
    """Gray index of the quadrant each symbol falls in (ties go positive)."""
    re_neg = np.real(symbols) < 0
    im_neg = np.imag(symbols) < 0
    # (+,+)->0, (-,+)->1, (-,-)->2, (+,-)->3
    return np.where(
        im_neg, np.where(re_neg, 2, 3), np.where(re_neg, 1, 0)
    ).astype(np.int64)


def _require_constellation(symbols: np.ndarray) -> np.ndarray:
    idx = constellation_index(symbols)
    if not np.allclose(symbols, QPSK_POINTS[idx], atol=1e-9):
        raise ValueError("invalid symbol")
    return idx


def diff_encode(symbols: SymbolBlock, seed_symbol: complex = QPSK_POINTS[0]) -> SymbolBlock:
    """Differential (phase-increment) encoding on the QPSK constellation.

    The Gray index of each input symbol is used as a quadrant increment:
    out(n) = out(n-1) * in(n) * exp(-j*pi/4), with out(-1) = seed_symbol.
    The product of two constellation points re-normalized by the extra
    pi/4 lands back on the constellation, so the output is closed under
    encoding and the transmitted phase is the running sum of increments.
    """
    seed_idx = int(_require_constellation(np.atleast_1d(np.asarray(seed_symbol, dtype=np.complex128)))[0])
    incr = _require_constellation(symbols.symbols)
    out_idx = (seed_idx + np.cumsum(incr)) % 4
    return SymbolBlock(QPSK_POINTS[out_idx], symbols.symbol_rate)


@dataclass(frozen=True, eq=False)
class RrcFilter:
    """Root-raised-cosine filter taps, unit-energy, symmetric."""

    rolloff: float
    span: int  # symbols
    sps: int  # samples per symbol
    taps: np.ndarray

    @property
    def group_delay_samples(self) -> int:
        return self.span * self.sps // 2


def rrc_design(rolloff: float, span: int, sps: int) -> RrcFilter:
    """Design a unit-energy RRC filter spanning `span` symbols at `sps`.

    The removable singularities at t = 0 and t = +-1/(4*rolloff) are
    replaced by their analytic limits.
    """
    if not 0 < rolloff <= 1:
        raise ValueError("rolloff must be in (0, 1]")
    if span < 2:
        raise ValueError("span must be >= 2 symbols")
    if sps < 2:
        raise ValueError("sps must be >= 2")
    n = span * sps + 1
    t = (np.arange(n) - span * sps / 2) / sps  # in symbol periods
    beta = rolloff
    taps = np.empty(n)
    t_sing = 1.0 / (4.0 * beta)
    for i, ti in enumerate(t):
        if np.isclose(ti, 0.0):
            taps[i] = 1.0 + beta * (4.0 / np.pi - 1.0)
        elif np.isclose(abs(ti), t_sing):
            taps[i] = (beta / np.sqrt(2.0)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
            )
        else:
            num = np.sin(np.pi * ti * (1 - beta)) + 4 * beta * ti * np.cos(np.pi * ti * (1 + beta))
            den = np.pi * ti * (1 - (4 * beta * ti) ** 2)
            taps[i] = num / den
    taps /= np.sqrt(np.sum(taps**2))
    return RrcFilter(rolloff=rolloff, span=span, sps=sps, taps=taps)


def pulse_shape(symbols: SymbolBlock, filt: RrcFilter) -> IqStream:
    """Zero-stuff by sps and convolve with the RRC taps.

    Output sample rate is symbol_rate * sps. Symbol k peaks at sample
    index k*sps + filt.group_delay_samples in the output.
    """
    up = np.zeros(symbols.symbols.size * filt.sps, dtype=np.complex128)
    up[:: filt.sps] = symbols.symbols
    shaped = fftconvolve(up, filt.taps, mode="full")
    return IqStream(shaped, symbols.symbol_rate * filt.sps)
