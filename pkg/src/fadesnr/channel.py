"""Channel emulation: deterministic fading profile, AWGN, CFO, phase noise.

The hardware chain (AOM attenuation + ASE loading) is reinterpreted as a
triangular-in-dB SNR profile applied to the signal amplitude, plus complex
circular AWGN of constant power. Stage order is fixed:
fading -> CFO -> phase noise -> AWGN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import IqStream, db_to_linear


@dataclass(frozen=True)
class FadingProfile:
    """Deterministic time -> SNR(dB) profile."""

    shape: str = "triangular"  # "triangular" | "constant"
    period: float = 250e-6  # seconds
    snr_ceiling_db: float = 7.0
    snr_floor_db: float = -10.0
    phase_offset: float = 0.0  # fraction of a period in [0, 1)

    def __post_init__(self):
        if self.shape not in ("triangular", "constant"):
            raise ValueError(f"unknown fading shape: {self.shape!r}")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not self.snr_ceiling_db > self.snr_floor_db:
            raise ValueError("snr_ceiling_db must exceed snr_floor_db")
        if not 0 <= self.phase_offset < 1:
            raise ValueError("phase_offset must be in [0, 1)")


@dataclass(frozen=True)
class ImpairmentConfig:
    """Carrier/noise impairments applied by the channel."""

    cfo_hz: float = 0.0
    linewidth_hz: float = 0.0  # combined Tx+LO Lorentzian linewidth
    noise_power: float = 1.0  # per-symbol complex noise variance at P0=1

    def __post_init__(self):
        if self.linewidth_hz < 0:
            raise ValueError("linewidth_hz must be >= 0")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")


def profile_snr_at(profile: FadingProfile, t):
    """SNR in dB at time(s) t.

    The triangular wave is anchored at the floor for t = 0 (phase_offset
    0) and reaches the ceiling at half a period; linear in dB in between.
    """
    t = np.asarray(t, dtype=np.float64)
    if profile.shape == "constant":
        out = np.full(t.shape, profile.snr_ceiling_db)
        return float(out) if out.ndim == 0 else out
    x = (t / profile.period + profile.phase_offset) % 1.0
    tri = 1.0 - np.abs(2.0 * x - 1.0)
    out = profile.snr_floor_db + (profile.snr_ceiling_db - profile.snr_floor_db) * tri
    return float(out) if out.ndim == 0 else out


def apply_fading(signal: IqStream, profile: FadingProfile) -> IqStream:
    """Attenuate each sample so its SNR follows the profile.

    Amplitude gain g(t) = sqrt(10^((snr(t) - ceiling)/10)); the signal is
    unattenuated at the profile apex.
    """
    if profile.shape == "constant":
        return signal
    snr_db = profile_snr_at(profile, signal.times())
    gain = np.sqrt(db_to_linear(snr_db - profile.snr_ceiling_db))
    return IqStream(signal.samples * gain, signal.sample_rate)


def add_awgn(signal: IqStream, noise_power: float, rng_seed: int) -> IqStream:
    """Add complex circular AWGN with the given total variance per sample.

    Noise power is split equally across the real and imaginary parts and
    is not modulated by the fading profile.
    """
    if not noise_power > 0:
        raise ValueError("noise_power must be positive")
    rng = np.random.default_rng(rng_seed)
    n = signal.samples.size
    scale = np.sqrt(noise_power / 2.0)
    noise = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return IqStream(signal.samples + noise, signal.sample_rate)


def apply_cfo(signal: IqStream, cfo_hz: float) -> IqStream:
    """Rotate sample n by exp(j*2*pi*cfo*n/fs)."""
    if abs(cfo_hz) >= signal.sample_rate / 2:
        raise ValueError("CFO beyond Nyquist")
    if cfo_hz == 0.0:
        return signal
    n = np.arange(signal.samples.size)
    rot = np.exp(2j * np.pi * cfo_hz * n / signal.sample_rate)
    return IqStream(signal.samples * rot, signal.sample_rate)


def apply_phase_noise(signal: IqStream, linewidth_hz: float, rng_seed: int) -> IqStream:
    """Multiply by a Wiener phase walk.

    Increments are Gaussian with variance 2*pi*linewidth/sample_rate.
    """
    if linewidth_hz < 0:
        raise ValueError("linewidth_hz must be >= 0")
    if linewidth_hz == 0.0:
        return signal
    rng = np.random.default_rng(rng_seed)
    sigma = np.sqrt(2.0 * np.pi * linewidth_hz / signal.sample_rate)
    phi = np.cumsum(sigma * rng.standard_normal(signal.samples.size))
    return IqStream(signal.samples * np.exp(1j * phi), signal.sample_rate)
