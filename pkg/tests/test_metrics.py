import numpy as np
import pytest
from scipy.stats import norm

from fadesnr.estimators import M2M4, SnrEstimate
from fadesnr.metrics import (
    AlignmentError,
    BerPoint,
    ResyncEvent,
    counted_ber,
    moving_ber,
    prbs_align,
    resync_controller,
    snr_to_ber,
)
from fadesnr.signal_core import db_to_linear
from fadesnr.txchain import PRBS_PERIOD, PrbsState, prbs_generate


class TestSnrToBer:
    @pytest.mark.parametrize("snr_db", [-5.0, 0.0, 3.0, 6.0, 10.0])
    def test_against_normal_cdf_oracle(self, snr_db):
        # erfc(sqrt(x/2)) == 2 * Q(sqrt(x)), Q from the standard normal CDF
        snr = float(db_to_linear(snr_db))
        oracle = 2.0 * norm.sf(np.sqrt(snr))
        assert snr_to_ber(snr) == pytest.approx(oracle, rel=1e-12)

    def test_anchors(self):
        assert snr_to_ber(0.0) == pytest.approx(1.0)
        assert snr_to_ber(float(db_to_linear(10.0))) == pytest.approx(
            2 * norm.sf(np.sqrt(10.0)), rel=1e-9
        )

    def test_monotone_decreasing(self):
        vals = [snr_to_ber(s) for s in (0.1, 1.0, 5.0, 20.0, 100.0)]
        assert vals == sorted(vals, reverse=True)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            snr_to_ber(-0.1)


@pytest.fixture(scope="module")
def ref():
    bits, _ = prbs_generate(PrbsState(), PRBS_PERIOD)
    return bits


class TestPrbsAlign:
    def test_exact_match_offset_zero(self, ref):
        offset, agreement = prbs_align(ref, ref)
        assert offset == 0
        assert agreement == pytest.approx(1.0)

    @pytest.mark.parametrize("shift", [1, 1000, 32766])
    def test_known_shift_recovered(self, ref, shift):
        # received[n] = ref[(n + shift) % period] -> offset == shift
        rx = np.roll(ref, -shift)
        offset, agreement = prbs_align(rx, ref)
        assert offset == shift
        assert agreement == pytest.approx(1.0)

    def test_tolerates_5pct_flips(self, ref):
        rng = np.random.default_rng(7)
        rx = np.roll(ref, -123).copy()
        flips = rng.choice(rx.size, size=int(0.05 * rx.size), replace=False)
        rx[flips] ^= 1
        offset, agreement = prbs_align(rx, ref)
        assert offset == 123
        assert agreement == pytest.approx(0.95, abs=0.001)

    def test_random_bits_raise(self, ref):
        rng = np.random.default_rng(8)
        with pytest.raises(AlignmentError, match="no alignment"):
            prbs_align(rng.integers(0, 2, PRBS_PERIOD), ref)

    def test_too_short(self, ref):
        with pytest.raises(ValueError, match="shorter"):
            prbs_align(ref[:100], ref)


class TestMovingBer:
    def test_constant_input(self):
        out = moving_ber(np.ones(1000), 101)
        assert np.allclose(out, 1.0)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(9)
        errs = (rng.random(500) < 0.1).astype(float)
        window = 51
        out = moving_ber(errs, window)
        half = window // 2
        for i in (0, 10, 250, 499):
            lo, hi = max(i - half, 0), min(i + half + 1, errs.size)
            assert out[i] == pytest.approx(errs[lo:hi].mean())

    def test_single_error_spreads_over_window(self):
        errs = np.zeros(200)
        errs[100] = 1.0
        out = moving_ber(errs, 21)
        assert out[100] == pytest.approx(1 / 21)
        assert out[0] == 0.0


class TestCountedBer:
    def test_perfect_bits(self):
        bits, _ = prbs_generate(PrbsState(), 60_000)
        pts = counted_ber(bits, bits, symbol_rate=1e6, window=50_000, stride=10_000)
        assert all(p.ber == 0.0 for p in pts)
        assert all(p.source == "counted" for p in pts)

    def test_known_error_rate(self):
        rng = np.random.default_rng(10)
        ref = rng.integers(0, 2, 200_000)
        rx = ref.copy()
        flips = rng.choice(rx.size, size=2_000, replace=False)  # 1% BER
        rx[flips] ^= 1
        pts = counted_ber(rx, ref, symbol_rate=1e6, window=50_000, stride=50_000)
        mid = [p.ber for p in pts if 25_000 / 2e6 < p.time < 175_000 / 2e6]
        assert np.mean(mid) == pytest.approx(0.01, abs=0.002)

    def test_timestamps_at_bit_rate(self):
        bits = np.zeros(60_000, dtype=np.int8)
        pts = counted_ber(bits, bits, symbol_rate=4e9, window=50_000, stride=10_000)
        assert pts[0].time == 0.0
        assert pts[1].time == pytest.approx(10_000 / 8e9)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            counted_ber(np.zeros(100), np.zeros(101), 1.0, window=10)

    def test_window_larger_than_input(self):
        with pytest.raises(ValueError, match="window"):
            counted_ber(np.zeros(100), np.zeros(100), 1.0, window=200)


class TestDifferentialErrorLaw:
    def test_counted_ber_follows_exact_pairwise_law(self):
        # For Gray-mapped differential QPSK over AWGN the exact bit error
        # probability is 2p(1-p) with p = Q(sqrt(SNR)): a bit flips when
        # exactly one of the two consecutive decisions it spans is wrong.
        # erfc(sqrt(SNR/2)) = 2p drops the p^2 correction, which is
        # resolvable at 6 dB with 1e7 bits (2p^2 ~ 1.06e-3 vs sigma ~ 7e-5).
        from fadesnr.rxchain import diff_decode, hard_decision
        from fadesnr.signal_core import SymbolBlock
        from fadesnr.txchain import QPSK_POINTS, diff_encode, qpsk_map

        n_bits = 10_000_000
        snr = float(db_to_linear(6.0))
        bits, _ = prbs_generate(PrbsState(), n_bits)
        enc = diff_encode(qpsk_map(bits, 1.0), QPSK_POINTS[0])
        rng = np.random.default_rng(7)
        rx = enc.symbols + np.sqrt(1 / (2 * snr)) * (
            rng.standard_normal(enc.symbols.size)
            + 1j * rng.standard_normal(enc.symbols.size)
        )
        out = diff_decode(hard_decision(SymbolBlock(rx, 1.0)), seed_symbol=QPSK_POINTS[0])
        p_hat = float(np.mean(out != bits))
        p = norm.sf(np.sqrt(snr))
        exact = 2 * p * (1 - p)
        sigma = np.sqrt(exact * (1 - exact) / n_bits)
        assert abs(p_hat - exact) <= 3 * sigma
        # and the 2p approximation is measurably too high here
        assert snr_to_ber(snr) - p_hat > 10 * sigma


def trace(values_db, block_len=10_000):
    return [
        SnrEstimate(float(db_to_linear(v)), M2M4, block_index=i, block_len=block_len)
        for i, v in enumerate(values_db)
    ]


class TestResyncController:
    def test_single_rising_crossing(self):
        events = resync_controller(trace([-5, -2, 1, 3, 5]), 4e9)
        assert len(events) == 1
        assert events[0].block_index == 2
        # block-center timestamp: (2 + 0.5) * 10000 / 4e9
        assert events[0].time == pytest.approx(6.25e-6)
        assert events[0].alignment_offset is None

    def test_falling_crossing_ignored(self):
        assert resync_controller(trace([5, 3, 1, -2, -5]), 4e9) == []

    def test_exact_threshold_counts_as_crossed(self):
        events = resync_controller(trace([-1, 0, 1]), 4e9, threshold_db=0.0)
        assert len(events) == 1
        assert events[0].block_index == 1

    def test_always_above_never_fires(self):
        assert resync_controller(trace([1, 2, 3, 4]), 4e9) == []

    def test_triangular_two_periods_two_events(self):
        up = np.linspace(-10, 10, 11)
        down = up[::-1]
        profile = np.concatenate([up, down[1:], up[1:], down[1:]])
        events = resync_controller(trace(profile.tolist()), 4e9)
        assert len(events) == 2
        assert events[1].block_index - events[0].block_index == 20

    def test_refractory_suppresses_chatter(self):
        # estimate jitters around the threshold: -1, +1, -1, +1 ...
        jitter = [-1, 1, -1, 1, -1, 1]
        events = resync_controller(trace(jitter), 4e9, refractory_blocks=1)
        assert [e.block_index for e in events] == [1, 3, 5][: len(events)]
        wide = resync_controller(trace(jitter), 4e9, refractory_blocks=4)
        assert [e.block_index for e in wide] == [1]

    def test_custom_threshold(self):
        events = resync_controller(trace([2, 4, 6]), 4e9, threshold_db=5.0)
        assert [e.block_index for e in events] == [2]


class TestDataTypes:
    def test_ber_point_range(self):
        with pytest.raises(ValueError):
            BerPoint(time=0.0, ber=1.5, source="counted")

    def test_resync_event_time(self):
        with pytest.raises(ValueError):
            ResyncEvent(time=-1.0, block_index=0)
