import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rofcascade.fiber_channel import ChannelError, FrequencyGrid
from rofcascade.signal_model import (
    QPSK,
    Frame,
    WirelessFrontEnd,
    apply_front_end,
    delay_phasor,
    generate_pilot,
    read_frame_csv,
    to_freq,
    to_time,
    write_frame_csv,
)

GRID = FrequencyGrid()
seeds = st.integers(0, 2 ** 32 - 1)


def naive_to_time(X, grid):
    n = np.arange(grid.K)
    return np.array([np.sum(X * np.exp(2j * np.pi * grid.f * t * grid.Ts)) for t in n]) / grid.K


class TestPilot:
    def test_deterministic(self):
        assert np.array_equal(generate_pilot(64, 9).s, generate_pilot(64, 9).s)
        assert not np.array_equal(generate_pilot(64, 9).s, generate_pilot(64, 10).s)

    @given(seeds, st.integers(2, 300))
    def test_unit_modulus_qpsk(self, seed, K):
        s = generate_pilot(K, seed).s
        assert np.allclose(np.abs(s), 1.0, atol=1e-15)
        assert np.all(np.isin(s, QPSK))

    def test_symbol_frequencies_uniform(self):
        # multinomial check: each count within 4 sigma of K/4, for every seed
        K = 1024
        sd = np.sqrt(K * 0.25 * 0.75)
        for seed in range(50):
            s = generate_pilot(K, seed).s
            counts = np.array([np.sum(s == q) for q in QPSK])
            assert counts.sum() == K
            assert np.all(np.abs(counts - K / 4) < 4 * sd), (seed, counts)

    def test_K_too_small(self):
        with pytest.raises(ValueError):
            generate_pilot(1, 0)


class TestTransforms:
    @given(seeds)
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        assert np.max(np.abs(to_freq(to_time(x)) - x)) < 1e-12 * np.max(np.abs(x))
        assert np.max(np.abs(to_time(to_freq(x)) - x)) < 1e-12 * np.max(np.abs(x))

    @given(seeds)
    def test_parseval(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        ratio = 64 * np.sum(np.abs(to_time(X)) ** 2) / np.sum(np.abs(X) ** 2)
        assert abs(ratio - 1) < 1e-12

    def test_all_ones_is_impulse(self):
        x = to_time(np.ones(64))
        assert x[0] == pytest.approx(1.0)
        assert np.max(np.abs(x[1:])) < 1e-15

    @pytest.mark.parametrize("K", [8, 33, 64])
    def test_matches_definition(self, K):
        grid = FrequencyGrid(K=K)
        rng = np.random.default_rng(K)
        X = rng.standard_normal(K) + 1j * rng.standard_normal(K)
        assert np.allclose(to_time(X), naive_to_time(X, grid), rtol=0, atol=1e-13)

    def test_batched_last_axis(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((3, 64)) + 0j
        assert np.allclose(to_time(X)[1], to_time(X[1]))


class TestFrontEnd:
    def test_identity(self):
        s = generate_pilot(64, 1)
        assert np.array_equal(apply_front_end(s, WirelessFrontEnd(1.0, 0.0), GRID).freq, s.s)

    def test_pure_gain(self):
        s = generate_pilot(64, 1)
        out = apply_front_end(s, WirelessFrontEnd(2 * np.exp(1j * np.pi / 2), 0.0), GRID).freq
        assert np.allclose(out, 2j * s.s, atol=1e-15)

    @pytest.mark.parametrize("samples", [1, 3, -2])
    def test_integer_delay_is_circular_shift(self, samples):
        s = generate_pilot(64, 2)
        tau = samples / (GRID.spacing * GRID.K)
        shifted = apply_front_end(s, WirelessFrontEnd(1.0, tau), GRID).time
        base = apply_front_end(s, WirelessFrontEnd(1.0, 0.0), GRID).time
        assert np.allclose(shifted, np.roll(base, samples), atol=1e-14)

    @given(seeds, st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
    def test_linear_in_A(self, seed, c):
        s = generate_pilot(64, seed % 1000)
        A = 0.7 - 0.2j
        base = apply_front_end(s, WirelessFrontEnd(A, 3e-9), GRID).freq
        if abs(c) > 0:
            scaled = apply_front_end(s, WirelessFrontEnd(c * A, 3e-9), GRID).freq
            assert np.allclose(scaled, c * base, rtol=1e-12, atol=1e-15)

    @given(st.floats(-20e-9, 20e-9), st.floats(-20e-9, 20e-9))
    def test_delays_compose(self, t1, t2):
        lhs = delay_phasor(GRID, t1) * delay_phasor(GRID, t2)
        assert np.allclose(lhs, delay_phasor(GRID, t1 + t2), atol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            WirelessFrontEnd(0.0, 1e-9)
        with pytest.raises(ValueError):
            WirelessFrontEnd(1.0, np.inf)
        with pytest.raises(ChannelError):
            apply_front_end(generate_pilot(32, 0), WirelessFrontEnd(1.0, 0.0), GRID)


class TestFrame:
    def test_length_checked(self):
        with pytest.raises(ChannelError):
            Frame(GRID, np.ones(10))
        with pytest.raises(ChannelError):
            Frame.from_time(GRID, np.ones(10))

    def test_time_view_pair(self):
        rng = np.random.default_rng(3)
        f = Frame(GRID, rng.standard_normal(64) + 1j * rng.standard_normal(64))
        assert np.allclose(Frame.from_time(GRID, f.time).freq, f.freq, atol=1e-13)

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        f = Frame(GRID, rng.standard_normal(64) + 1j * rng.standard_normal(64))
        write_frame_csv(f, tmp_path / "x.csv")
        assert np.array_equal(read_frame_csv(tmp_path / "x.csv", GRID).freq, f.freq)

    def test_csv_wrong_length(self, tmp_path):
        f = Frame(FrequencyGrid(K=8), np.ones(8))
        write_frame_csv(f, tmp_path / "x.csv")
        with pytest.raises(ChannelError):
            read_frame_csv(tmp_path / "x.csv", GRID)
