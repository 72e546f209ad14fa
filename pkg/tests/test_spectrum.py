import numpy as np
import pytest

from helpers import direct_bin_power, exhaustive_detect
from sonicauth.channel import ChannelConfig, environment
from sonicauth.signal import SignalSpec, build_grid, sample_spec, synthesize
from sonicauth.spectrum import (
    DetectionParams,
    candidate_bin_table,
    cross_correlate_detect,
    detect,
    detect_pair,
    frequency_bin,
    norm_power,
    power_spectrum,
)

FS = 44_100.0


class TestPowerSpectrum:
    def test_zeros(self):
        res = power_spectrum(np.zeros(4096))
        assert np.all(res.powers == 0)
        assert res.powers.shape == (2049,)

    def test_dc_only(self):
        res = power_spectrum(np.full(1024, 3.0))
        assert res.powers[0] == pytest.approx((3.0 * 1024) ** 2)
        assert np.allclose(res.powers[1:], 0, atol=1e-12)

    def test_exact_bin_sine(self):
        n, k0, amp = 4096, 100, 7.5
        t = np.arange(n)
        w = amp * np.sin(2 * np.pi * k0 * t / n)
        res = power_spectrum(w)
        assert res.powers[k0] == pytest.approx((amp * n / 2) ** 2, rel=1e-9)
        others = np.delete(res.powers, k0)
        assert others.max() < 1e-12 * res.powers[k0]
        assert res.powers[k0] == pytest.approx(direct_bin_power(w, k0, n), rel=1e-9)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ValueError):
            power_spectrum(np.zeros(4095))

    def test_bin_frequency_mapping(self):
        res = power_spectrum(np.zeros(4096), sample_rate=FS)
        assert res.bin_frequency(2337) == pytest.approx(2337 * FS / 4096)


class TestFrequencyBin:
    def test_candidate_above_half_rate(self):
        assert frequency_bin(25_166.67, FS, 4096) == 2337

    def test_dc(self):
        assert frequency_bin(0.0, FS, 4096) == 0

    def test_fold_point_rejected(self):
        with pytest.raises(ValueError):
            frequency_bin(22_050.0, FS, 4096)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            frequency_bin(-1.0, FS, 4096)
        with pytest.raises(ValueError):
            frequency_bin(44_100.0, FS, 4096)


class TestBinTable:
    def test_indices_stay_in_bounds_for_edge_grids(self):
        # candidates hugging DC and the top of the range exercise clamping/folding
        low = build_grid(10.0, 120.0, 4)
        high = build_grid(43_000.0, 44_000.0, 4)
        for g in (low, high):
            table = candidate_bin_table(g, FS, 4096, theta=5)
            assert table.min() >= 0
            assert table.max() <= 2048

    def test_folding_matches_mirror(self, grid):
        table = candidate_bin_table(grid, FS, 4096, theta=0)
        raw = [frequency_bin(f, FS, 4096) for f in grid.candidates]
        assert [4096 - r for r in raw] == [int(k[0]) for k in table]


class TestNormPower:
    def test_clean_signal_close_to_total(self, grid, params):
        sig = synthesize(sample_spec(np.random.default_rng(0), grid))
        p = norm_power(sig.samples.astype(float), sig.frequencies, sig.nominal_power, grid, params)
        assert p is not None and p >= 0.95 * sig.total_power

    def test_silence_fails_presence_check(self, grid, params):
        sig = synthesize(sample_spec(np.random.default_rng(1), grid))
        p = norm_power(np.zeros(4096), sig.frequencies, sig.nominal_power, grid, params)
        assert p is None

    def test_all_frequency_window_always_rejected(self, grid, params):
        """Whatever per-tone power an all-candidate window carries, one of the
        two sanity checks fails."""
        sig = synthesize(sample_spec(np.random.default_rng(2), grid))
        t = np.arange(4096)
        r_mean = sig.total_power / len(sig.frequencies)
        beta = params.beta_ratio * r_mean
        for power_target in np.geomspace(beta / 100, 10 * r_mean, 9):
            amp = np.sqrt(power_target / r_mean) * (32_000 / len(sig.frequencies))
            w = np.zeros(4096)
            for f in grid.candidates:
                w += amp * np.sin(2 * np.pi * f * t / FS)
            assert norm_power(w, sig.frequencies, sig.nominal_power, grid, params) is None

    def test_out_of_set_tone_trips_absence_check(self, grid, params):
        """A window holding the clean signal plus one loud out-of-set tone is
        rejected by the beta check."""
        sig = synthesize(sample_spec(np.random.default_rng(3), grid, exclude=frozenset(grid.candidates[:1])))
        intruder_f = grid.candidates[0]
        t = np.arange(4096)
        w = sig.samples.astype(float) + 3000.0 * np.sin(2 * np.pi * intruder_f * t / FS)
        assert norm_power(w, sig.frequencies, sig.nominal_power, grid, params) is None

    def test_wrong_length_rejected(self, grid, params):
        sig = synthesize(sample_spec(np.random.default_rng(4), grid))
        with pytest.raises(ValueError):
            norm_power(np.zeros(1000), sig.frequencies, sig.nominal_power, grid, params)


def _embed(sig, pre, post, scale=1.0):
    return np.concatenate([np.zeros(pre), scale * sig.samples.astype(float), np.zeros(post)])


class TestDetect:
    def test_clean_embedding_located(self, grid, params):
        sig = synthesize(sample_spec(np.random.default_rng(5), grid))
        x = _embed(sig, 10_000, 10_000)
        out = detect(x, sig, params)
        assert out.location is not None
        assert abs(out.location - 10_000) <= params.fine_step
        loc, _ = exhaustive_detect(x, sig, grid, params, FS)
        assert abs(out.location - loc) <= params.fine_step

    def test_white_noise_only_not_present(self, grid, params):
        sig = synthesize(sample_spec(np.random.default_rng(6), grid))
        rms = np.sqrt(np.mean(sig.samples.astype(float) ** 2))
        x = np.random.default_rng(7).normal(0.0, rms, 60_000)
        out = detect(x, sig, params)
        assert out.not_present

    def test_recording_shorter_than_signal(self, grid, params):
        sig = synthesize(sample_spec(np.random.default_rng(8), grid))
        with pytest.raises(ValueError):
            detect(np.zeros(1000), sig, params)

    def test_monotone_rejection_when_scaled_below_epsilon(self, grid, params):
        sig = synthesize(sample_spec(np.random.default_rng(9), grid))
        x = _embed(sig, 5_000, 5_000, scale=0.5 * params.epsilon)
        assert detect(x, sig, params).not_present

    def test_coarse_to_fine_matches_exhaustive_on_random_scenes(self, grid, params):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            sig = synthesize(sample_spec(rng, grid))
            pre = int(rng.integers(0, 12_000))
            x = _embed(sig, pre, 18_000 - pre, scale=float(rng.uniform(0.2, 1.0)))
            x += rng.normal(0.0, 40.0, x.shape[0])
            got = detect(x, sig, params)
            want_loc, _ = exhaustive_detect(x, sig, grid, params, FS)
            assert got.location is not None and want_loc is not None
            assert abs(got.location - want_loc) <= params.fine_step

    def test_dump_csv(self, grid, params, tmp_path):
        sig = synthesize(sample_spec(np.random.default_rng(10), grid))
        x = _embed(sig, 3_000, 3_000)
        path = tmp_path / "scores.csv"
        detect(x, sig, params, dump_csv=str(path))
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "index,norm_power"
        assert len(rows) > 10


class TestDetectPair:
    def test_two_signals_located(self, grid, params):
        rng = np.random.default_rng(11)
        sig_a = synthesize(sample_spec(rng, grid))
        sig_b = synthesize(sample_spec(rng, grid))
        x = np.zeros(45_000)
        x[10_000 : 10_000 + 4096] = sig_a.samples
        x[30_000 : 30_000 + 4096] = sig_b.samples
        out_a, out_b = detect_pair(x, sig_a, sig_b, params)
        assert abs(out_a.location - 10_000) <= params.fine_step
        assert abs(out_b.location - 30_000) <= params.fine_step

    def test_only_first_present(self, grid, params):
        rng = np.random.default_rng(12)
        sig_a = synthesize(sample_spec(rng, grid))
        sig_b = synthesize(sample_spec(rng, grid, exclude=frozenset(sig_a.frequencies)))
        x = _embed(sig_a, 8_000, 20_000)
        out_a, out_b = detect_pair(x, sig_a, sig_b, params)
        assert out_a.location is not None
        assert out_b.not_present

    def test_equivalent_to_two_detect_calls(self, grid, params):
        """Paired scan must be bit-identical to independent scans, across
        random scenes with zero, one or two signals present."""
        for seed in range(50):
            rng = np.random.default_rng(1000 + seed)
            sig_a = synthesize(sample_spec(rng, grid))
            sig_b = synthesize(sample_spec(rng, grid))
            x = rng.normal(0.0, 25.0, 30_000)
            mode = seed % 3
            if mode >= 1:
                pos_a = int(rng.integers(0, 10_000))
                x[pos_a : pos_a + 4096] += sig_a.samples * rng.uniform(0.1, 1.0)
            if mode == 2:
                pos_b = int(rng.integers(14_000, 24_000))
                x[pos_b : pos_b + 4096] += sig_b.samples * rng.uniform(0.1, 1.0)
            pair = detect_pair(x, sig_a, sig_b, params)
            singles = (detect(x, sig_a, params), detect(x, sig_b, params))
            assert pair == singles


class TestCrossCorrelate:
    def test_exact_copy_found_exactly(self, grid):
        sig = synthesize(sample_spec(np.random.default_rng(13), grid))
        x = _embed(sig, 10_000, 10_000)
        assert cross_correlate_detect(x, sig) == 10_000

    def test_inverted_copy_misses(self, grid):
        sig = synthesize(sample_spec(np.random.default_rng(14), grid))
        x = _embed(sig, 10_000, 10_000, scale=-1.0)
        assert cross_correlate_detect(x, sig) != 10_000

    def test_short_recording_rejected(self, grid):
        sig = synthesize(sample_spec(np.random.default_rng(15), grid))
        with pytest.raises(ValueError):
            cross_correlate_detect(np.zeros(100), sig)


class TestDetectionParams:
    def test_defaults_satisfy_spoofing_guard(self):
        p = DetectionParams()
        assert p.beta_ratio < p.alpha

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": 0.0},
            {"epsilon": 0.02, "alpha": 0.01},
            {"beta_ratio": 0.02},
            {"theta": -1},
            {"coarse_step": 5, "fine_step": 10},
            {"fine_radius": 10},
        ],
    )
    def test_invalid_params_rejected(self, kwargs):
        with pytest.raises(ValueError):
            DetectionParams(**kwargs)
