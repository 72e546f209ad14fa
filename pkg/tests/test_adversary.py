import collections

import numpy as np
import pytest

from helpers import proper_subsets
from sonicauth import adversary as adv
from sonicauth.protocol import SceneContext
from sonicauth.signal import build_grid, sample_spec, synthesize
from sonicauth.spectrum import DetectionParams, measure_candidate_powers, norm_power


class TestGuessingReplaySignal:
    def test_output_is_valid_reference_signal(self, grid):
        sig = adv.guessing_replay_signal(np.random.default_rng(0), grid)
        assert 0 < len(sig.frequencies) < grid.bin_count
        assert np.max(np.abs(sig.samples)) <= sig.spec.amplitude_budget
        assert sig.total_power == pytest.approx(sum(sig.nominal_power.values()))

    def test_small_grid_enumerates_all_subsets_uniformly(self):
        g = build_grid(1000, 5000, 4)
        admissible = proper_subsets(g.candidates)
        assert len(admissible) == 14
        rng = np.random.default_rng(321)
        counts = collections.Counter()
        for _ in range(7000):
            counts[frozenset(sample_spec(rng, g, length=64).frequencies)] += 1
        assert set(counts) == set(admissible)
        assert min(counts.values()) / 7000 > 0.5 / 14


class TestAllFrequencySignal:
    def test_measured_per_tone_power_within_five_percent(self, grid):
        target = 1.0e10
        wave = adv.all_frequency_signal(grid, target, 8192)
        measured = measure_candidate_powers(wave[:4096].astype(float), grid, 44_100.0, 5)
        assert np.all(np.abs(measured / target - 1.0) < 0.05)

    def test_thirty_candidate_peaks(self, grid):
        wave = adv.all_frequency_signal(grid, 1.0e10, 8192)
        measured = measure_candidate_powers(wave[:4096].astype(float), grid, 44_100.0, 5)
        assert measured.shape[0] == 30
        assert measured.min() > 0.5e10

    def test_infeasible_power_rejected(self, grid):
        with pytest.raises(ValueError):
            adv.all_frequency_signal(grid, 1.0e16, 8192)

    def test_short_duration_rejected(self, grid):
        with pytest.raises(ValueError):
            adv.all_frequency_signal(grid, 1.0e10, 1000)


class TestSanityCheckDefence:
    def test_attacker_only_window_always_sentinel(self, grid, params):
        """Across the emitted-power sweep, an all-candidate window never
        yields a finite normalized power: either the in-set presence check or
        the out-of-set absence check fails."""
        sig = synthesize(sample_spec(np.random.default_rng(8), grid))
        r_mean = sig.total_power / len(sig.frequencies)
        beta = params.beta_ratio * r_mean
        for p_emit in np.geomspace(beta / 4, 4 * params.alpha * r_mean, 6):
            try:
                wave = adv.all_frequency_signal(grid, p_emit, 8192)
            except ValueError:
                continue
            window = wave[2048 : 2048 + 4096].astype(float)
            assert norm_power(window, sig.frequencies, sig.nominal_power, grid, params) is None

    def test_wrong_guess_window_is_sentinel(self, grid, params):
        rng = np.random.default_rng(9)
        sig = synthesize(sample_spec(rng, grid))
        guess = adv.guessing_replay_signal(np.random.default_rng(10), grid)
        if set(guess.frequencies) == set(sig.frequencies):  # pragma: no cover
            pytest.skip("guess collided (probability ~1e-9)")
        p = norm_power(guess.samples.astype(float), sig.frequencies, sig.nominal_power, grid, params)
        assert p is None


class TestGuessingProbability:
    def test_n4_matches_enumeration(self):
        assert adv.guessing_success_probability(4, 1) == pytest.approx(1 / 14)

    def test_n2_single_candidate_pairs(self):
        assert adv.guessing_success_probability(2, 1) == pytest.approx(0.5)

    def test_n30(self):
        assert adv.guessing_success_probability(30, 1) == pytest.approx(9.31322e-10, rel=1e-5)

    def test_two_signals_is_squared(self):
        single = adv.guessing_success_probability(30, 1)
        assert adv.guessing_success_probability(30, 2) == pytest.approx(single**2)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            adv.guessing_success_probability(1, 1)
        with pytest.raises(ValueError):
            adv.guessing_success_probability(30, 3)


class TestScenarios:
    def _ctx(self):
        return SceneContext(
            auth_position=(0.0, 0.0),
            vouch_position=(3.0, 0.0),
            duration=66_150,
            base_sample_rate=44_100.0,
        )

    def test_zero_effort_emits_nothing(self, grid):
        out = adv.build_emissions(adv.ZeroEffort(), self._ctx(), np.random.default_rng(0), grid)
        assert out == []

    def test_guessing_replay_plays_near_both_devices(self, grid):
        out = adv.build_emissions(
            adv.GuessingReplay(), self._ctx(), np.random.default_rng(1), grid
        )
        assert len(out) == 2
        positions = {e.position for e in out}
        assert (0.3, 0.0) in positions and (3.3, 0.0) in positions

    def test_all_frequency_continuous_spans_scene(self, grid):
        out = adv.build_emissions(
            adv.AllFrequency(per_tone_power=1e10), self._ctx(), np.random.default_rng(2), grid
        )
        assert len(out) == 1
        assert out[0].emit_time == 0
        assert out[0].waveform.shape[0] == 66_149

    def test_scenario_json_round_trip(self):
        s = adv.scenario_from_json({"kind": "all_frequency", "per_tone_power": 2e9})
        assert isinstance(s, adv.AllFrequency)
        assert s.per_tone_power == 2e9
        s = adv.scenario_from_json({"kind": "guessing_replay", "guess_seed": 7})
        assert isinstance(s, adv.GuessingReplay)
        with pytest.raises(ValueError):
            adv.scenario_from_json({"kind": "meteor"})

    def test_all_frequency_waveform_builder_for_scene_json(self, grid):
        wave = adv.WAVEFORM_BUILDERS["all_frequency"]({"per_tone_power": 1e10, "duration": 8192}, grid)
        assert wave.shape[0] == 8192
