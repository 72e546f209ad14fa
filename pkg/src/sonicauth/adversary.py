"""Attacker models: zero-effort access attempts, guessing-based replay, and
all-frequency spoofing, expressed as extra emitters in the acoustic scene.

Attackers cannot read the paired link, so they never see the session's tone
sets; a replay attacker can only re-run the public signal construction and
hope its guess matches, which succeeds with probability ``1 / (2**N - 2)``
per signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np

from . import channel as ch
from . import spectrum
from .protocol import SceneContext
from .signal import (
    DEFAULT_AMPLITUDE_BUDGET,
    DEFAULT_SAMPLE_RATE,
    DEFAULT_GRID,
    FrequencyGrid,
    ReferenceSignal,
    sample_spec,
    synthesize,
)

Target = Literal["auth", "vouch", "both"]

# Attacker speaker sits this far from the targeted device.
ATTACKER_OFFSET_M = 0.3


@dataclass(frozen=True)
class ZeroEffort:
    """The attacker simply tries the device; no acoustic injection."""

    target: Target = "auth"


@dataclass(frozen=True)
class GuessingReplay:
    """The attacker re-runs the public signal construction with its own seed
    and plays one guess near each device (the strongest replay placement)."""

    guess_seed: int | None = None
    attacker_position: tuple[float, ...] | None = None
    target: Target = "both"


@dataclass(frozen=True)
class AllFrequency:
    """One sine per grid candidate, equal measured per-tone power, played for
    the whole session when ``continuous``."""

    per_tone_power: float
    attacker_position: tuple[float, ...] | None = None
    continuous: bool = True
    target: Target = "auth"

    def __post_init__(self) -> None:
        if self.per_tone_power <= 0:
            raise ValueError("per-tone power must be positive")


AttackScenario = Union[ZeroEffort, GuessingReplay, AllFrequency]


def guessing_replay_signal(
    rng: np.random.Generator, grid: FrequencyGrid = DEFAULT_GRID, **spec_kwargs
) -> ReferenceSignal:
    """A fresh reference-signal draw, statistically independent of any
    session's signals."""
    return synthesize(sample_spec(rng, grid, **spec_kwargs))


def all_frequency_signal(
    grid: FrequencyGrid,
    per_tone_power: float,
    duration: int,
    *,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    amplitude_budget: int = DEFAULT_AMPLITUDE_BUDGET,
    theta: int = 5,
) -> np.ndarray:
    """Spoofing waveform containing every candidate tone.

    Per-tone amplitudes are calibrated against the detector's measurement
    convention so each tone carries ``per_tone_power``; raises when the
    requested power cannot fit the 16-bit range after summation.
    """
    if duration < 4096:
        raise ValueError("duration must cover at least one measurement window (4096 samples)")
    t = np.arange(duration, dtype=np.float64)
    window = 4096
    amps = []
    for i, f in enumerate(grid.candidates):
        unit = np.sin(2.0 * np.pi * f * np.arange(window) / sample_rate)
        unit_power = spectrum.measure_candidate_powers(unit, grid, sample_rate, theta)[i]
        amps.append(math.sqrt(per_tone_power / unit_power))
    if sum(amps) > amplitude_budget:
        raise ValueError(
            f"per-tone power {per_tone_power:g} infeasible: tone amplitudes sum to "
            f"{sum(amps):.0f} > budget {amplitude_budget}"
        )
    x = np.zeros(duration)
    for f, a in zip(grid.candidates, amps):
        x += a * np.sin(2.0 * np.pi * f * t / sample_rate)
    return np.clip(np.rint(x), -32768, 32767).astype(np.int16)


def guessing_success_probability(bin_count: int, signals: int = 1) -> float:
    """Probability that independent guesses match the session's tone sets.

    One signal: ``1 / (2**N - 2)`` (uniform over non-empty proper subsets).
    Two signals: the square, since the guesses are independent.
    """
    if bin_count < 2:
        raise ValueError("need at least 2 bins")
    if signals not in (1, 2):
        raise ValueError("signals must be 1 or 2")
    single = 1.0 / (2.0**bin_count - 2.0)
    return single if signals == 1 else single**2


def _near(position: tuple[float, ...], anchor: tuple[float, ...]) -> tuple[float, ...]:
    if position is not None:
        return tuple(position)
    offset = (ATTACKER_OFFSET_M,) + (0.0,) * (len(anchor) - 1)
    return tuple(p + o for p, o in zip(anchor, offset))


def build_emissions(
    scenario: AttackScenario,
    ctx: SceneContext,
    rng: np.random.Generator,
    grid: FrequencyGrid = DEFAULT_GRID,
) -> list[ch.Emission]:
    """Translate an attack scenario into scene emissions."""
    if isinstance(scenario, ZeroEffort):
        return []

    anchors = []
    if scenario.target in ("auth", "both"):
        anchors.append(ctx.auth_position)
    if scenario.target in ("vouch", "both"):
        anchors.append(ctx.vouch_position)

    if isinstance(scenario, GuessingReplay):
        guess_rng = np.random.default_rng(scenario.guess_seed) if scenario.guess_seed is not None else rng
        emissions = []
        for i, anchor in enumerate(anchors):
            guess = guessing_replay_signal(guess_rng, grid)
            latest = ctx.duration - guess.samples.shape[0] - 1
            when = int(rng.integers(int(0.05 * ctx.duration), latest))
            pos = _near(scenario.attacker_position, anchor)
            emissions.append(ch.Emission(f"attacker_{i}", guess.samples, when, pos))
        return emissions

    if isinstance(scenario, AllFrequency):
        length = ctx.duration - 1 if scenario.continuous else 8192
        wave = all_frequency_signal(grid, scenario.per_tone_power, length)
        start = 0 if scenario.continuous else int(rng.integers(0, ctx.duration - length))
        return [
            ch.Emission(f"attacker_{i}", wave, start, _near(scenario.attacker_position, anchor))
            for i, anchor in enumerate(anchors)
        ]

    raise TypeError(f"unknown scenario {scenario!r}")


def scenario_from_json(obj: dict) -> AttackScenario:
    kind = obj.get("kind")
    params = {k: v for k, v in obj.items() if k != "kind"}
    if "attacker_position" in params and params["attacker_position"] is not None:
        params["attacker_position"] = tuple(params["attacker_position"])
    if kind == "zero_effort":
        return ZeroEffort(**params)
    if kind == "guessing_replay":
        return GuessingReplay(**params)
    if kind == "all_frequency":
        return AllFrequency(**params)
    raise ValueError(f"unknown attack kind {kind!r}")


def _all_frequency_waveform_builder(wf: dict, grid: FrequencyGrid) -> np.ndarray:
    return all_frequency_signal(grid, float(wf["per_tone_power"]), int(wf.get("duration", 8192)))


# For channel.scene_from_json(extra_waveforms=...): lets scene JSON carry
# attacker waveforms alongside ordinary ones.
WAVEFORM_BUILDERS = {"all_frequency": _all_frequency_waveform_builder}
