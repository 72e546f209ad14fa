"""Construction of randomized multi-tone reference signals.

A reference signal is a short burst made of sine waves whose frequencies are
drawn from a fixed grid of candidate frequencies. The draw is uniform over all
non-empty proper subsets of the grid, so an eavesdropper that knows the grid
still has to guess the exact subset. Per-tone nominal powers are measured from
the clean samples with the same spectral pipeline used by the detector, which
keeps the detection thresholds self-consistent regardless of FFT scaling
conventions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import pcm

DEFAULT_BAND_LOW = 25_000.0
DEFAULT_BAND_HIGH = 35_000.0
DEFAULT_BIN_COUNT = 30
DEFAULT_LENGTH = 4096
DEFAULT_SAMPLE_RATE = 44_100.0
DEFAULT_AMPLITUDE_BUDGET = 32_000

# Exact subset sampling draws one integer uniform over 2**N - 2 outcomes.
_MAX_EXACT_BINS = 62


@dataclass(frozen=True)
class FrequencyGrid:
    """Equally spaced candidate frequencies: the midpoints of ``bin_count``
    bins covering ``(band_low, band_high)``.

    Candidate i sits at ``band_low + (i + 0.5) * (band_high - band_low) / N``.
    """

    band_low: float
    band_high: float
    bin_count: int
    candidates: tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        if not self.band_low < self.band_high:
            raise ValueError("invalid band: band_low must be < band_high")
        if self.bin_count < 2:
            raise ValueError("invalid bin count: need at least 2 bins")
        spacing = (self.band_high - self.band_low) / self.bin_count
        cands = tuple(self.band_low + (i + 0.5) * spacing for i in range(self.bin_count))
        object.__setattr__(self, "candidates", cands)

    @property
    def spacing(self) -> float:
        return (self.band_high - self.band_low) / self.bin_count


def build_grid(band_low: float, band_high: float, bin_count: int) -> FrequencyGrid:
    """Build the candidate-frequency grid over ``[band_low, band_high]``."""
    return FrequencyGrid(band_low, band_high, bin_count)


DEFAULT_GRID = build_grid(DEFAULT_BAND_LOW, DEFAULT_BAND_HIGH, DEFAULT_BIN_COUNT)


@dataclass(frozen=True)
class SignalSpec:
    """Recipe for one reference signal: which candidate tones, how many
    samples, and the peak-amplitude budget shared by the tones."""

    frequencies: tuple[float, ...]
    grid: FrequencyGrid = DEFAULT_GRID
    length: int = DEFAULT_LENGTH
    sample_rate: float = DEFAULT_SAMPLE_RATE
    amplitude_budget: int = DEFAULT_AMPLITUDE_BUDGET

    def __post_init__(self) -> None:
        freqs = tuple(sorted(self.frequencies))
        object.__setattr__(self, "frequencies", freqs)
        n = len(freqs)
        if not 0 < n < self.grid.bin_count:
            raise ValueError("need 0 < |F| < bin_count")
        if len(set(freqs)) != n:
            raise ValueError("duplicate frequencies")
        if not set(freqs) <= set(self.grid.candidates):
            raise ValueError("frequencies must be grid candidates")
        if self.length < 2:
            raise ValueError("length too short")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not 0 < self.amplitude_budget <= 32_767:
            raise ValueError("amplitude_budget must fit a signed 16-bit sample")

    @property
    def tone_count(self) -> int:
        return len(self.frequencies)


@dataclass(frozen=True, eq=False)
class ReferenceSignal:
    """A synthesized reference signal with its measured per-tone powers.

    ``nominal_power[f]`` is the power the detector's own measurement pipeline
    reports for tone ``f`` on the clean samples; ``total_power`` is their sum.
    """

    spec: SignalSpec
    samples: np.ndarray
    nominal_power: dict[float, float]
    total_power: float

    @property
    def frequencies(self) -> tuple[float, ...]:
        return self.spec.frequencies

    def to_bytes(self) -> bytes:
        """Serialize for transfer over a paired link (samples + tone set)."""
        header = json.dumps(
            {
                "freqs_hz": list(self.spec.frequencies),
                "nominal_power": [self.nominal_power[f] for f in self.spec.frequencies],
                "length": self.spec.length,
                "sample_rate": self.spec.sample_rate,
                "amplitude_budget": self.spec.amplitude_budget,
            }
        ).encode()
        return len(header).to_bytes(4, "big") + header + self.samples.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, grid: FrequencyGrid = DEFAULT_GRID) -> "ReferenceSignal":
        hlen = int.from_bytes(blob[:4], "big")
        meta = json.loads(blob[4 : 4 + hlen].decode())
        samples = np.frombuffer(blob[4 + hlen :], dtype=np.int16).copy()
        spec = SignalSpec(
            frequencies=tuple(meta["freqs_hz"]),
            grid=grid,
            length=meta["length"],
            sample_rate=meta["sample_rate"],
            amplitude_budget=meta["amplitude_budget"],
        )
        power = dict(zip(spec.frequencies, meta["nominal_power"]))
        return cls(spec=spec, samples=samples, nominal_power=power, total_power=sum(meta["nominal_power"]))


def sample_spec(
    rng: np.random.Generator,
    grid: FrequencyGrid = DEFAULT_GRID,
    *,
    length: int = DEFAULT_LENGTH,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    amplitude_budget: int = DEFAULT_AMPLITUDE_BUDGET,
    exclude: frozenset[float] | set[float] = frozenset(),
) -> SignalSpec:
    """Draw a tone set uniformly over all non-empty proper subsets of the grid.

    The subset size follows the binomial weights C(M, n), which is what makes
    every admissible subset equally likely (probability ``1 / (2**M - 2)``).
    ``exclude`` removes candidates from the pool before drawing, for callers
    that want disjoint tone sets across signals.
    """
    pool = [c for c in grid.candidates if c not in exclude]
    m = len(pool)
    if m < 2:
        raise ValueError("candidate pool too small to draw a proper subset")

    if m <= _MAX_EXACT_BINS:
        total = (1 << m) - 2
        u = int(rng.integers(0, total))
        cum = 0
        n = 0
        for size in range(1, m):
            cum += math.comb(m, size)
            if u < cum:
                n = size
                break
    else:
        weights = np.array([math.comb(m, size) for size in range(1, m)], dtype=float)
        n = int(rng.choice(np.arange(1, m), p=weights / weights.sum()))

    chosen = rng.choice(np.asarray(pool), size=n, replace=False)
    return SignalSpec(
        frequencies=tuple(float(f) for f in chosen),
        grid=grid,
        length=length,
        sample_rate=sample_rate,
        amplitude_budget=amplitude_budget,
    )


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


# With every tone at phase zero, the spectral tails of the off-bin tones can
# stack coherently and push an out-of-set candidate window past the
# detector's absence threshold on the clean signal itself; an unlucky phase
# mix can also leave the first or last few hundred microseconds of the burst
# nearly silent, which blunts the detector's score peak. Synthesis therefore
# keeps zero phases when they already confine the leakage below
# _LEAKAGE_TARGET times the absence threshold while carrying enough edge
# energy, and otherwise searches a fixed, tone-set-seeded family of random
# phase draws for the best candidate.
_PHASE_CANDIDATES = 16
_LEAKAGE_TARGET = 0.6
_EDGE_SPAN = 48
_EDGE_ENERGY_TARGET = 0.5  # of the burst's average energy rate


def _leakage_ratio(samples: np.ndarray, spec: SignalSpec, theta: int) -> float:
    """Worst out-of-set candidate power relative to the absence threshold."""
    from . import spectrum

    measured = spectrum.measure_candidate_powers(samples, spec.grid, spec.sample_rate, theta)
    in_set = np.array([f in set(spec.frequencies) for f in spec.grid.candidates])
    beta = 0.005 * measured[in_set].sum() / spec.tone_count
    if in_set.all() or beta == 0.0:
        return 0.0
    return float(measured[~in_set].max() / beta)


def _edge_energy_ratio(samples: np.ndarray) -> float:
    """Energy rate of the weakest burst edge relative to the whole burst."""
    span = _EDGE_SPAN
    total_rate = float(np.mean(samples.astype(np.float64) ** 2))
    if total_rate == 0.0:
        return 0.0
    head = float(np.mean(samples[:span].astype(np.float64) ** 2))
    tail = float(np.mean(samples[-span:].astype(np.float64) ** 2))
    return min(head, tail) / total_rate


def _phase_family(spec: SignalSpec) -> list[np.ndarray]:
    """Deterministic phase candidates for one tone set: zero phases first,
    then seeded random draws."""
    index = {f: i for i, f in enumerate(spec.grid.candidates)}
    key = [index[f] for f in spec.frequencies] + [spec.grid.bin_count, spec.length]
    rng = np.random.default_rng(np.random.SeedSequence(key))
    family = [np.zeros(spec.tone_count)]
    for _ in range(_PHASE_CANDIDATES - 1):
        family.append(rng.uniform(0.0, 2.0 * np.pi, spec.tone_count))
    return family


def _render(spec: SignalSpec, phases: np.ndarray) -> np.ndarray:
    n = spec.tone_count
    amp = spec.amplitude_budget / n
    t = np.arange(spec.length, dtype=np.float64)
    x = np.zeros(spec.length, dtype=np.float64)
    for f, ph in zip(spec.frequencies, phases):
        x += amp * np.sin(2.0 * np.pi * f * t / spec.sample_rate + ph)
    samples = _round_half_away(x)
    peak = int(np.max(np.abs(samples)))
    if peak > spec.amplitude_budget:
        raise RuntimeError(f"synthesis clipped amplitude budget: {peak}")
    return samples


def synthesize(
    spec: SignalSpec,
    *,
    theta: int = 5,
    phase_rng: np.random.Generator | None = None,
) -> ReferenceSignal:
    """Render the reference signal and measure its per-tone nominal powers.

    Each tone gets amplitude ``amplitude_budget / n`` so the sum can never
    clip a 16-bit sample. Phases are zero when the zero-phase rendering keeps
    out-of-set spectral leakage confined, otherwise the best of a fixed
    tone-set-seeded family of phase draws (deterministic either way). Passing
    ``phase_rng`` draws fully random phases instead. ``theta`` is the
    half-width (in spectral bins) of the per-tone power measurement and must
    match the detector's setting.
    """
    from . import spectrum  # runtime import; spectrum depends on these types only for annotations

    if phase_rng is not None:
        samples = _render(spec, phase_rng.uniform(0.0, 2.0 * np.pi, size=spec.tone_count))
    else:
        samples = None
        fallback, fallback_key = None, None
        for phases in _phase_family(spec):
            candidate = _render(spec, phases)
            leak = _leakage_ratio(candidate, spec, theta)
            edge = _edge_energy_ratio(candidate)
            if leak <= _LEAKAGE_TARGET and edge >= _EDGE_ENERGY_TARGET:
                samples = candidate
                break
            # fallback ranking: confined leakage beats anything, then strongest
            # edge among confined candidates, then least leakage
            key = (0, -edge) if leak <= _LEAKAGE_TARGET else (1, leak)
            if fallback is None or key < fallback_key:
                fallback, fallback_key = candidate, key
        if samples is None:
            samples = fallback
    samples = samples.astype(np.int16)

    measured = spectrum.measure_candidate_powers(
        samples.astype(np.float64), spec.grid, spec.sample_rate, theta
    )
    index = {f: i for i, f in enumerate(spec.grid.candidates)}
    power = {f: float(measured[index[f]]) for f in spec.frequencies}
    return ReferenceSignal(
        spec=spec,
        samples=samples,
        nominal_power=power,
        total_power=float(sum(power.values())),
    )


def save_signal_wav(sig: ReferenceSignal, path: str) -> None:
    pcm.save_wav(path, sig.samples, sig.spec.sample_rate)


def save_signal_json(sig: ReferenceSignal, path: str) -> None:
    """Export the tone set and nominal powers as JSON."""
    payload = {
        "freqs_hz": list(sig.spec.frequencies),
        "nominal_power": [sig.nominal_power[f] for f in sig.spec.frequencies],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_signal(
    wav_path: str,
    json_path: str,
    grid: FrequencyGrid = DEFAULT_GRID,
    amplitude_budget: int = DEFAULT_AMPLITUDE_BUDGET,
) -> ReferenceSignal:
    """Rebuild a reference signal from its WAV samples and JSON tone map."""
    samples, rate = pcm.load_wav(wav_path)
    with open(json_path) as fh:
        meta = json.load(fh)
    spec = SignalSpec(
        frequencies=tuple(meta["freqs_hz"]),
        grid=grid,
        length=len(samples),
        sample_rate=float(rate),
        amplitude_budget=amplitude_budget,
    )
    power = dict(zip(spec.frequencies, (float(p) for p in meta["nominal_power"])))
    return ReferenceSignal(spec=spec, samples=samples, nominal_power=power, total_power=float(sum(power.values())))
