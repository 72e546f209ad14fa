"""Two-party ranging session and the proximity authentication decision.

One session: the authenticating device draws two randomized reference
signals, ships both to the vouching device over the paired link, both devices
play their assigned signal (staggered by a playback gap) while recording,
each locates both signals in its own recording, the vouching device returns
only its local location difference, and the authenticating device turns the
two differences into a distance:

    d = s/2 * ((l_va - l_vv) / f_v + (l_av - l_aa) / f_a)

which cancels the unknown clock offset between the devices. Access is granted
iff the (non-negative-clamped) distance is within the policy threshold.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import channel as ch
from . import spectrum
from .signal import DEFAULT_GRID, FrequencyGrid, ReferenceSignal, sample_spec, synthesize


@dataclass(frozen=True)
class SessionMeasurements:
    """The four detected locations plus each device's sample rate."""

    l_aa: int
    l_av: int
    l_va: int
    l_vv: int
    f_a: float
    f_v: float

    def __post_init__(self) -> None:
        if self.f_a <= 0 or self.f_v <= 0:
            raise ValueError("sample rates must be positive")
        if min(self.l_aa, self.l_av, self.l_va, self.l_vv) < 0:
            raise ValueError("locations must be non-negative sample indices")


def estimate_distance(m: SessionMeasurements, speed_of_sound: float = 340.0) -> float:
    """Two-way distance estimate in metres; may be negative on noisy input
    (callers clamp for decisions and keep the raw value for logging)."""
    return 0.5 * speed_of_sound * ((m.l_va - m.l_vv) / m.f_v + (m.l_av - m.l_aa) / m.f_a)


@dataclass(frozen=True)
class AuthPolicy:
    threshold_m: float = 1.0
    pairing_range_m: float = 10.0

    def __post_init__(self) -> None:
        if not 0 < self.threshold_m < self.pairing_range_m:
            raise ValueError("need 0 < threshold < pairing_range")


class RejectReason(str, Enum):
    NOT_PAIRED = "not_paired"
    SIGNAL_NOT_PRESENT = "signal_not_present"
    DISTANCE_EXCEEDED = "distance_exceeded"


@dataclass(frozen=True)
class AuthDecision:
    accepted: bool
    reason: RejectReason | None = None
    estimated_distance_m: float | None = None
    raw_distance_m: float | None = None

    def __post_init__(self) -> None:
        if self.accepted and self.reason is not None:
            raise ValueError("accepted decisions carry no reject reason")
        if not self.accepted and self.reason is None:
            raise ValueError("rejections must carry a reason")


def decide(raw_distance: float | None, signal_present: bool, paired: bool, policy: AuthPolicy) -> AuthDecision:
    """Pure decision function; reusable to recompute a verdict offline."""
    if not paired:
        return AuthDecision(accepted=False, reason=RejectReason.NOT_PAIRED)
    if not signal_present or raw_distance is None:
        return AuthDecision(accepted=False, reason=RejectReason.SIGNAL_NOT_PRESENT)
    clamped = max(raw_distance, 0.0)
    if clamped <= policy.threshold_m:
        return AuthDecision(accepted=True, estimated_distance_m=clamped, raw_distance_m=raw_distance)
    return AuthDecision(
        accepted=False,
        reason=RejectReason.DISTANCE_EXCEEDED,
        estimated_distance_m=clamped,
        raw_distance_m=raw_distance,
    )


@dataclass(frozen=True)
class Endpoint:
    device_id: str
    position: tuple[float, ...]
    sample_rate: float = ch.BASE_SAMPLE_RATE


@dataclass(frozen=True)
class ProtocolConfig:
    """Session timing. The playback gap keeps the two signals from
    overlapping in time (overlap would trip the out-of-set power check when
    the tone sets intersect); the small start jitter keeps scan alignment
    honest without letting coarse-scan misalignment eat the whole detection
    margin."""

    playback_gap_s: float = 0.3
    record_duration_s: float = 1.5
    playback_start_s: float = 0.2
    start_jitter_samples: int = 200
    disjoint_frequency_sets: bool = False


class LinkError(RuntimeError):
    pass


class SecureLink:
    """Stand-in for the paired short-range channel: reliable ordered byte
    pipe with a pairing flag and a hard range gate. Not cryptographic."""

    def __init__(self, paired: bool, max_range_m: float, drop: bool = False) -> None:
        self.paired = paired
        self.max_range_m = max_range_m
        self.drop = drop
        self.log: list[dict] = []

    def usable(self, distance_m: float) -> bool:
        return self.paired and not self.drop and distance_m <= self.max_range_m

    def send(self, sender: str, kind: str, payload: bytes, distance_m: float) -> bytes:
        if not self.usable(distance_m):
            raise LinkError("link unavailable")
        self.log.append({"sender": sender, "kind": kind, "bytes": len(payload)})
        return payload


@dataclass
class SessionTranscript:
    """Everything needed to recompute the verdict offline."""

    auth_id: str
    vouch_id: str
    auth_position: tuple[float, ...]
    vouch_position: tuple[float, ...]
    true_distance_m: float
    environment: str
    paired_link_ok: bool
    freqs_a: tuple[float, ...] = ()
    freqs_v: tuple[float, ...] = ()
    locations: dict = field(default_factory=dict)
    peak_norm_powers: dict = field(default_factory=dict)
    sample_rates: dict = field(default_factory=dict)
    playback_start: int | None = None
    playback_gap: int | None = None
    signal_present: bool = False
    raw_distance_m: float | None = None
    estimated_distance_m: float | None = None
    verdict: str = "reject"
    reason: str | None = None
    threshold_m: float | None = None
    session_seed: int | None = None
    link_log: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


# An intruder hook receives (scene context, rng) and returns extra emissions.
@dataclass(frozen=True)
class SceneContext:
    auth_position: tuple[float, ...]
    vouch_position: tuple[float, ...]
    duration: int
    base_sample_rate: float


IntruderFactory = Callable[[SceneContext, np.random.Generator], Sequence[ch.Emission]]


def _outcome_fields(out: spectrum.DetectionOutcome) -> tuple[int | None, float | None]:
    return out.location, out.peak_norm_power


def run_authentication(
    auth: Endpoint,
    vouch: Endpoint,
    policy: AuthPolicy,
    rng: np.random.Generator,
    channel_cfg: ch.ChannelConfig | None = None,
    *,
    protocol_cfg: ProtocolConfig = ProtocolConfig(),
    params: spectrum.DetectionParams = spectrum.DetectionParams(),
    grid: FrequencyGrid = DEFAULT_GRID,
    paired: bool = True,
    link_drop: bool = False,
    intruder: IntruderFactory | None = None,
    extra_emissions: Sequence[ch.Emission] = (),
    detector: str = "freq",
) -> tuple[AuthDecision, SessionTranscript]:
    """Run one authentication session end to end on the simulated channel.

    ``detector`` selects the signal-location method: ``"freq"`` (normalized
    spectral power, the default) or ``"xcorr"`` (raw cross-correlation
    baseline, which has no absence verdict).
    """
    cfg = channel_cfg if channel_cfg is not None else ch.ChannelConfig()
    fs = ch.BASE_SAMPLE_RATE
    d_true = float(np.linalg.norm(np.asarray(auth.position) - np.asarray(vouch.position)))

    transcript = SessionTranscript(
        auth_id=auth.device_id,
        vouch_id=vouch.device_id,
        auth_position=auth.position,
        vouch_position=vouch.position,
        true_distance_m=d_true,
        environment=cfg.noise.name,
        paired_link_ok=False,
        threshold_m=policy.threshold_m,
        sample_rates={"auth": auth.sample_rate, "vouch": vouch.sample_rate},
    )

    link = SecureLink(paired=paired, max_range_m=policy.pairing_range_m, drop=link_drop)
    if not link.usable(d_true):
        decision = decide(None, False, False, policy)
        transcript.verdict = "reject"
        transcript.reason = decision.reason.value
        return decision, transcript
    transcript.paired_link_ok = True

    # Step I: the authenticating device draws both reference signals.
    spec_a = sample_spec(rng, grid)
    exclude = frozenset(spec_a.frequencies) if protocol_cfg.disjoint_frequency_sets else frozenset()
    spec_v = sample_spec(rng, grid, exclude=exclude)
    sig_a = synthesize(spec_a, theta=params.theta)
    sig_v = synthesize(spec_v, theta=params.theta)
    transcript.freqs_a = spec_a.frequencies
    transcript.freqs_v = spec_v.frequencies

    # Step II: byte-faithful transfer of both signals over the paired link.
    blob = link.send(auth.device_id, "reference_signals", sig_a.to_bytes() + sig_v.to_bytes(), d_true)
    split = 4 + int.from_bytes(blob[:4], "big") + sig_a.samples.nbytes
    vouch_sig_a = ReferenceSignal.from_bytes(blob[:split], grid)
    vouch_sig_v = ReferenceSignal.from_bytes(blob[split:], grid)

    # Step III: staggered playback while both devices record.
    duration = int(round(protocol_cfg.record_duration_s * fs))
    gap = int(round(protocol_cfg.playback_gap_s * fs))
    jitter = protocol_cfg.start_jitter_samples
    t0 = int(round(protocol_cfg.playback_start_s * fs)) + int(rng.integers(-jitter, jitter + 1))
    transcript.playback_start = t0
    transcript.playback_gap = gap

    emissions = [
        ch.Emission(auth.device_id, sig_a.samples, t0, auth.position),
        ch.Emission(vouch.device_id, vouch_sig_v.samples, t0 + gap, vouch.position),
    ]
    emissions.extend(extra_emissions)
    scene_seed = int(rng.integers(0, 2**31 - 1))
    ctx = SceneContext(auth.position, vouch.position, duration, fs)
    if intruder is not None:
        emissions.extend(intruder(ctx, rng))

    scene = ch.AcousticScene(
        emissions=tuple(emissions),
        recorders=(
            ch.Recorder(auth.device_id, auth.position, auth.sample_rate),
            ch.Recorder(vouch.device_id, vouch.position, vouch.sample_rate),
        ),
        duration=duration,
        seed=scene_seed,
    )
    transcript.session_seed = scene_seed
    rec_a = ch.record(scene, auth.device_id, cfg)
    rec_v = ch.record(scene, vouch.device_id, cfg)

    # Step IV: each device locates both signals in its own recording.
    if detector == "freq":
        out_aa, out_av = spectrum.detect_pair(
            rec_a.samples, sig_a, sig_v, params, grid=grid, sample_rate=auth.sample_rate
        )
        out_va, out_vv = spectrum.detect_pair(
            rec_v.samples, vouch_sig_a, vouch_sig_v, params, grid=grid, sample_rate=vouch.sample_rate
        )
    elif detector == "xcorr":
        out_aa = spectrum.DetectionOutcome(spectrum.cross_correlate_detect(rec_a.samples, sig_a), None)
        out_av = spectrum.DetectionOutcome(spectrum.cross_correlate_detect(rec_a.samples, sig_v), None)
        out_va = spectrum.DetectionOutcome(spectrum.cross_correlate_detect(rec_v.samples, vouch_sig_a), None)
        out_vv = spectrum.DetectionOutcome(spectrum.cross_correlate_detect(rec_v.samples, vouch_sig_v), None)
    else:
        raise ValueError(f"unknown detector {detector!r}")

    transcript.locations = {
        "l_aa": out_aa.location,
        "l_av": out_av.location,
        "l_va": out_va.location,
        "l_vv": out_vv.location,
    }
    transcript.peak_norm_powers = {
        "l_aa": out_aa.peak_norm_power,
        "l_av": out_av.peak_norm_power,
        "l_va": out_va.peak_norm_power,
        "l_vv": out_vv.peak_norm_power,
    }

    present = all(o.location is not None for o in (out_aa, out_av, out_va, out_vv))
    transcript.signal_present = present
    if not present:
        decision = decide(None, False, True, policy)
        transcript.reason = decision.reason.value
        transcript.link_log = link.log
        return decision, transcript

    # Step V: the vouching device reports only its local location difference.
    v_diff = out_va.location - out_vv.location
    link.send(vouch.device_id, "location_difference", int(v_diff).to_bytes(8, "big", signed=True), d_true)

    # Step VI: distance and verdict.
    raw = 0.5 * cfg.speed_of_sound * (v_diff / vouch.sample_rate + (out_av.location - out_aa.location) / auth.sample_rate)
    decision = decide(raw, True, True, policy)
    transcript.raw_distance_m = raw
    transcript.estimated_distance_m = decision.estimated_distance_m
    transcript.verdict = "accept" if decision.accepted else "reject"
    transcript.reason = None if decision.accepted else decision.reason.value
    transcript.link_log = link.log
    return decision, transcript


def measurements_from_transcript(t: SessionTranscript) -> SessionMeasurements:
    locs = t.locations
    return SessionMeasurements(
        l_aa=locs["l_aa"],
        l_av=locs["l_av"],
        l_va=locs["l_va"],
        l_vv=locs["l_vv"],
        f_a=t.sample_rates["auth"],
        f_v=t.sample_rates["vouch"],
    )


def one_way_ranging(
    auth: Endpoint,
    vouch: Endpoint,
    rng: np.random.Generator,
    channel_cfg: ch.ChannelConfig | None = None,
    *,
    processing_delay_s: float,
    params: spectrum.DetectionParams = spectrum.DetectionParams(),
    grid: FrequencyGrid = DEFAULT_GRID,
    record_duration_s: float = 1.2,
) -> tuple[float | None, float]:
    """One round of the one-way echo baseline.

    The authenticating device hands a fresh reference signal to the vouching
    device (instantaneous over the paired link) and starts its clock; the
    vouching device plays it after ``processing_delay_s``; the authenticating
    device locates the arrival. Returns (elapsed seconds or None when not
    detected, the processing delay actually used).
    """
    cfg = channel_cfg if channel_cfg is not None else ch.ChannelConfig()
    fs = ch.BASE_SAMPLE_RATE
    sig = synthesize(sample_spec(rng, grid), theta=params.theta)
    t_send = int(round(0.15 * fs))
    play_at = t_send + int(round(processing_delay_s * fs))
    duration = int(round(record_duration_s * fs))
    scene = ch.AcousticScene(
        emissions=(ch.Emission(vouch.device_id, sig.samples, play_at, vouch.position),),
        recorders=(ch.Recorder(auth.device_id, auth.position, auth.sample_rate),),
        duration=duration,
        seed=int(rng.integers(0, 2**31 - 1)),
    )
    rec = ch.record(scene, auth.device_id, cfg)
    out = spectrum.detect(rec.samples, sig, params, grid=grid, sample_rate=auth.sample_rate)
    if out.location is None:
        return None, processing_delay_s
    return (out.location - t_send) / auth.sample_rate, processing_delay_s
