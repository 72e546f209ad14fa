"""Command-line front end for the simulation and evaluation harness.

Exit codes: 0 on success, 2 on configuration errors (bad arguments, bad
config files).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import adversary as adv
from . import channel as ch
from . import evaluation as ev
from .protocol import AuthPolicy, Endpoint, run_authentication
from .signal import save_signal_json, save_signal_wav


class ConfigError(ValueError):
    pass


def _parse_distances(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad distance list {text!r}") from exc


def _load_channel_cfg(args) -> ch.ChannelConfig | None:
    if not getattr(args, "config", None):
        return None
    try:
        with open(args.config) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    try:
        return ch.config_from_json(obj.get("channel", obj))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad channel config: {exc}") from exc


def _emit(report, out: str | None) -> None:
    if out is None:
        print(report.to_csv() if hasattr(report, "to_csv") else report.to_json())
        return
    payload = report.to_json() if out.endswith(".json") else report.to_csv()
    with open(out, "w") as fh:
        fh.write(payload)
    print(f"wrote {out}")


def _cmd_range(args) -> int:
    report = ev.distance_error_campaign(
        args.env,
        _parse_distances(args.distances),
        args.trials,
        args.seed,
        channel_cfg=_load_channel_cfg(args),
        min_trials=min(args.trials, ev.DEFAULT_MIN_TRIALS),
    )
    _emit(report, args.out)
    return 0


def _cmd_auth(args) -> int:
    cfg = _load_channel_cfg(args) or ch.ChannelConfig()
    cfg = ev._cfg_for(args.env, cfg)
    rng = np.random.default_rng(args.seed)
    auth = Endpoint("auth", (0.0, 0.0))
    vouch = Endpoint("vouch", (args.distance, 0.0))
    try:
        policy = AuthPolicy(threshold_m=args.tau)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    decision, transcript = run_authentication(auth, vouch, policy, rng, cfg)
    print(transcript.to_json())
    if args.wav_dump:
        _dump_session_wavs(args, cfg, transcript)
    return 0


def _dump_session_wavs(args, cfg, transcript) -> None:
    """Re-run the session's scene deterministically and write the recordings
    and both reference signals as WAV files."""
    from .signal import sample_spec, synthesize
    from . import spectrum  # noqa: F401  (kept close to detection parameters)

    os.makedirs(args.wav_dump, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    auth = Endpoint("auth", (0.0, 0.0))
    vouch = Endpoint("vouch", (args.distance, 0.0))
    spec_a = sample_spec(rng)
    spec_v = sample_spec(rng)
    sig_a = synthesize(spec_a)
    sig_v = synthesize(spec_v)
    save_signal_wav(sig_a, os.path.join(args.wav_dump, "reference_auth.wav"))
    save_signal_json(sig_a, os.path.join(args.wav_dump, "reference_auth.json"))
    save_signal_wav(sig_v, os.path.join(args.wav_dump, "reference_vouch.wav"))
    save_signal_json(sig_v, os.path.join(args.wav_dump, "reference_vouch.json"))
    t0 = transcript.playback_start
    gap = transcript.playback_gap
    if t0 is None:
        return
    duration = int(1.5 * ch.BASE_SAMPLE_RATE)
    scene = ch.AcousticScene(
        emissions=(
            ch.Emission("auth", sig_a.samples, t0, auth.position),
            ch.Emission("vouch", sig_v.samples, t0 + gap, vouch.position),
        ),
        recorders=(
            ch.Recorder("auth", auth.position),
            ch.Recorder("vouch", vouch.position),
        ),
        duration=duration,
        seed=transcript.session_seed or 0,
    )
    for device in ("auth", "vouch"):
        rec = ch.record(scene, device, cfg)
        ch.recording_to_wav(rec, os.path.join(args.wav_dump, f"recording_{device}.wav"))
    print(f"wrote WAV dumps to {args.wav_dump}")


def _cmd_frrfar(args) -> int:
    try:
        model = ev.ErrorModel(args.sigma, args.ds, args.bt_range)
        report = ev.frr_far_table(_parse_distances(args.tau_grid), model)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _emit(report, args.out)
    return 0


def _cmd_fit_sigma(args) -> int:
    try:
        sigma = ev.fit_sigma(args.frr, args.tau, args.ds, args.bt_range)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(json.dumps({"sigma_m": sigma, "tau_m": args.tau, "frr": args.frr}))
    return 0


def _cmd_attack(args) -> int:
    if args.kind == "zero":
        scenarios = [adv.ZeroEffort()]
    elif args.kind == "guessing":
        scenarios = [adv.GuessingReplay()]
    elif args.kind == "allfreq":
        per_trial = max(args.trials // 6, 1)
        reports = []
        total_accepts = 0
        for p in ev.all_frequency_power_sweep(6):
            rep = ev.attack_campaign(
                adv.AllFrequency(per_tone_power=p),
                per_trial,
                args.seed,
                separation_m=args.separation,
                environment=args.env,
                channel_cfg=_load_channel_cfg(args),
            )
            total_accepts += rep.accepts
            reports.append({"per_tone_power": p, "trials": rep.trials, "accepts": rep.accepts})
        print(json.dumps({"kind": "all_frequency_sweep", "accepts": total_accepts, "cells": reports}))
        return 0
    else:
        raise ConfigError(f"unknown attack kind {args.kind!r}")
    for scenario in scenarios:
        report = ev.attack_campaign(
            scenario,
            args.trials,
            args.seed,
            separation_m=args.separation,
            environment=args.env,
            channel_cfg=_load_channel_cfg(args),
        )
        print(report.to_json())
    return 0


def _cmd_compare(args) -> int:
    report = ev.detector_comparison(
        _parse_distances(args.distances),
        args.trials,
        args.seed,
        environment=args.env,
        sigma_proc_s=args.sigma_proc,
        channel_cfg=_load_channel_cfg(args),
    )
    _emit(report, args.out)
    return 0


def _cmd_multiuser(args) -> int:
    report = ev.multiuser_campaign(
        args.pairs,
        _parse_distances(args.distances),
        args.trials,
        args.seed,
        environment=args.env,
        channel_cfg=_load_channel_cfg(args),
        min_trials=min(args.trials, ev.DEFAULT_MIN_TRIALS),
    )
    _emit(report, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonicauth",
        description="Acoustic ranging and proximity-authentication simulation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--env", default="office", choices=sorted(ch.ENVIRONMENTS))
        p.add_argument("--config", help="JSON channel config file")
        p.add_argument("--out", help="output file (.csv or .json)")

    p = sub.add_parser("range", help="ranging-error campaign per distance")
    common(p)
    p.add_argument("--distances", default="0.5,1.0,1.5,2.0")
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(func=_cmd_range)

    p = sub.add_parser("auth", help="one authentication session")
    common(p)
    p.add_argument("--distance", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--wav-dump", help="directory for recordings and reference signals")
    p.set_defaults(func=_cmd_auth)

    p = sub.add_parser("frrfar", help="analytic FRR/FAR table")
    common(p)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--tau-grid", default="0.5,1.0,1.5,2.0", dest="tau_grid")
    p.add_argument("--ds", type=float, default=2.5)
    p.add_argument("--bt-range", type=float, default=10.0, dest="bt_range")
    p.set_defaults(func=_cmd_frrfar)

    p = sub.add_parser("fit-sigma", help="fit sigma to a target FRR")
    common(p)
    p.add_argument("--frr", type=float, required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--ds", type=float, default=2.5)
    p.add_argument("--bt-range", type=float, default=10.0, dest="bt_range")
    p.set_defaults(func=_cmd_fit_sigma)

    p = sub.add_parser("attack", help="attack campaign")
    common(p)
    p.add_argument("--kind", choices=["zero", "guessing", "allfreq"], required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--separation", type=float, default=3.0)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("compare", help="detector comparison")
    common(p)
    p.add_argument("--distances", default="1.0")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--sigma-proc", type=float, default=0.02, dest="sigma_proc")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("multiuser", help="concurrent-pairs interference campaign")
    common(p)
    p.add_argument("--pairs", type=int, default=3)
    p.add_argument("--distances", default="0.5,1.0,1.5,2.0")
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(func=_cmd_multiuser)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
