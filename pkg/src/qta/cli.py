"""Command-line front end.

Exit codes: 0 success, 1 simulation error, 2 malformed input or parameters,
3 reflection-path explosion.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import DEMOS, demo_path, eve_info, photon_stats
from ._io import atomic_write, json_text
from .audit import load_scenario, pa_budget_csv, pa_budget_sweep, run_audit
from .errors import FormatError, InvalidParameter, NyquistViolation, PathExplosion, QTAError
from .reflectometry import (
    GridSpec,
    SweepSpec,
    circuit_events,
    circuit_from_dict,
    detect_peaks,
    rayleigh_segments,
    synthesize_ofdr,
    synthesize_otdr,
)

EXIT_OK, EXIT_SIM, EXIT_INPUT, EXIT_PATHS = 0, 1, 2, 3


def _resolve(path: str) -> Path:
    if path.startswith("demo:"):
        name = path[5:]
        if name not in DEMOS:
            raise FormatError(f"unknown demo {name!r}; choose from {sorted(DEMOS)}")
        return demo_path(name)
    return Path(path)


def _load_json(path: str):
    p = _resolve(path)
    try:
        return json.loads(p.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read {p} ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON in {p}: {exc}") from None


def _peak_table(peaks, events, tol: float, spans=()) -> str:
    lines = [f"{'distance_m':>12}  {'power_db':>9}  component"]
    for pk in peaks:
        near = [e for e in events if abs(e.distance_m - pk.distance_m) <= tol]
        if near:
            label = max(near, key=lambda e: e.power_db).label
        elif any(s.start_m - tol <= pk.distance_m <= s.stop_m + tol for s in spans):
            label = "(fiber backscatter)"
        else:
            label = "?"
        lines.append(f"{pk.distance_m:12.3f}  {pk.power_db:9.2f}  {label}")
    return "\n".join(lines) + "\n"


def cmd_otdr(args) -> int:
    circuit = circuit_from_dict(_load_json(args.circuit))
    events = circuit_events(circuit, args.max_order, args.floor_db)
    grid = None
    if args.step_m is not None:
        lo = min([0.0] + [e.distance_m for e in events]) - 2 * args.pulse_width_m
        hi = max([0.0] + [e.distance_m for e in events]
                 + [s.stop_m for s in rayleigh_segments(circuit)]) + 2 * args.pulse_width_m
        grid = GridSpec(lo, hi, args.step_m)
    spans = rayleigh_segments(circuit)
    trace = synthesize_otdr(events, args.pulse_width_m, grid, spans,
                            noise_floor_db=args.noise_floor_db, noise_sigma=args.noise_sigma,
                            seed=photon_stats.seed_from_env())
    peaks = detect_peaks(trace, args.min_prominence_db)
    atomic_write(args.out, trace.to_csv())
    sys.stdout.write(_peak_table(peaks, events, args.pulse_width_m, spans))
    return EXIT_OK


def cmd_ofdr(args) -> int:
    circuit = circuit_from_dict(_load_json(args.circuit))
    sweep = SweepSpec(args.sweep_rate, args.duration, args.sample_rate)
    events = circuit_events(circuit, args.max_order, args.floor_db)
    trace = synthesize_ofdr(events, sweep, args.coherence_m, args.lo_reflectance_db,
                            group_index=args.group_index, noise_floor_db=args.noise_floor_db,
                            noise_sigma=args.noise_sigma, seed=photon_stats.seed_from_env())
    peaks = detect_peaks(trace, args.min_prominence_db)
    atomic_write(args.out, trace.to_csv())
    sys.stdout.write(_peak_table(peaks, events, 2 * sweep.bin_m(args.group_index)))
    return EXIT_OK


def cmd_info_gain(args) -> int:
    mu = args.mu
    if not (math.isfinite(mu) and mu >= 0):
        raise InvalidParameter(f"--mu must be finite and >= 0, got {mu}")
    trojan = eve_info.trojan_info(mu)
    reduced = eve_info.reduced_info(mu)
    out = {
        "mu": mu,
        "trojan": trojan,
        "reduced": reduced,
        "ratio": eve_info.randomization_gain_ratio(mu) if mu > 0 else None,
        "randomized": args.randomized,
        "info_bits": reduced if args.randomized else trojan,
    }
    sys.stdout.write(json_text(out))
    return EXIT_OK


def cmd_stats(args) -> int:
    if args.fock is not None:
        d_in = photon_stats.fock(args.fock)
        if args.shots:
            d_out = photon_stats.monte_carlo_thin(args.fock, args.t, args.shots,
                                                  seed=photon_stats.seed_from_env())
        else:
            d_out = photon_stats.attenuate(d_in, args.t)
        moment = float(args.fock * (args.fock - 1))
    else:
        if args.shots:
            raise InvalidParameter("--shots requires a Fock input (--fock)")
        d_out = photon_stats.attenuate_coherent(args.mu_in, args.t)
        moment = args.mu_in ** 2
    mean_out = d_out.mean()
    reference = photon_stats.poisson_distribution(mean_out)
    summary = {
        "input": {"fock": args.fock} if args.fock is not None else {"coherent_mu": args.mu_in},
        "t": args.t,
        "mean_out": mean_out,
        "tv_to_poisson": photon_stats.tv_distance(d_out, reference),
        "multi_photon_exact": math.fsum(d_out.probs[2:]),
        "multi_photon_leading": moment * args.t ** 2 / 2.0,
        "monte_carlo_shots": args.shots or 0,
    }
    if args.out:
        atomic_write(args.out, d_out.to_csv())
    sys.stdout.write(json_text(summary))
    return EXIT_OK


def cmd_audit(args) -> int:
    scenario = load_scenario(_resolve(args.scenario))
    report = run_audit(scenario)
    if args.out:
        atomic_write(args.out, report.to_json())
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.points < 1:
        raise InvalidParameter("--points must be >= 1")
    if args.log:
        if not 0 < args.mu_min <= args.mu_max:
            raise InvalidParameter("log grid needs 0 < mu-min <= mu-max")
        grid = np.geomspace(args.mu_min, args.mu_max, args.points)
    else:
        if not 0 <= args.mu_min <= args.mu_max:
            raise InvalidParameter("grid needs 0 <= mu-min <= mu-max")
        grid = np.linspace(args.mu_min, args.mu_max, args.points)
    if args.scenario:
        text = pa_budget_csv(pa_budget_sweep(grid, load_scenario(_resolve(args.scenario))))
    else:
        text = eve_info.info_sweep_csv(grid)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qta", description="Trojan-horse audit toolkit for QKD apparatuses.")
    sub = p.add_subparsers(dest="cmd", required=True)

    def reflectometry_args(s, floor_db, noise_floor_db):
        s.add_argument("circuit", help="circuit JSON file (or demo:alice / demo:bob)")
        s.add_argument("--out", required=True, help="trace CSV to write")
        s.add_argument("--max-order", type=int, default=3)
        s.add_argument("--floor-db", type=float, default=floor_db,
                       help="drop reflection paths weaker than this")
        s.add_argument("--noise-floor-db", type=float, default=noise_floor_db)
        s.add_argument("--noise-sigma", type=float, default=0.0,
                       help="std of additive noise (seeded by QTA_SEED)")

    s = sub.add_parser("otdr", help="simulate an OTDR trace")
    reflectometry_args(s, -120.0, -150.0)
    s.add_argument("--pulse-width-m", type=float, default=0.5)
    s.add_argument("--step-m", type=float, default=None)
    s.add_argument("--min-prominence-db", type=float, default=3.0)
    s.set_defaults(func=cmd_otdr)

    s = sub.add_parser("ofdr", help="simulate an OFDR trace")
    # window sidelobes sit ~90 dB under each peak; keep the floor above them
    reflectometry_args(s, -100.0, -110.0)
    s.add_argument("--sweep-rate", type=float, default=5e11, help="Hz/s")
    s.add_argument("--duration", type=float, default=0.02, help="s")
    s.add_argument("--sample-rate", type=float, default=1e6, help="Hz")
    s.add_argument("--coherence-m", type=float, default=1000.0)
    s.add_argument("--lo-reflectance-db", type=float, default=-20.0)
    s.add_argument("--group-index", type=float, default=1.468)
    s.add_argument("--min-prominence-db", type=float, default=10.0)
    s.set_defaults(func=cmd_ofdr)

    s = sub.add_parser("info-gain", help="Eve's information for a returned mean photon number")
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--randomized", action="store_true", help="report the phase-randomized bound")
    s.set_defaults(func=cmd_info_gain)

    s = sub.add_parser("stats", help="photon statistics of an attenuated probe")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--fock", type=int)
    src.add_argument("--mu-in", type=float)
    s.add_argument("--t", type=float, required=True, help="power transmission")
    s.add_argument("--shots", type=int, default=0, help="Monte Carlo shots (Fock input only)")
    s.add_argument("--out", help="distribution CSV to write")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("audit", help="run a full audit of a scenario")
    s.add_argument("scenario", help="scenario JSON file (or demo:scenario)")
    s.add_argument("--out", help="report JSON to write")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("sweep", help="information bounds over a mu grid")
    s.add_argument("--mu-min", type=float, default=0.0)
    s.add_argument("--mu-max", type=float, default=1.0)
    s.add_argument("--points", type=int, default=101)
    s.add_argument("--log", action="store_true")
    s.add_argument("--scenario", help="apply a scenario's gate setting to the budget table")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PathExplosion as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PATHS
    except (FormatError, InvalidParameter, NyquistViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except QTAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
