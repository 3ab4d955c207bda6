"""``leoident`` command-line entry point.

Exit codes: 0 success, 1 processing failure, 2 usage or configuration error.
Every writing command stores its resolved configuration as
``resolved_config.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

from leoident import __version__
from leoident.errors import LeoIdentError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

IDENTIFY_DEFAULTS: dict[str, Any] = {
    "frames": None,
    "status": None,
    "location": None,
    "catalog": None,
    "outages": None,
    "hardware_model": None,
    "tau_obs": 0.5,
    "tau_match": 4.0,
    "elevation_mask": 20.0,
    "debug_pgm": None,
}
DEFAULTS: dict[str, dict[str, Any]] = {
    "identify": dict(IDENTIFY_DEFAULTS),
    "validate": {**IDENTIFY_DEFAULTS, "identification": None, "flag_px": 2.0, "cadence": 0.5},
    "correlate": {
        "identification": None,
        "switches": None,
        "outages": None,
        "pings": None,
        "throughput": None,
        "ping_interval_ms": 10.0,
        "window": 3.0,
    },
    "synth": {
        "seed": 1,
        "slots": 3,
        "satellites": 60,
        "motion": "mixed",
        "switch_density": 0.6,
        "frame_type": "FRAME_UT",
        "red_pixels": False,
        "hardware_model": "hp1_proto2",
        "tilt": 7.9,
    },
    "report": {"inputs": None},
}
REQUIRED: dict[str, tuple[str, ...]] = {
    "identify": ("frames", "status", "location", "catalog"),
    "validate": ("frames", "status", "location", "catalog", "identification"),
    "correlate": (),
    "synth": (),
    "report": ("inputs",),
}
PATH_KEYS = ("frames", "status", "location", "catalog", "outages", "identification", "switches", "pings", "throughput")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- parser


def _identify_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frames", help="obstruction frame CSV")
    p.add_argument("--status", help="UT status CSV")
    p.add_argument("--location", help="UT location CSV")
    p.add_argument("--catalog", help="TLE catalog")
    p.add_argument("--outages", help="outage event CSV (optional, used to corroborate switches)")
    p.add_argument("--hardware-model", help="override the hardware model from the status stream")
    p.add_argument("--tau-obs", type=float, help="obstruction threshold in (0, 1) (default 0.5)")
    p.add_argument("--tau-match", type=float, help="match threshold in degrees (default 4)")
    p.add_argument("--elevation-mask", type=float, help="candidate elevation mask in degrees (default 20)")
    p.add_argument("--debug-pgm", help="directory for PGM dumps of every processed frame")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leoident", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values; command-line flags take precedence")
    common.add_argument("--output-dir", required=True, help="directory for all outputs")

    p = sub.add_parser("identify", parents=[common], help="identify serving satellites and beam switches")
    _identify_inputs(p)

    p = sub.add_parser("validate", parents=[common], help="compare identifications with reconstructed maps")
    _identify_inputs(p)
    p.add_argument("--identification", help="identification.csv from a previous identify run")
    p.add_argument("--flag-px", type=float, help="mean pixel distance above which an interval is flagged")
    p.add_argument("--cadence", type=float, help="reconstruction sampling interval in seconds")

    p = sub.add_parser("correlate", parents=[common], help="outage breakdown and event timeline")
    p.add_argument("--identification")
    p.add_argument("--switches")
    p.add_argument("--outages")
    p.add_argument("--pings")
    p.add_argument("--throughput")
    p.add_argument("--ping-interval-ms", type=float)
    p.add_argument("--window", type=float, help="switch annotation window in seconds (default 3)")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus with ground truth")
    p.add_argument("--seed", type=int)
    p.add_argument("--slots", type=int)
    p.add_argument("--satellites", type=int)
    p.add_argument("--motion", choices=["stationary", "turning", "mixed"])
    p.add_argument("--switch-density", type=float)
    p.add_argument("--frame-type", choices=["FRAME_UT", "FRAME_EARTH"])
    p.add_argument("--red-pixels", action="store_true", default=None)
    p.add_argument("--hardware-model")
    p.add_argument("--tilt", type=float)

    p = sub.add_parser("report", parents=[common], help="merge run outputs into summary.md")
    p.add_argument("--inputs", nargs="+", help="directories holding outputs of earlier commands")
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then the config file, then explicit flags."""
    resolved = dict(DEFAULTS[command])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {args.config} must hold a JSON object")
        unknown = sorted(set(loaded) - set(resolved))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        resolved.update(loaded)
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    for key in REQUIRED[command]:
        if resolved.get(key) in (None, [], ""):
            raise UsageError(f"missing required input --{key.replace('_', '-')}")
    for key in PATH_KEYS:
        if resolved.get(key) is not None and not Path(resolved[key]).exists():
            raise UsageError(f"--{key.replace('_', '-')}: no such file {resolved[key]}")
    if command == "report":
        for d in resolved["inputs"]:
            if not Path(d).is_dir():
                raise UsageError(f"--inputs: no such directory {d}")
    for key in ("tau_obs",):
        if key in resolved and not 0.0 < float(resolved[key]) < 1.0:
            raise UsageError(f"--tau-obs must be in (0, 1), got {resolved[key]}")
    for key in ("tau_match", "flag_px", "cadence", "ping_interval_ms", "window"):
        if key in resolved and resolved[key] is not None and float(resolved[key]) <= 0.0:
            raise UsageError(f"--{key.replace('_', '-')} must be positive, got {resolved[key]}")
    return resolved


def _write_resolved(out: Path, command: str, cfg: dict[str, Any]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **cfg}
    (out / "resolved_config.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _warn_rejects(report) -> None:
    if report.rejected:
        print(f"warning: {report.path}: rejected {len(report.rejected)} of {report.total} records", file=sys.stderr)


# ---------------------------------------------------------------- commands


def _load_identify_inputs(cfg: dict[str, Any]):
    from leoident import ingest

    reports = [ingest.ParseReport() for _ in range(5)]
    frames = ingest.parse_obstruction_frames(cfg["frames"], reports[0])
    statuses = ingest.parse_status_log(cfg["status"], reports[1])
    locations = ingest.parse_location_log(cfg["location"], reports[2])
    catalog = ingest.parse_tle_catalog(cfg["catalog"], reports[3])
    outages = ingest.parse_outage_log(cfg["outages"], reports[4]) if cfg.get("outages") else []
    for r in reports:
        _warn_rejects(r)
    return frames, statuses, locations, catalog, outages


def _ident_config(cfg: dict[str, Any]):
    from leoident.ident import IdentConfig

    return IdentConfig(
        tau_obs=float(cfg["tau_obs"]),
        tau_match_deg=float(cfg["tau_match"]),
        elevation_mask_deg=float(cfg["elevation_mask"]),
        hardware_model=cfg["hardware_model"],
    )


def cmd_identify(cfg: dict[str, Any], out: Path) -> int:
    from leoident import ident

    frames, statuses, locations, catalog, outages = _load_identify_inputs(cfg)
    report = ident.identify(frames, statuses, locations, catalog, _ident_config(cfg), outages, cfg["debug_pgm"])
    ident.write_identification(out / "identification.csv", report.intervals)
    ident.write_switches(out / "switches.csv", report.switches)
    ident.write_handovers(out / "handovers.csv", report.handovers)
    print(
        f"slots processed: {len(report.results)}  switches: {len(report.switches)}  "
        f"handovers: {len(report.handovers)}  unidentified rate: {report.unidentified_rate:.3f}  "
        f"frames skipped: {report.stream.skipped}  resets: {report.stream.resets}"
    )
    return EXIT_OK


def _num(x: float) -> float | None:
    return None if x is None or math.isnan(x) else round(x, 6)


def cmd_validate(cfg: dict[str, Any], out: Path) -> int:
    import csv

    from leoident import ident
    from leoident.geometry import MapGeometry, fov_for

    frames, statuses, locations, catalog, _ = _load_identify_inputs(cfg)
    intervals = ident.read_identification(cfg["identification"])
    rows: list = []
    stats = (math.nan, math.nan)
    if frames and any(iv.identified for iv in intervals):
        icfg = _ident_config(cfg)
        geom = MapGeometry.for_fov(fov_for(ident.resolve_hardware(statuses, icfg.hardware_model)))
        observers = ident.LocationTrack(locations)
        stream = ident.earth_diffs(
            frames, ident.AttitudeTrack(statuses), observers, geom, icfg.tau_obs, icfg.reset_guard_px
        )
        rows, stats = ident.validate_intervals(
            intervals, stream, observers, catalog, geom, float(cfg["cadence"]), float(cfg["flag_px"])
        )
    with open(out / "validation.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot_start", "t_from", "t_to", "norad_id", "n_samples", "mean_px", "max_px",
                    "mean_separation_deg", "flagged"])
        for r in rows:
            w.writerow([f"{r.slot_start:.3f}", f"{r.t_from:.3f}", f"{r.t_to:.3f}", r.norad_id, r.n_samples,
                        f"{r.mean_px:.4f}", f"{r.max_px:.4f}", f"{r.mean_separation_deg:.4f}", str(r.flagged).lower()])
    px = [r.mean_px for r in rows if not math.isnan(r.mean_px)]
    summary = {
        "intervals": len(rows),
        "flagged": sum(r.flagged for r in rows),
        "mean_px": _num(sum(px) / len(px)) if px else None,
        "separation_mean_deg": _num(stats[0]),
        "separation_std_deg": _num(stats[1]),
    }
    (out / "validation_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(
        f"intervals validated: {summary['intervals']}  flagged: {summary['flagged']}  "
        f"mean pixel distance: {summary['mean_px']}  separation: {summary['separation_mean_deg']} "
        f"+/- {summary['separation_std_deg']} deg"
    )
    return EXIT_OK


def cmd_correlate(cfg: dict[str, Any], out: Path) -> int:
    from leoident import correlate, ident, ingest

    if not any(cfg.get(k) for k in ("identification", "switches", "outages", "pings", "throughput")):
        raise UsageError("correlate needs at least one of --identification, --switches, --outages, --pings, --throughput")
    outages = ingest.parse_outage_log(cfg["outages"]) if cfg["outages"] else []
    pings = ingest.parse_ping_log(cfg["pings"]) if cfg["pings"] else []
    tput = ingest.parse_throughput_log(cfg["throughput"]) if cfg["throughput"] else []
    intervals = ident.read_identification(cfg["identification"]) if cfg["identification"] else []
    switches = ident.read_switches(cfg["switches"]) if cfg["switches"] else []

    breakdown = correlate.outage_breakdown(outages)
    correlate.write_breakdown(out / "outage_breakdown.csv", breakdown)
    timeline = correlate.build_timeline(
        intervals, switches, outages, pings, tput, float(cfg["ping_interval_ms"]), float(cfg["window"])
    )
    for w in timeline.warnings:
        print(f"warning: {w}", file=sys.stderr)
    correlate.write_timeline(out / "timeline.csv", timeline)
    correlate.write_switch_annotations(out / "switch_annotations.csv", timeline)
    correlate.write_series(out / "series.csv", correlate.series_rows(timeline, pings, tput))
    shares = "  ".join(f"{s.cause.short} {breakdown.percent(s.cause):.3f}%" for s in breakdown.shares)
    print(f"outage time: {breakdown.total_seconds:.3f} s  {shares}".rstrip())
    print(f"timeline rows: {len(timeline.rows)}  annotated switches: {len(timeline.switch_annotations)}")
    return EXIT_OK


def cmd_synth(cfg: dict[str, Any], out: Path) -> int:
    from leoident.synth import SynthConfig, generate_scenario, render, write_corpus

    sc_cfg = SynthConfig(
        n_satellites=int(cfg["satellites"]),
        n_slots=int(cfg["slots"]),
        motion=cfg["motion"],
        switch_density=float(cfg["switch_density"]),
        frame_type=cfg["frame_type"],
        red_pixels=bool(cfg["red_pixels"]),
        hardware_model=cfg["hardware_model"],
        tilt_deg=float(cfg["tilt"]),
    )
    scenario = generate_scenario(int(cfg["seed"]), sc_cfg)
    write_corpus(out, scenario, render(scenario))
    counts = scenario.switch_counts()
    print(
        f"seed {scenario.seed}: {len(scenario.schedule)} scheduled intervals over {len(counts)} slots, "
        f"{sum(counts.values())} mid-slot switches, {len(scenario.catalog)} element sets"
    )
    return EXIT_OK


def _read_rows(path: Path) -> list[dict[str, str]]:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _md_table(rows: list[dict[str, str]], columns: Sequence[str]) -> list[str]:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    lines += ["| " + " | ".join(r.get(c, "") for c in columns) + " |" for r in rows]
    return lines


def cmd_report(cfg: dict[str, Any], out: Path) -> int:
    sections = {
        "identification.csv": "Identified intervals",
        "switches.csv": "Beam switches",
        "handovers.csv": "Slot-boundary handovers",
        "validation.csv": "Validation",
        "outage_breakdown.csv": "Outage breakdown",
        "timeline.csv": "Timeline",
        "switch_annotations.csv": "Switch annotations",
        "truth.csv": "Synthetic ground truth",
    }
    lines = ["# leoident run summary", ""]
    found = 0
    for name, title in sections.items():
        for d in cfg["inputs"]:
            path = Path(d) / name
            if not path.exists():
                continue
            rows = _read_rows(path)
            columns = list(rows[0].keys()) if rows else _header(path)
            lines += [f"## {title}", "", f"Source: `{name}`, {len(rows)} rows.", ""]
            lines += _md_table(rows, columns) + [""]
            found += 1
    for d in cfg["inputs"]:
        s = Path(d) / "validation_summary.json"
        if s.exists():
            data = json.loads(s.read_text(encoding="utf-8"))
            lines += ["## Validation summary", ""] + [f"- {k}: {data[k]}" for k in sorted(data)] + [""]
            found += 1
    if not found:
        raise LeoIdentError("no recognised outputs in " + ", ".join(cfg["inputs"]))
    (out / "summary.md").write_text("\n".join(lines).rstrip() + "\n", encoding="utf-8")
    print(f"summary.md written with {found} sections")
    return EXIT_OK


def _header(path: Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.readline().strip().split(",")


COMMANDS = {
    "identify": cmd_identify,
    "validate": cmd_validate,
    "correlate": cmd_correlate,
    "synth": cmd_synth,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve_config(args.command, args)
        out = Path(args.output_dir)
        _write_resolved(out, args.command, cfg)
        return COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        print(f"leoident {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LeoIdentError, ValueError, KeyError, OSError) as exc:
        print(f"leoident {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
