"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

from __future__ import annotations

import dataclasses
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
from oracle import flood_fill_components, load_verification_vectors, rodrigues, tilted_dish

from leoident import geometry, ident, ingest, mapproc
from leoident.cli import EXIT_OK, main
from leoident.correlate import outage_breakdown
from leoident.geometry import MapGeometry, Topocentric, fov_for
from leoident.ingest import EventReason, FrameType, OutageEvent
from leoident.orientation import Attitude, Quaternion, compensated_heading
from leoident.synth import SynthConfig, beam_switch_replay_scenario, compare_schedule, generate_scenario, render

DATA = Path(__file__).parent / "data"
N = 123


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nAC{number} {'PASS' if ok else 'FAIL'}: {title}: {detail}")
        assert ok, detail

    return emit


def run_identify(scenario):
    rendered = render(scenario)
    report = ident.identify(rendered.frames, rendered.statuses, rendered.locations, scenario.catalog, outages=rendered.outages)
    return rendered, report


# ---------------------------------------------------------------- 1


def test_ac1_oracle_closure(verdict):
    t0 = time.perf_counter()
    truth = matched = slots = slots_ok = 0
    for seed in range(100):
        scenario = generate_scenario(seed, SynthConfig())
        _, report = run_identify(scenario)
        cmp = compare_schedule(scenario.schedule, report.results)
        truth += cmp.n_truth
        matched += cmp.n_matched
        slots += len(cmp.truth_switches)
        slots_ok += sum(cmp.found_switches[s] == n for s, n in cmp.truth_switches.items())
    elapsed = time.perf_counter() - t0
    rate = matched / truth
    ok = rate >= 0.95 and slots_ok == slots and elapsed < 300.0
    verdict(1, "oracle closure", ok,
            f"{matched}/{truth} intervals ({rate:.1%}), switch counts {slots_ok}/{slots} slots, {elapsed:.0f} s")  # fmt: skip


# ---------------------------------------------------------------- 2


def test_ac2_heading_stability(verdict):
    tilts = np.arange(2.0, 40.01, 0.5)
    worst = 0.0
    for heading in (0.0, 60.0, 135.0, 222.5, 300.0):
        for tilt in tilts:
            q = Quaternion.from_matrix(tilted_dish(heading, tilt))
            worst = max(worst, abs((compensated_heading(q) - heading + 180.0) % 360.0 - 180.0))

    rng = np.random.default_rng(11)
    fallback_err: dict[float, float] = {}
    for tilt in (2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0):
        errs = []
        for _ in range(50):
            axis = rng.normal(size=3)
            noisy = tilted_dish(60.0, tilt) @ rodrigues(axis, 1.0)
            phi = Attitude.from_quaternion(Quaternion.from_matrix(noisy)).boresight_azimuth_deg
            errs.append(abs((phi - 60.0 + 180.0) % 360.0 - 180.0))
        fallback_err[tilt] = max(errs)
    degrades = max(fallback_err.values()) > 5.0
    ok = worst <= 0.5 and degrades
    verdict(2, "heading stability", ok,
            f"max |compensated - true| {worst:.2e} deg over tilt 2-40; boresight-azimuth error with 1 deg noise "
            + ", ".join(f"{t:.0f}:{e:.1f}" for t, e in fallback_err.items()))  # fmt: skip


# ---------------------------------------------------------------- 3


def test_ac3_projection_round_trip(verdict):
    rng = np.random.default_rng(3)
    attitudes = [Attitude.from_pose(rng.uniform(0, 360), rng.uniform(0, 40)) for _ in range(50)]
    failures = []
    for model in ("rev3_proto2", "hp1_proto2"):
        geom = MapGeometry.for_fov(fov_for(model))
        pixels = geom.disc_pixels()
        cases = [(FrameType.FRAME_EARTH, None)] + [(FrameType.FRAME_UT, a) for a in attitudes]
        for ftype, att in cases:
            ned = geometry.pixels_to_ned(pixels, ftype, att, geom)
            back, valid = geometry.ned_to_pixels(ned, ftype, att, geom)
            if not (valid.all() and np.array_equal(back, pixels)):
                failures.append((model, ftype.value))

    geom = MapGeometry.for_fov(fov_for("hp1_proto2"))
    quantum = 2.0 * geom.zenith_max_deg / 61.0
    worst, checked = 0.0, 0
    for att in attitudes:
        for _ in range(10):
            d = Topocentric(rng.uniform(0, 360), rng.uniform(20, 90))
            if not geometry.in_fov(d, att, fov_for("hp1_proto2")):
                continue
            r, c = geometry.direction_to_pixel(d, FrameType.FRAME_UT, att, geom)
            mask = np.zeros((N, N), bool)
            mask[r, c] = True
            ut = mapproc.BinaryFrame(0.0, mask, np.zeros_like(mask), FrameType.FRAME_UT)
            earth = mapproc.ut_to_earth_frame(ut, att, geom)
            (er, ec) = np.argwhere(earth.explored)[0]
            back = geometry.pixel_to_direction((int(er), int(ec)), FrameType.FRAME_EARTH, None, geom)
            worst = max(worst, geometry.angular_separation(back, d))
            checked += 1
    ok = not failures and worst <= quantum and checked > 100
    verdict(3, "projection round trip", ok,
            f"{len(pixels)} disc pixels x 51 poses x 2 fields of view, {len(failures)} mismatches; "
            f"frame consistency worst {worst:.3f} deg <= {quantum:.3f} over {checked} directions")  # fmt: skip


# ---------------------------------------------------------------- 4


def test_ac4_ccl_equivalence(verdict):
    rng = np.random.default_rng(2024)
    mismatches = 0
    densities = np.geomspace(0.001, 0.20, 1000)
    for density in densities:
        mask = rng.random((N, N)) < density
        diff = mapproc.DiffFrame(0.0, 0.5, mask)
        got = {frozenset(s.pixels) for s in mapproc.label_segments(diff)}
        mismatches += got != flood_fill_components(mask)
    verdict(4, "CCL equivalence", mismatches == 0,
            f"{len(densities) - mismatches}/{len(densities)} masks identical, densities 0.1%-20%")  # fmt: skip


# ---------------------------------------------------------------- 5


def test_ac5_sgp4_fidelity(verdict):
    queue = defaultdict(list)
    for rec in ingest.parse_tle_text((DATA / "SGP4-VER.TLE").read_text()):
        queue[rec.norad_id].append(rec)
    worst, checked = 0.0, 0
    for norad, rows in load_verification_vectors(DATA / "tcppver.out"):
        if not queue[norad]:
            continue
        rec = queue[norad].pop(0)
        for tsince, x, y, z in rows:
            r, _ = geometry.propagate_minutes(rec, tsince)
            worst = max(worst, float(np.linalg.norm(r - [x, y, z])))
            checked += 1
    verdict(5, "SGP4 fidelity", worst < 1.0 and checked > 500, f"{checked} vectors, worst {worst:.2e} km")


# ---------------------------------------------------------------- 6


def test_ac6_reconstruction_bound(verdict):
    worst_true, best_wrong = 0.0, np.inf
    n_rows = n_wrong = true_flagged = wrong_flagged = 0
    for seed in range(10):
        scenario = generate_scenario(seed, SynthConfig())
        rendered, report = run_identify(scenario)
        observers = ident.LocationTrack(rendered.locations)
        attitudes = ident.AttitudeTrack(rendered.statuses)
        fov = fov_for(scenario.config.hardware_model)
        rows, _ = ident.validate_intervals(report.intervals, report.stream, observers, scenario.catalog, report.geom)
        n_rows += len(rows)
        worst_true = max([worst_true] + [r.mean_px for r in rows])
        true_flagged += sum(r.flagged for r in rows)
        wrong = []
        for iv in report.intervals:
            if not iv.identified:
                continue
            m = ident.match_segment(iv.observation, observers, attitudes, scenario.catalog, fov)
            other = next(c.norad_id for c in m.ranking if c.norad_id != iv.norad_id)
            wrong.append(dataclasses.replace(iv, norad_id=other))
        wrows, _ = ident.validate_intervals(wrong, report.stream, observers, scenario.catalog, report.geom)
        n_wrong += len(wrows)
        best_wrong = min([best_wrong] + [r.mean_px for r in wrows])
        wrong_flagged += sum(r.flagged for r in wrows)
    ok = n_rows > 0 and worst_true <= 1.0 and true_flagged == 0 and best_wrong > 2.0 and wrong_flagged == n_wrong
    verdict(6, "reconstruction bound", ok,
            f"true IDs worst mean {worst_true:.3f} px over {n_rows} intervals, {true_flagged} flagged; "
            f"wrong IDs best mean {best_wrong:.2f} px, {wrong_flagged}/{n_wrong} flagged")  # fmt: skip


# ---------------------------------------------------------------- 7

TABLE = {
    "mobile": [(133.958, 27.333), (23.659, 4.827), (110.858, 22.620), (221.404, 45.175), (0.220, 0.045)],
    "stationary": [(132.265, 20.216), (5.999, 0.917), (367.764, 56.212), (148.222, 22.655), (0.0, 0.0)],
}
CAUSES = [
    EventReason.OUTAGE_NO_DOWNLINK,
    EventReason.OUTAGE_NO_PINGS,
    EventReason.OUTAGE_OBSTRUCTED,
    EventReason.OUTAGE_SKY_SEARCH,
    EventReason.OUTAGE_UNKNOWN,
]


def test_ac7_outage_breakdown(verdict):
    lines, ok = [], True
    for name, rows in TABLE.items():
        events = [
            OutageEvent(k * 10**12, round(sec * 1e9), cause, False) for k, (cause, (sec, _)) in enumerate(zip(CAUSES, rows))
            if sec > 0
        ]  # fmt: skip
        bd = outage_breakdown(events, CAUSES)
        got = [round(bd.percent(c), 3) for c in CAUSES]
        want = [p for _, p in rows]
        ok &= got == want
        lines.append(f"{name} {'/'.join(f'{g:.3f}' for g in got)}")
    verdict(7, "outage breakdown", ok, "; ".join(lines))


# ---------------------------------------------------------------- 8


def test_ac8_event_replay(verdict):
    scenario = beam_switch_replay_scenario()
    _, report = run_identify(scenario)
    n_iv = len(report.intervals)
    n_slots = len(report.results)
    n_sw = sum(ev.within_slot for ev in report.switches)
    n_ho = len(report.handovers)
    ids_ok = [iv.norad_id for iv in report.intervals] == [e.norad_id for e in scenario.schedule]
    ok = (n_iv, n_slots, n_sw, n_ho) == (5, 2, 3, 1) and ids_ok
    verdict(8, "event replay", ok,
            f"{n_iv} intervals over {n_slots} slots, {n_sw} within-slot switches, {n_ho} handover, IDs match truth: {ids_ok}")  # fmt: skip


# ---------------------------------------------------------------- 9


def _commands(base: Path, corpus: Path, ident_dir: Path) -> dict[str, list[str]]:
    inputs = [
        "--frames", str(corpus / "frames.csv"), "--status", str(corpus / "status.csv"),
        "--location", str(corpus / "location.csv"), "--catalog", str(corpus / "catalog.tle"),
    ]  # fmt: skip
    return {
        "synth": ["synth", "--output-dir", str(base / "synth"), "--seed", "8", "--slots", "2", "--red-pixels"],
        "identify": ["identify", "--output-dir", str(base / "identify"), *inputs, "--outages", str(corpus / "outages.csv")],
        "validate": ["validate", "--output-dir", str(base / "validate"), *inputs,
                     "--identification", str(ident_dir / "identification.csv")],
        "correlate": ["correlate", "--output-dir", str(base / "correlate"),
                      "--identification", str(ident_dir / "identification.csv"), "--switches", str(ident_dir / "switches.csv"),
                      "--outages", str(corpus / "outages.csv"), "--pings", str(corpus / "pings.csv"),
                      "--throughput", str(corpus / "throughput.csv")],
        "report": ["report", "--output-dir", str(base / "report"), "--inputs", str(corpus), str(ident_dir)],
    }  # fmt: skip


def test_ac9_determinism(tmp_path, verdict):
    runs = [tmp_path / "a", tmp_path / "b"]
    corpus, ident_dir = runs[0] / "synth", runs[0] / "identify"
    codes: list[int] = []
    for base in runs:
        for argv in _commands(base, corpus, ident_dir).values():
            codes.append(main(argv))
    differing, compared = [], 0
    for command in ("synth", "identify", "validate", "correlate", "report"):
        a, b = runs[0] / command, runs[1] / command
        names = sorted(p.name for p in a.iterdir())
        if names != sorted(p.name for p in b.iterdir()):
            differing.append(command)
            continue
        for name in names:
            compared += 1
            if (a / name).read_bytes() != (b / name).read_bytes():
                differing.append(f"{command}/{name}")
    ok = all(c == EXIT_OK for c in codes) and not differing
    verdict(9, "determinism", ok, f"{compared} output files across 5 commands, differing: {differing or 'none'}")
