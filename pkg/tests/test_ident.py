from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from leoident import ident
from leoident.geometry import (
    MapGeometry,
    Site,
    fov_for,
    ned_to_pixels,
    pixel_to_direction,
    propagate_many,
    separation_ned,
    topocentric_ned,
)
from leoident.ident import (
    AttitudeTrack,
    IdentConfig,
    LocationTrack,
    ObservedSample,
    TrajectoryObservation,
    identify,
    match_segment,
    timeslot_of,
    validate_intervals,
)
from leoident.ingest import EventReason, FrameType, LocationSource, OutageEvent, UtLocationRecord, UtStatusRecord
from leoident.mapproc import Segment
from leoident.orientation import Attitude, pose_quaternion
from leoident.synth import (
    SwitchSpec,
    SynthConfig,
    beam_switch_replay_scenario,
    generate_scenario,
    place_satellite,
    render,
)

MINUTE = 1717200000.0  # top of a minute


def run(scenario):
    rendered = render(scenario)
    report = identify(rendered.frames, rendered.statuses, rendered.locations, scenario.catalog, outages=rendered.outages)
    return rendered, report


@pytest.fixture(scope="module")
def quiet_slot():
    scenario = generate_scenario(3, SynthConfig(n_slots=1, motion="stationary"), {0: []})
    return (scenario, *run(scenario))


@pytest.fixture(scope="module")
def switch_slot():
    scenario = generate_scenario(5, SynthConfig(n_slots=1, motion="turning"), {0: [SwitchSpec(4.0, 0.8)]})
    return (scenario, *run(scenario))


@pytest.fixture(scope="module")
def replay():
    scenario = beam_switch_replay_scenario()
    return (scenario, *run(scenario))


# ---------------------------------------------------------------- slots


@pytest.mark.parametrize(
    "offset,start",
    [(0.0, -3.0), (11.999, -3.0), (12.0, 12.0), (26.9, 12.0), (27.0, 27.0), (42.0, 42.0), (57.0, 57.0), (59.5, 57.0)],
)
def test_slot_boundaries(offset, start):
    slot = timeslot_of(MINUTE + offset)
    assert slot.start == MINUTE + start
    assert slot.end - slot.start == 15.0
    assert slot.contains(MINUTE + offset)


# ---------------------------------------------------------------- tracks


def _status(t, heading):
    q = pose_quaternion(heading, 10.0)
    return UtStatusRecord(t, "hp1_proto2", quaternion=(q.w, q.x, q.y, q.z))


def test_attitude_track_interpolates_and_respects_gaps():
    track = AttitudeTrack([_status(0.0, 10.0), _status(1.0, 30.0), _status(5.0, 30.0)])
    assert track.at(0.5).heading_deg == pytest.approx(20.0, abs=0.01)
    assert track.at(3.0) is None
    assert track.at(-0.9).heading_deg == pytest.approx(10.0, abs=1e-6)  # held for half the gap limit
    assert track.at(-1.1) is None
    assert track.at(6.1) is None
    assert track.at(5.0).heading_deg == pytest.approx(30.0, abs=1e-6)


def test_location_track_crosses_antimeridian():
    recs = [UtLocationRecord(t, 10.0, lon, 0.0, 0.0, 0.0, LocationSource.DISH_GNSS) for t, lon in [(0, 179.9), (1, -179.9)]]
    site = LocationTrack(recs).at(0.5)
    assert abs(abs(site.longitude) - 180.0) < 1e-6
    assert site.latitude == 10.0


def test_config_validation():
    with pytest.raises(ValueError):
        IdentConfig(tau_obs=1.0)
    with pytest.raises(ValueError):
        IdentConfig(tau_match_deg=0)
    with pytest.raises(ValueError):
        IdentConfig(elevation_mask_deg=90)


def test_corroborating_outage_prefers_switch_flag():
    a = OutageEvent(int(99.0e9), int(0.5e9), EventReason.OUTAGE_OBSTRUCTED, False)
    b = OutageEvent(int(98.0e9), int(1.0e9), EventReason.OUTAGE_OBSTRUCTED, True)
    far = OutageEvent(int(50e9), int(1e9), EventReason.OUTAGE_OBSTRUCTED, True)
    assert ident.corroborating_outage(100.0, [a, b, far]) == b
    assert ident.corroborating_outage(100.0, [far]) is None


def seg(label, *pixels):
    return Segment(label, pixels, pixels[0], 0.0, 0.0)


def test_fragments_within_join_distance_cluster():
    segs = [seg(1, (10, 10), (10, 11)), seg(2, (12, 13)), seg(3, (40, 40))]
    groups = ident.cluster_fragments(segs)
    assert [[s.label for s in g] for g in groups] == [[1, 2], [3]]


# ---------------------------------------------------------------- matching


def _observation(site, tle, times, geom):
    """Directions of ``tle`` quantised to the map grid, as a diff would report them."""
    pos = propagate_many([tle], times)[0]
    samples = []
    for t, p in zip(times, pos):
        v = topocentric_ned(site, p[None, :])[0]
        px, ok = ned_to_pixels(v[None, :], FrameType.FRAME_EARTH, None, geom)
        assert ok[0]
        pix = (int(px[0, 0]), int(px[0, 1]))
        samples.append(ObservedSample(t, pix, pixel_to_direction(pix, FrameType.FRAME_EARTH, None, geom)))
    last = samples[-1]
    return TrajectoryObservation(Segment(1, (last.pixel,), last.pixel, times[0], last.timestamp), samples)


def test_runner_up_twenty_degrees_away():
    site = Site(35.0, -100.0, 0.0)
    t = MINUTE + 12.0
    a = place_satellite("A", 90001, t, 35.0, -100.0, True, 550.0, 53.0)
    b = place_satellite("B", 90002, t, 35.0, -98.0, True, 550.0, 53.0)
    times = [t + k * 0.5 for k in range(10)]
    pos = propagate_many([a, b], times)
    sep = separation_ned(topocentric_ned(site, pos[0]), topocentric_ned(site, pos[1]))
    assert 18.0 < float(np.mean(sep)) < 22.0
    fov = fov_for("hp1_proto2")
    geom = MapGeometry.for_fov(fov)
    obs = _observation(site, a, times, geom)
    m = match_segment(obs, site, Attitude.from_pose(0.0, 0.0), [a, b], fov)
    assert m.norad_id == 90001
    assert m.score_deg <= 1.0
    assert m.ranking[1].norad_id == 90002
    assert m.ranking[1].score_deg >= 15.0


def test_match_above_threshold_and_empty():
    site = Site(35.0, -100.0, 0.0)
    t = MINUTE + 12.0
    a = place_satellite("A", 90001, t, 35.0, -100.0, True, 550.0, 53.0)
    b = place_satellite("B", 90002, t, 35.0, -98.0, True, 550.0, 53.0)
    fov = fov_for("hp1_proto2")
    obs = _observation(site, a, [t, t + 1.0], MapGeometry.for_fov(fov))
    m = match_segment(obs, site, Attitude.from_pose(0.0, 0.0), [b], fov)
    assert not m.identified and m.reason == ident.ABOVE_THRESHOLD and m.score_deg > 15.0
    far = place_satellite("C", 90003, t, -20.0, 40.0, True, 550.0, 53.0)
    m = match_segment(obs, site, Attitude.from_pose(0.0, 0.0), [far], fov)
    assert m.reason == ident.NO_CANDIDATES and m.score_deg is None


def test_single_satellite_slot(quiet_slot):
    scenario, _, report = quiet_slot
    (iv,) = report.intervals
    assert iv.norad_id == scenario.schedule[0].norad_id
    assert iv.score_deg <= 1.0
    assert report.switches == [] and report.handovers == []
    assert iv.t_from == scenario.t_start and iv.t_to == scenario.t_end


def test_scripted_switch_is_detected(switch_slot):
    scenario, rendered, report = switch_slot
    ivs = report.intervals
    assert [iv.norad_id for iv in ivs] == [e.norad_id for e in scenario.schedule]
    assert [iv.switch_flag for iv in ivs] == [False, True]
    (ev,) = report.switches
    assert ev.within_slot
    assert ev.from_norad == ivs[0].norad_id and ev.to_norad == ivs[1].norad_id
    assert ev.corroborating_outage == rendered.outages[0]
    assert abs(ev.timestamp - (scenario.t_start + 4.0)) <= 1.0


def test_replay_sequence(replay):
    scenario, _, report = replay
    ivs = report.intervals
    assert len(ivs) == 5
    assert [iv.norad_id for iv in ivs] == [e.norad_id for e in scenario.schedule]
    assert sum(ev.within_slot for ev in report.switches) == 3
    (ho,) = report.handovers
    assert ho.from_norad == ivs[2].norad_id and ho.to_norad == ivs[3].norad_id
    assert ho.timestamp == scenario.t_start + 15.0


def test_empty_input():
    report = identify([], [], [], [])
    assert report.intervals == [] and report.unidentified_rate == 0.0


# ---------------------------------------------------------------- validation


def _validate(scenario, rendered, report, intervals=None):
    observers = LocationTrack(rendered.locations)
    return validate_intervals(
        report.intervals if intervals is None else intervals, report.stream, observers, scenario.catalog, report.geom
    )


@pytest.mark.parametrize("fixture", ["quiet_slot", "switch_slot", "replay"])
def test_reconstruction_within_one_pixel(fixture, request):
    scenario, rendered, report = request.getfixturevalue(fixture)
    rows, (sep_mean, sep_std) = _validate(scenario, rendered, report)
    assert rows
    for row in rows:
        assert row.mean_px <= 1.0
        assert not row.flagged
    assert sep_mean <= 2.0 * report.geom.zenith_max_deg / 61.0
    assert sep_std >= 0.0


def test_wrong_identity_is_flagged(switch_slot):
    scenario, rendered, report = switch_slot
    wrong = []
    for iv in report.intervals:
        other = next(c for c in match_ranking(iv, rendered, scenario) if c != iv.norad_id)
        wrong.append(dataclasses.replace(iv, norad_id=other))
    rows, _ = _validate(scenario, rendered, report, wrong)
    assert rows and all(r.flagged and r.mean_px > 2.0 for r in rows)


def match_ranking(iv, rendered, scenario):
    m = match_segment(
        iv.observation, LocationTrack(rendered.locations), AttitudeTrack(rendered.statuses), scenario.catalog,
        fov_for(scenario.config.hardware_model),
    )
    return [c.norad_id for c in m.ranking]


def test_separation_statistics_use_population_std(quiet_slot):
    scenario, rendered, report = quiet_slot
    iv = report.intervals[0]
    sep = ident.sample_separations(iv, iv.observation, LocationTrack(rendered.locations), scenario.catalog)
    mean, std = ident.separation_stats([iv], [iv.observation], LocationTrack(rendered.locations), scenario.catalog)
    assert mean == pytest.approx(float(np.mean(sep)))
    assert std == pytest.approx(float(np.std(sep, ddof=0)))
    with pytest.raises(ValueError):
        ident.separation_stats([], [], None, [])


def test_mean_pixel_distance():
    mean, mx = ident.mean_pixel_distance([(0, 0), (0, 3)], [(0, 0), (0, 1)])
    assert (mean, mx) == (1.0, 2.0)
    assert all(math.isnan(x) for x in ident.mean_pixel_distance([], [(0, 0)]))


# ---------------------------------------------------------------- records


def test_record_round_trips(replay, tmp_path):
    _, _, report = replay
    ident.write_identification(tmp_path / "id.csv", report.intervals)
    back = ident.read_identification(tmp_path / "id.csv")
    assert [(b.norad_id, b.switch_flag, b.n_samples) for b in back] == [
        (iv.norad_id, iv.switch_flag, iv.n_samples) for iv in report.intervals
    ]
    assert all(abs(b.t_from - iv.t_from) < 5e-4 for b, iv in zip(back, report.intervals))
    ident.write_switches(tmp_path / "sw.csv", report.switches)
    sw = ident.read_switches(tmp_path / "sw.csv")
    assert [(s.from_norad, s.to_norad, s.within_slot, s.corroborating_outage) for s in sw] == [
        (s.from_norad, s.to_norad, s.within_slot, s.corroborating_outage) for s in report.switches
    ]
    ident.write_handovers(tmp_path / "ho.csv", report.handovers)
    assert (tmp_path / "ho.csv").read_text().count("\n") == 1 + len(report.handovers)


def test_unidentified_written_as_token(tmp_path):
    iv = ident.IdentificationInterval(12.0, 12.0, 27.0, None, "", None, 0, False, ident.NO_TRAJECTORY)
    ident.write_identification(tmp_path / "id.csv", [iv])
    assert "UNIDENTIFIED" in (tmp_path / "id.csv").read_text()
    (back,) = ident.read_identification(tmp_path / "id.csv")
    assert back.norad_id is None and back.score_deg is None


def test_bad_header_rejected(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        ident.read_identification(tmp_path / "x.csv")
