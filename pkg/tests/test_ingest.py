from __future__ import annotations

import random
from calendar import timegm
from decimal import Decimal
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leoident import ingest
from leoident.errors import IngestError
from leoident.ingest import (
    Direction,
    EventReason,
    FrameType,
    LocationSource,
    ObstructionFrame,
    OutageEvent,
    ParseReport,
    PingSample,
    ThroughputSample,
    UtLocationRecord,
    UtStatusRecord,
)

DATA = Path(__file__).parent / "data"

# Vanguard 1 from the standard verification set, with its own checksums
VANGUARD_L1 = "1 00005U 58002B   00179.78495062  .00000023  00000-0  28098-4 0  4753"
VANGUARD_L2 = "2 00005  34.2682 348.7242 1859667 331.7664  19.3264 10.82419157413667"


def status_header() -> str:
    return ",".join(ingest.STATUS_COLUMNS) + "\n"


def status_line(ts: float, q=(1, 0, 0, 0), tilt=7.9, model="hp1_proto2") -> str:
    vals = [ts, model, 30.0, 1e8, 1e7, tilt, 3.2, 82.1, 1, 0.5, 3.2, 82.1, *q]
    return ",".join(str(v) for v in vals) + "\n"


def frame_line(ts: float, n_cells: int = ingest.N_CELLS, ftype: str = "FRAME_UT", fill: float = -1) -> str:
    return f"{ts},{ftype}," + ",".join([str(fill)] * n_cells) + "\n"


# ---------------------------------------------------------------- status


def test_status_tilt_and_model(tmp_path):
    p = tmp_path / "status.csv"
    p.write_text(status_header() + status_line(100.0))
    (rec,) = ingest.parse_status_log(p)
    assert rec.tilt_deg == 7.9
    assert rec.hardware_model == "hp1_proto2"


def test_status_identity_quaternion_not_degraded(tmp_path):
    p = tmp_path / "status.csv"
    p.write_text(status_header() + status_line(1.0, q=(1, 0, 0, 0)))
    report = ParseReport()
    (rec,) = ingest.parse_status_log(p, report)
    assert not rec.degraded
    assert report.warnings == []


def test_status_short_quaternion_flagged_degraded(tmp_path):
    p = tmp_path / "status.csv"
    p.write_text(status_header() + status_line(1.0, q=(0.5, 0, 0, 0)))
    report = ParseReport()
    (rec,) = ingest.parse_status_log(p, report)
    assert rec.degraded
    assert len(report.warnings) == 1


def test_status_sorted_and_malformed_skipped(tmp_path):
    lines = [status_line(float(t)) for t in range(20, 0, -1)]
    lines.insert(5, "garbage\n")
    p = tmp_path / "status.csv"
    p.write_text(status_header() + "".join(lines))
    report = ParseReport()
    recs = ingest.parse_status_log(p, report)
    assert [r.timestamp for r in recs] == [float(t) for t in range(1, 21)]
    assert [n for n, _ in report.rejected] == [7]


def test_status_too_many_malformed_is_fatal(tmp_path):
    p = tmp_path / "status.csv"
    p.write_text(status_header() + status_line(1.0) + "bad\nworse\n" + status_line(2.0))
    with pytest.raises(IngestError, match="bad lines: 3, 4"):
        ingest.parse_status_log(p)


def test_unreadable_file_is_fatal(tmp_path):
    with pytest.raises(IngestError):
        ingest.parse_status_log(tmp_path / "missing.csv")


# ---------------------------------------------------------------- frames


def test_frame_ut_record(tmp_path):
    p = tmp_path / "frames.csv"
    p.write_text(ingest.FRAME_HEADER + "\n" + frame_line(5.0))
    (f,) = ingest.parse_obstruction_frames(p)
    assert f.frame_type is FrameType.FRAME_UT
    assert f.cells.shape == (123, 123)
    assert (f.cells == ingest.UNKNOWN_CELL).all()


def test_frame_wrong_cell_count_rejected(tmp_path):
    p = tmp_path / "frames.csv"
    p.write_text(frame_line(1.0) + frame_line(2.0, n_cells=15128))
    report = ParseReport()
    frames = ingest.parse_obstruction_frames(p, report)
    assert len(frames) == 1
    ((line_no, reason),) = report.rejected
    assert line_no == 2 and "record 2" in reason and "15128" in reason


def test_frame_unknown_type_rejected(tmp_path):
    p = tmp_path / "frames.csv"
    p.write_text(frame_line(1.0, ftype="FRAME_SKY"))
    report = ParseReport()
    assert ingest.parse_obstruction_frames(p, report) == []
    assert len(report.rejected) == 1


def test_frame_duplicate_timestamp_keeps_last(tmp_path):
    p = tmp_path / "frames.csv"
    p.write_text(frame_line(1.0, fill=0.25) + frame_line(1.0, fill=0.75))
    (f,) = ingest.parse_obstruction_frames(p)
    assert (f.cells == 0.75).all()


# ---------------------------------------------------------------- TLE


def tle_oracle(line: str) -> bool:
    """Independent modulo-10 check: digits count their value, minus signs count one."""
    if len(line) < 69 or not line[68].isdigit():
        return False
    total = 0
    for ch in line[:68]:
        total += {"-": 1}.get(ch, int(ch) if ch in "0123456789" else 0)
    return total % 10 == int(line[68])


def test_tle_valid_group(tmp_path):
    p = tmp_path / "cat.tle"
    p.write_text(f"STARLINK-32183\n{VANGUARD_L1}\n{VANGUARD_L2}\n")
    (rec,) = ingest.parse_tle_catalog(p)
    assert rec.name == "STARLINK-32183"
    assert rec.norad_id == 5
    assert not rec.is_dtc
    # 2000 day 179.78495062
    assert rec.epoch == pytest.approx(timegm((2000, 1, 1, 0, 0, 0)) + 178.78495062 * 86400, abs=1e-4)


def test_tle_corrupted_checksum_skipped(tmp_path):
    bad_digit = str((int(VANGUARD_L2[68]) + 1) % 10)
    p = tmp_path / "cat.tle"
    p.write_text(f"SAT-A\n{VANGUARD_L1}\n{VANGUARD_L2[:68] + bad_digit}\nSAT-B\n{VANGUARD_L1}\n{VANGUARD_L2}\n")
    report = ParseReport()
    recs = ingest.parse_tle_catalog(p, report)
    assert [r.name for r in recs] == ["SAT-B"]
    assert len(report.rejected) == 1 and "checksum" in report.rejected[0][1]


@pytest.mark.parametrize(
    "name, dtc",
    [
        ("STARLINK-11350 [DTC]", True),
        ("STARLINK-11350 DTC", True),
        ("starlink-9 (dtc)", True),
        ("STARLINK-11350", False),
        ("DTCX-1", False),
    ],
)
def test_dtc_marker(name, dtc):
    assert ingest.is_dtc_name(name) is dtc


def test_tle_verification_file_parses():
    report = ParseReport()
    recs = ingest.parse_tle_text((DATA / "SGP4-VER.TLE").read_text(), report)
    assert len(recs) >= 30
    assert all(tle_oracle(r.line1) and tle_oracle(r.line2) for r in recs)


def test_tle_acceptance_matches_checksum_oracle_on_fuzzed_lines():
    rng = random.Random(20240601)
    alphabet = "0123456789- +."
    agree = 0
    for _ in range(1000):
        l1, l2 = list(VANGUARD_L1), list(VANGUARD_L2)
        # mutate only fields the parser does not otherwise interpret
        for _ in range(rng.randint(0, 3)):
            if rng.random() < 0.5:
                l1[rng.randint(33, 68)] = rng.choice(alphabet)
            else:
                l2[rng.randint(8, 68)] = rng.choice(alphabet)
        a, b = "".join(l1), "".join(l2)
        accepted = bool(ingest.parse_tle_text(f"X\n{a}\n{b}\n"))
        assert accepted == (tle_oracle(a) and tle_oracle(b)), (a, b)
        agree += 1
    assert agree == 1000


def test_format_tle_round_trips_through_parser():
    rec = ingest.format_tle("SYNTH-1", 70001, 1717200000.0, 53.0, 120.5, 0.0001, 90.0, 45.0, 15.05, bstar=1e-4)
    assert tle_oracle(rec.line1) and tle_oracle(rec.line2)
    (back,) = ingest.parse_tle_text(f"{rec.name}\n{rec.line1}\n{rec.line2}\n")
    assert back == rec


# ---------------------------------------------------------------- outages


def outage_file(tmp_path, rows: list[str]) -> Path:
    p = tmp_path / "outages.csv"
    p.write_text(",".join(ingest.OUTAGE_COLUMNS) + "\n" + "".join(r + "\n" for r in rows))
    return p


def test_outage_end_time(tmp_path):
    start_ns = (timegm((2024, 6, 1, 0, 12, 39)) * 1000 + 380) * 1_000_000
    p = outage_file(tmp_path, [f"{start_ns},1280066127,EVENT_REASON_OUTAGE_OBSTRUCTED,false"])
    (ev,) = ingest.parse_outage_log(p)
    assert ev.cause is EventReason.OUTAGE_OBSTRUCTED
    assert ev.end_ns == start_ns + 1280066127
    assert round(ev.end_s - timegm((2024, 6, 1, 0, 12, 0)), 3) == 40.660


def test_outage_negative_duration_rejected(tmp_path):
    rows = [f"{i}000000000,1000,OBSTRUCTED,false" for i in range(1, 11)] + ["99000000000,-5,OBSTRUCTED,false"]
    report = ParseReport()
    evs = ingest.parse_outage_log(outage_file(tmp_path, rows), report)
    assert len(evs) == 10
    assert "-5" in report.rejected[0][1]


def test_outage_short_cause_and_switch(tmp_path):
    (ev,) = ingest.parse_outage_log(outage_file(tmp_path, ["1,2,SKY_SEARCH,true"]))
    assert ev.cause is EventReason.OUTAGE_SKY_SEARCH
    assert ev.did_switch


def test_outage_unknown_cause_maps_to_unknown(tmp_path):
    report = ParseReport()
    (ev,) = ingest.parse_outage_log(outage_file(tmp_path, ["1,2,SOLAR_FLARE,false"]), report)
    assert ev.cause is EventReason.OUTAGE_UNKNOWN
    assert len(report.warnings) == 1


def test_event_reason_enumeration_has_seventeen_members():
    assert len(EventReason) == 17


# ---------------------------------------------------------------- ping


def test_ping_raw_reply_line(tmp_path):
    p = tmp_path / "ping.txt"
    p.write_text("[1717200000.500000] 64 bytes from 1.1.1.1: icmp_seq=100 ttl=57 time=42.1 ms\n")
    (s,) = ingest.parse_ping_log(p)
    assert s == PingSample(1717200000.5, 100, 42.1, False)


def test_ping_sequence_gap_becomes_lost_sample(tmp_path):
    p = tmp_path / "ping.txt"
    p.write_text(
        "PING 1.1.1.1 (1.1.1.1) 56(84) bytes of data.\n"
        "[10.00] 64 bytes from 1.1.1.1: icmp_seq=100 ttl=57 time=40.0 ms\n"
        "[10.02] 64 bytes from 1.1.1.1: icmp_seq=102 ttl=57 time=41.0 ms\n"
    )
    samples = ingest.parse_ping_log(p)
    assert [s.sequence for s in samples] == [100, 101, 102]
    lost = samples[1]
    assert lost.lost and lost.rtt_ms is None
    assert lost.response_timestamp == pytest.approx(10.01)


def test_ping_empty_file(tmp_path):
    p = tmp_path / "ping.txt"
    p.write_text("")
    assert ingest.parse_ping_log(p) == []


def test_ping_backwards_timestamps_fatal(tmp_path):
    p = tmp_path / "ping.txt"
    p.write_text(
        "[10.0] 64 bytes from h: icmp_seq=1 ttl=57 time=40.0 ms\n"
        "[8.5] 64 bytes from h: icmp_seq=2 ttl=57 time=40.0 ms\n"
    )
    with pytest.raises(IngestError, match="backwards"):
        ingest.parse_ping_log(p)


# ---------------------------------------------------------------- GPS time


def test_gps_epoch_conversion():
    assert ingest.gps_to_unix(Decimal(0)) == 315964800
    # 18 leap seconds have applied since 2017
    unix = Decimal(timegm((2024, 6, 1, 0, 0, 0)))
    assert ingest.unix_to_gps(unix) == unix - 315964800 + 18
    assert ingest.gps_to_unix(ingest.unix_to_gps(unix)) == unix


# ---------------------------------------------------------------- round trips

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
times = st.floats(min_value=1.6e9, max_value=1.8e9, allow_nan=False)
maybe = lambda s: st.one_of(st.none(), s)  # noqa: E731


@st.composite
def status_records(draw):
    q = draw(maybe(st.tuples(finite, finite, finite, finite)))
    return UtStatusRecord(
        timestamp=draw(times),
        hardware_model=draw(st.sampled_from(["rev3_proto2", "hp1_proto2"])),
        pop_ping_latency_ms=draw(maybe(finite)),
        downlink_bps=draw(maybe(finite)),
        uplink_bps=draw(maybe(finite)),
        tilt_deg=draw(maybe(finite)),
        boresight_azimuth_deg=draw(maybe(finite)),
        boresight_elevation_deg=draw(maybe(finite)),
        quaternion=q,
        attitude_uncertainty_deg=draw(maybe(finite)),
        attitude_estimation_state=draw(maybe(st.integers(0, 9))),
        desired_boresight_azimuth_deg=draw(maybe(finite)),
        desired_boresight_elevation_deg=draw(maybe(finite)),
    )


@settings(max_examples=50, deadline=None)
@given(st.lists(status_records(), max_size=8, unique_by=lambda r: r.timestamp))
def test_status_round_trip(tmp_path_factory, records):
    p = tmp_path_factory.mktemp("rt") / "s.csv"
    ingest.write_status_log(p, records)
    assert ingest.parse_status_log(p) == sorted(records, key=lambda r: r.timestamp)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.builds(
            UtLocationRecord,
            timestamp=times.map(lambda t: round(t, 3)),
            latitude=st.floats(-90, 90),
            longitude=st.floats(-180, 179.999),
            altitude_m=st.floats(-500, 10000),
            horizontal_speed_mps=maybe(st.floats(0, 60)),
            vertical_speed_mps=maybe(st.floats(-5, 5)),
            source=st.sampled_from(list(LocationSource)),
        ),
        max_size=8,
        unique_by=lambda r: r.timestamp,
    )
)
def test_location_round_trip(tmp_path_factory, records):
    p = tmp_path_factory.mktemp("rt") / "l.csv"
    ingest.write_location_log(p, records)
    assert ingest.parse_location_log(p) == sorted(records, key=lambda r: r.timestamp)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(FrameType)), times)
def test_frame_round_trip(tmp_path_factory, seed, ftype, ts):
    rng = np.random.default_rng(seed)
    cells = rng.random((123, 123))
    cells[rng.random((123, 123)) < 0.3] = ingest.UNKNOWN_CELL
    frame = ObstructionFrame(ts, ftype, cells)
    p = tmp_path_factory.mktemp("rt") / "f.csv"
    ingest.write_obstruction_frames(p, [frame])
    assert ingest.parse_obstruction_frames(p) == [frame]


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.builds(
            OutageEvent,
            start_ns=st.integers(1, 2**62),
            duration_ns=st.integers(1, 10**12),
            cause=st.sampled_from(list(EventReason)),
            did_switch=st.booleans(),
        ),
        max_size=8,
    )
)
def test_outage_round_trip(tmp_path_factory, events):
    p = tmp_path_factory.mktemp("rt") / "o.csv"
    ingest.write_outage_log(p, events)
    assert ingest.parse_outage_log(p) == sorted(events, key=lambda e: (e.start_ns, e.duration_ns))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(0.1, 2000)), min_size=1, max_size=20), times)
def test_ping_round_trip(tmp_path_factory, pattern, t0):
    samples = [
        PingSample(t0 + 0.01 * i, 1000 + i, None if lost else rtt, lost) for i, (lost, rtt) in enumerate(pattern)
    ]
    p = tmp_path_factory.mktemp("rt") / "p.csv"
    ingest.write_ping_log(p, samples)
    assert ingest.parse_ping_log(p) == samples


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.builds(ThroughputSample, timestamp=times, direction=st.sampled_from(list(Direction)), bps=st.floats(0, 1e9)),
        max_size=8,
        unique_by=lambda s: (s.timestamp, s.direction),
    )
)
def test_throughput_round_trip(tmp_path_factory, samples):
    p = tmp_path_factory.mktemp("rt") / "t.csv"
    ingest.write_throughput_log(p, samples)
    assert ingest.parse_throughput_log(p) == sorted(samples, key=lambda s: (s.timestamp, s.direction.value))


@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 99999),
    st.floats(0, 179.9),
    st.floats(0, 359.9),
    st.floats(0, 0.2),
    st.floats(11.0, 16.5),
    st.floats(1.6e9, 1.8e9),
)
def test_tle_round_trip(tmp_path_factory, norad, inc, raan, ecc, mm, epoch):
    rec = ingest.format_tle(f"SAT-{norad}", norad, epoch, inc, raan, ecc, 10.0, 20.0, mm)
    p = tmp_path_factory.mktemp("rt") / "c.tle"
    ingest.write_tle_catalog(p, [rec])
    assert ingest.parse_tle_catalog(p) == [rec]
