"""Parsers and writers for every input artifact.

All tabular logs are comma-separated with a header line. Parsers are tolerant
of noisy field logs: a bad line is counted, reported and skipped, but a file
where more than 10% of the lines are bad is rejected outright.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from calendar import timegm
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from leoident.errors import IngestError

log = logging.getLogger(__name__)

GRID_SIZE = 123
N_CELLS = GRID_SIZE * GRID_SIZE
UNKNOWN_CELL = -1.0
QUATERNION_NORM_TOL = 1e-3
MALFORMED_CEILING = 0.10

STATUS_COLUMNS = (
    "timestamp",
    "hardware_version",
    "pop_ping_latency_ms",
    "downlink_throughput_bps",
    "uplink_throughput_bps",
    "tilt_angle_deg",
    "boresight_azimuth_deg",
    "boresight_elevation_deg",
    "attitude_estimation_state",
    "attitude_uncertainty_deg",
    "desired_boresight_azimuth_deg",
    "desired_boresight_elevation_deg",
    "q_scalar",
    "q_x",
    "q_y",
    "q_z",
)
LOCATION_COLUMNS = (
    "timestamp",
    "latitude",
    "longitude",
    "altitude_meters",
    "horizontal_speed_mps",
    "vertical_speed_mps",
    "source",
)
OUTAGE_COLUMNS = ("start_timestamp_ns", "duration_ns", "cause", "did_switch")
PING_COLUMNS = ("response_timestamp", "sequence", "rtt_ms", "lost")
THROUGHPUT_COLUMNS = ("timestamp", "direction", "bps")
FRAME_HEADER = "timestamp,frame_type,raw"


class FrameType(str, Enum):
    FRAME_EARTH = "FRAME_EARTH"
    FRAME_UT = "FRAME_UT"


class LocationSource(str, Enum):
    DISH_GNSS = "DISH_GNSS"
    EXTERNAL_GPS = "EXTERNAL_GPS"


class Direction(str, Enum):
    DOWN = "DOWN"
    UP = "UP"


class EventReason(str, Enum):
    OUTAGE_UNKNOWN = "EVENT_REASON_OUTAGE_UNKNOWN"
    OUTAGE_BOOTING = "EVENT_REASON_OUTAGE_BOOTING"
    OUTAGE_STOWED = "EVENT_REASON_OUTAGE_STOWED"
    OUTAGE_THERMAL_SHUTDOWN = "EVENT_REASON_OUTAGE_THERMAL_SHUTDOWN"
    OUTAGE_NO_SCHEDULE = "EVENT_REASON_OUTAGE_NO_SCHEDULE"
    OUTAGE_NO_SATS = "EVENT_REASON_OUTAGE_NO_SATS"
    OUTAGE_OBSTRUCTED = "EVENT_REASON_OUTAGE_OBSTRUCTED"
    OUTAGE_NO_DOWNLINK = "EVENT_REASON_OUTAGE_NO_DOWNLINK"
    OUTAGE_NO_PINGS = "EVENT_REASON_OUTAGE_NO_PINGS"
    OUTAGE_SLEEPING = "EVENT_REASON_OUTAGE_SLEEPING"
    OUTAGE_MOVING_WHILE_NOT_ALLOWED = "EVENT_REASON_OUTAGE_MOVING_WHILE_NOT_ALLOWED"
    OUTAGE_SKY_SEARCH = "EVENT_REASON_OUTAGE_SKY_SEARCH"
    HIGH_DOWNLINK_PACKET_LOSS = "EVENT_REASON_HIGH_DOWNLINK_PACKET_LOSS"
    UT_ALERT_RAIN_SNR_PERSISTENTLY_LOW = "EVENT_REASON_UT_ALERT_RAIN_SNR_PERSISTENTLY_LOW"
    UT_ALERT_ETH_NO_LINK = "EVENT_REASON_UT_ALERT_ETH_NO_LINK"
    UT_ALERT_ETH_SLOW_LINK = "EVENT_REASON_UT_ALERT_ETH_SLOW_LINK"
    UT_ALERT_ETH_SLOW_LINK_100 = "EVENT_REASON_UT_ALERT_ETH_SLOW_LINK_100"

    @property
    def short(self) -> str:
        """Name without the ``OUTAGE_`` prefix, as used in summary tables."""
        return self.name.removeprefix("OUTAGE_")

    @classmethod
    def parse(cls, text: str) -> EventReason | None:
        key = text.strip().upper()
        if key.startswith("EVENT_REASON_"):
            key = key[len("EVENT_REASON_"):]
        for candidate in (key, "OUTAGE_" + key):
            if candidate in cls.__members__:
                return cls[candidate]
        return None


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class UtStatusRecord:
    timestamp: float
    hardware_model: str
    pop_ping_latency_ms: float | None = None
    downlink_bps: float | None = None
    uplink_bps: float | None = None
    tilt_deg: float | None = None
    boresight_azimuth_deg: float | None = None
    boresight_elevation_deg: float | None = None
    quaternion: tuple[float, float, float, float] | None = None
    attitude_uncertainty_deg: float | None = None
    attitude_estimation_state: int | None = None
    desired_boresight_azimuth_deg: float | None = None
    desired_boresight_elevation_deg: float | None = None

    @property
    def degraded(self) -> bool:
        if self.quaternion is None:
            return False
        return abs(math.sqrt(sum(v * v for v in self.quaternion)) - 1.0) > QUATERNION_NORM_TOL


@dataclass(frozen=True)
class UtLocationRecord:
    timestamp: float  # always Unix epoch after parsing
    latitude: float
    longitude: float
    altitude_m: float
    horizontal_speed_mps: float | None = None
    vertical_speed_mps: float | None = None
    source: LocationSource = LocationSource.EXTERNAL_GPS


@dataclass(frozen=True, eq=False)
class ObstructionFrame:
    timestamp: float
    frame_type: FrameType
    cells: np.ndarray  # (123, 123) float, row 0 = top, UNKNOWN_CELL where unexplored

    def __post_init__(self) -> None:
        if self.cells.shape != (GRID_SIZE, GRID_SIZE):
            raise ValueError(f"obstruction grid must be {GRID_SIZE}x{GRID_SIZE}, got {self.cells.shape}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObstructionFrame):
            return NotImplemented
        return (
            self.timestamp == other.timestamp
            and self.frame_type == other.frame_type
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class OutageEvent:
    start_ns: int
    duration_ns: int
    cause: EventReason
    did_switch: bool

    @property
    def start_s(self) -> float:
        return self.start_ns / 1e9

    @property
    def end_ns(self) -> int:
        return self.start_ns + self.duration_ns

    @property
    def end_s(self) -> float:
        return self.end_ns / 1e9


@dataclass(frozen=True)
class TleRecord:
    name: str
    norad_id: int
    line1: str
    line2: str
    epoch: float
    is_dtc: bool


@dataclass(frozen=True)
class PingSample:
    response_timestamp: float
    sequence: int
    rtt_ms: float | None
    lost: bool


@dataclass(frozen=True)
class ThroughputSample:
    timestamp: float
    direction: Direction
    bps: float


@dataclass
class ParseReport:
    """Bad records seen while parsing, as (line number, reason) pairs."""

    path: str = ""
    total: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[tuple[int, str]] = field(default_factory=list)

    def reject(self, line_no: int, reason: str) -> None:
        self.rejected.append((line_no, reason))
        log.warning("%s:%d: %s", self.path, line_no, reason)

    def warn(self, line_no: int, reason: str) -> None:
        self.warnings.append((line_no, reason))
        log.warning("%s:%d: %s", self.path, line_no, reason)


# ---------------------------------------------------------------- helpers


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


def _opt_float(text: str) -> float | None:
    text = text.strip()
    return None if text == "" else float(text)


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _check_ceiling(report: ParseReport) -> None:
    if report.total and len(report.rejected) > MALFORMED_CEILING * report.total:
        lines = ", ".join(str(n) for n, _ in report.rejected[:20])
        raise IngestError(
            f"{report.path}: {len(report.rejected)} of {report.total} lines malformed "
            f"(over {MALFORMED_CEILING:.0%}); bad lines: {lines}"
        )


def _csv_rows(path: str | Path, expected: Sequence[str], report: ParseReport):
    """Yield ``(line_no, dict)`` for each data row; validates the header."""
    text = _read_text(path)
    lines = text.splitlines()
    if not lines:
        return
    header = [h.strip() for h in next(csv.reader([lines[0]]))]
    missing = [c for c in expected if c not in header]
    if missing:
        raise IngestError(f"{path}: header lacks columns {missing}")
    for line_no, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        report.total += 1
        if len(row) != len(header):
            report.reject(line_no, f"expected {len(header)} fields, got {len(row)}")
            continue
        yield line_no, dict(zip(header, row))


def _dedup_sorted(items: list, key) -> list:
    """Stable sort by key and keep the last item for each repeated key."""
    out: dict = {}
    for item in sorted(items, key=key):
        out[key(item)] = item
    return list(out.values())


def _write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------- GPS time

GPS_UNIX_OFFSET = 315964800  # 1980-01-06T00:00:00Z in Unix seconds
# (GPS second at which the offset takes effect, GPS-UTC in seconds)
_LEAP_TABLE_UTC = (
    ("1981-07-01", 1), ("1982-07-01", 2), ("1983-07-01", 3), ("1985-07-01", 4),
    ("1988-01-01", 5), ("1990-01-01", 6), ("1991-01-01", 7), ("1992-07-01", 8),
    ("1993-07-01", 9), ("1994-07-01", 10), ("1996-01-01", 11), ("1997-07-01", 12),
    ("1999-01-01", 13), ("2006-01-01", 14), ("2009-01-01", 15), ("2012-07-01", 16),
    ("2015-07-01", 17), ("2017-01-01", 18),
)  # fmt: skip
_LEAPS_UNIX = tuple(
    (timegm(datetime.strptime(d, "%Y-%m-%d").timetuple()), n) for d, n in _LEAP_TABLE_UTC
)


def gps_utc_offset_at_unix(unix_s: float) -> int:
    off = 0
    for start, n in _LEAPS_UNIX:
        if unix_s >= start:
            off = n
    return off


def gps_to_unix(gps: Decimal) -> Decimal:
    approx = float(gps) + GPS_UNIX_OFFSET
    # the leap count at the approximate UTC instant is exact except within 18 s of a leap
    off = gps_utc_offset_at_unix(approx - gps_utc_offset_at_unix(approx))
    return gps + GPS_UNIX_OFFSET - off


def unix_to_gps(unix: Decimal) -> Decimal:
    return unix - GPS_UNIX_OFFSET + gps_utc_offset_at_unix(float(unix))


# ---------------------------------------------------------------- status


def parse_status_log(path: str | Path, report: ParseReport | None = None) -> list[UtStatusRecord]:
    report = report if report is not None else ParseReport()
    report.path = str(path)
    out: list[UtStatusRecord] = []
    for line_no, row in _csv_rows(path, STATUS_COLUMNS, report):
        try:
            qs = [_opt_float(row[c]) for c in ("q_scalar", "q_x", "q_y", "q_z")]
            if all(v is None for v in qs):
                quat = None
            elif any(v is None for v in qs):
                raise ValueError("partial quaternion")
            else:
                quat = tuple(qs)  # type: ignore[assignment]
            state = row["attitude_estimation_state"].strip()
            rec = UtStatusRecord(
                timestamp=float(row["timestamp"]),
                hardware_model=row["hardware_version"].strip(),
                pop_ping_latency_ms=_opt_float(row["pop_ping_latency_ms"]),
                downlink_bps=_opt_float(row["downlink_throughput_bps"]),
                uplink_bps=_opt_float(row["uplink_throughput_bps"]),
                tilt_deg=_opt_float(row["tilt_angle_deg"]),
                boresight_azimuth_deg=_opt_float(row["boresight_azimuth_deg"]),
                boresight_elevation_deg=_opt_float(row["boresight_elevation_deg"]),
                quaternion=quat,
                attitude_uncertainty_deg=_opt_float(row["attitude_uncertainty_deg"]),
                attitude_estimation_state=int(state) if state else None,
                desired_boresight_azimuth_deg=_opt_float(row["desired_boresight_azimuth_deg"]),
                desired_boresight_elevation_deg=_opt_float(row["desired_boresight_elevation_deg"]),
            )
        except ValueError as exc:
            report.reject(line_no, str(exc))
            continue
        if not math.isfinite(rec.timestamp):
            report.reject(line_no, "non-finite timestamp")
            continue
        if rec.degraded:
            report.warn(line_no, "quaternion norm outside 1 +/- 1e-3; record flagged degraded")
        out.append(rec)
    _check_ceiling(report)
    return _dedup_sorted(out, key=lambda r: r.timestamp)


def write_status_log(path: str | Path, records: Iterable[UtStatusRecord]) -> None:
    rows = []
    for r in records:
        q = r.quaternion if r.quaternion is not None else (None, None, None, None)
        rows.append(
            [
                _fmt(r.timestamp), r.hardware_model, _fmt(r.pop_ping_latency_ms), _fmt(r.downlink_bps),
                _fmt(r.uplink_bps), _fmt(r.tilt_deg), _fmt(r.boresight_azimuth_deg),
                _fmt(r.boresight_elevation_deg), _fmt(r.attitude_estimation_state),
                _fmt(r.attitude_uncertainty_deg), _fmt(r.desired_boresight_azimuth_deg),
                _fmt(r.desired_boresight_elevation_deg), *(_fmt(v) for v in q),
            ]
        )  # fmt: skip
    _write_csv(path, STATUS_COLUMNS, rows)


# ---------------------------------------------------------------- location


def parse_location_log(path: str | Path, report: ParseReport | None = None) -> list[UtLocationRecord]:
    """Parse a location log. ``DISH_GNSS`` rows carry GPS-epoch timestamps and are
    converted to Unix time here; ``EXTERNAL_GPS`` rows are already Unix time."""
    report = report if report is not None else ParseReport()
    report.path = str(path)
    out: list[UtLocationRecord] = []
    for line_no, row in _csv_rows(path, LOCATION_COLUMNS, report):
        try:
            source = LocationSource(row["source"].strip())
            ts = Decimal(row["timestamp"].strip())
            if source is LocationSource.DISH_GNSS:
                ts = gps_to_unix(ts)
            rec = UtLocationRecord(
                timestamp=float(ts),
                latitude=float(row["latitude"]),
                longitude=float(row["longitude"]),
                altitude_m=float(row["altitude_meters"]),
                horizontal_speed_mps=_opt_float(row["horizontal_speed_mps"]),
                vertical_speed_mps=_opt_float(row["vertical_speed_mps"]),
                source=source,
            )
        except (ValueError, ArithmeticError) as exc:
            report.reject(line_no, str(exc))
            continue
        if not (abs(rec.latitude) <= 90 and -180 <= rec.longitude < 180 and -500 <= rec.altitude_m <= 10000):
            report.reject(line_no, "position out of range")
            continue
        out.append(rec)
    _check_ceiling(report)
    return _dedup_sorted(out, key=lambda r: r.timestamp)


def write_location_log(path: str | Path, records: Iterable[UtLocationRecord]) -> None:
    rows = []
    for r in records:
        if r.source is LocationSource.DISH_GNSS:
            ts = str(unix_to_gps(Decimal(repr(r.timestamp))))
        else:
            ts = _fmt(r.timestamp)
        rows.append(
            [ts, _fmt(r.latitude), _fmt(r.longitude), _fmt(r.altitude_m),
             _fmt(r.horizontal_speed_mps), _fmt(r.vertical_speed_mps), r.source.value]
        )  # fmt: skip
    _write_csv(path, LOCATION_COLUMNS, rows)


# ---------------------------------------------------------------- obstruction frames


def parse_obstruction_frames(path: str | Path, report: ParseReport | None = None) -> list[ObstructionFrame]:
    report = report if report is not None else ParseReport()
    report.path = str(path)
    frames: list[ObstructionFrame] = []
    for line_no, line in enumerate(_read_text(path).splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("timestamp"):
            continue
        report.total += 1
        parts = line.split(",")
        if len(parts) != N_CELLS + 2:
            report.reject(line_no, f"record {report.total}: expected {N_CELLS} cells, got {len(parts) - 2}")
            continue
        try:
            ts = float(parts[0])
            ftype = FrameType(parts[1].strip())
        except ValueError as exc:
            report.reject(line_no, f"record {report.total}: {exc}")
            continue
        try:
            cells = np.array(parts[2:], dtype=float).reshape(GRID_SIZE, GRID_SIZE)
        except ValueError as exc:
            report.reject(line_no, f"record {report.total}: {exc}")
            continue
        if np.isnan(cells).any() or (cells > 1.0).any():
            report.reject(line_no, f"record {report.total}: cell values must be the sentinel or in [0, 1]")
            continue
        cells[cells < 0] = UNKNOWN_CELL
        frames.append(ObstructionFrame(ts, ftype, cells))
    return _dedup_sorted(frames, key=lambda f: f.timestamp)


def _fmt_cell(v: float) -> str:
    return "-1" if v < 0 else repr(float(v))


def write_obstruction_frames(path: str | Path, frames: Iterable[ObstructionFrame]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FRAME_HEADER + "\n")
        for f in frames:
            cells = ",".join(_fmt_cell(v) for v in f.cells.ravel())
            fh.write(f"{_fmt(f.timestamp)},{f.frame_type.value},{cells}\n")


# ---------------------------------------------------------------- TLE


def tle_checksum(line: str) -> int:
    total = 0
    for ch in line[:68]:
        if ch.isdigit():
            total += int(ch)
        elif ch == "-":
            total += 1
    return total % 10


def tle_line_valid(line: str) -> bool:
    return len(line) >= 69 and line[68].isdigit() and tle_checksum(line) == int(line[68])


_DTC_TOKEN = re.compile(r"(?<![A-Z0-9])DTC(?![A-Z0-9])", re.IGNORECASE)


def is_dtc_name(name: str) -> bool:
    return bool(_DTC_TOKEN.search(name))


def tle_epoch_to_unix(line1: str) -> float:
    yy = int(line1[18:20])
    day = float(line1[20:32])
    year = 2000 + yy if yy < 57 else 1900 + yy
    jan1 = timegm((year, 1, 1, 0, 0, 0))
    return jan1 + (day - 1.0) * 86400.0


def parse_tle_text(text: str, report: ParseReport | None = None) -> list[TleRecord]:
    """Parse 3-line (name + elements) or bare 2-line element sets; ``#`` lines are comments."""
    report = report if report is not None else ParseReport()
    lines = [ln.rstrip() for ln in text.splitlines()]
    out: list[TleRecord] = []
    i = 0
    while i < len(lines):
        if not lines[i].strip() or lines[i].startswith("#"):
            i += 1
            continue
        line_no = i + 1
        if lines[i].startswith("1 ") and i + 1 < len(lines) and lines[i + 1].startswith("2 "):
            # two-line set without a name line
            l1, l2 = lines[i], lines[i + 1]
            name = f"NORAD {l1[2:7].strip()}"
            i += 2
        elif i + 2 >= len(lines):
            report.total += 1
            report.reject(line_no, "truncated element set")
            break
        else:
            name, l1, l2 = lines[i].strip(), lines[i + 1], lines[i + 2]
            i += 3
        report.total += 1
        if name.startswith("0 "):
            name = name[2:].strip()
        if not (l1.startswith("1 ") and l2.startswith("2 ")):
            report.reject(line_no, f"{name}: element lines out of place")
            continue
        bad = [k for k, ln in ((1, l1), (2, l2)) if not tle_line_valid(ln)]
        if bad:
            report.reject(line_no, f"{name}: checksum failure on line {bad[0]}")
            continue
        try:
            n1, n2 = int(l1[2:7]), int(l2[2:7])
        except ValueError:
            report.reject(line_no, f"{name}: unparseable catalog number")
            continue
        if n1 != n2 or n1 <= 0:
            report.reject(line_no, f"{name}: catalog numbers disagree ({n1} vs {n2})")
            continue
        try:
            epoch = tle_epoch_to_unix(l1)
        except ValueError:
            report.reject(line_no, f"{name}: unparseable epoch")
            continue
        out.append(TleRecord(name, n1, l1[:69], l2[:69], epoch, is_dtc_name(name)))
    return out


def parse_tle_catalog(path: str | Path, report: ParseReport | None = None) -> list[TleRecord]:
    report = report if report is not None else ParseReport()
    report.path = str(path)
    return parse_tle_text(_read_text(path), report)


def write_tle_catalog(path: str | Path, records: Iterable[TleRecord]) -> None:
    Path(path).write_text("".join(f"{r.name}\n{r.line1}\n{r.line2}\n" for r in records), encoding="utf-8")


def format_tle(
    name: str,
    norad_id: int,
    epoch_unix: float,
    inclination_deg: float,
    raan_deg: float,
    eccentricity: float,
    arg_perigee_deg: float,
    mean_anomaly_deg: float,
    mean_motion_rev_day: float,
    bstar: float = 0.0,
    rev_number: int = 1,
    classification: str = "U",
    intl_designator: str = "24001A",
) -> TleRecord:
    """Encode Keplerian mean elements as a checksummed element set."""
    dt = datetime.fromtimestamp(epoch_unix, tz=timezone.utc)
    jan1 = timegm((dt.year, 1, 1, 0, 0, 0))
    day = (epoch_unix - jan1) / 86400.0 + 1.0
    epoch_field = f"{dt.year % 100:02d}{day:012.8f}"
    l1 = (
        f"1 {norad_id:05d}{classification} {intl_designator:<8s} {epoch_field} "
        f" .00000000  00000-0 {_tle_exp(bstar)} 0 {999:4d}"
    )
    l1 = l1 + str(tle_checksum(l1))

    def ang(x: float) -> float:
        return round(x % 360.0, 4) % 360.0

    ecc_field = f"{eccentricity:.7f}"[2:]
    l2 = (
        f"2 {norad_id:05d} {ang(inclination_deg):8.4f} {ang(raan_deg):8.4f} {ecc_field} "
        f"{ang(arg_perigee_deg):8.4f} {ang(mean_anomaly_deg):8.4f} {mean_motion_rev_day:11.8f}"
        f"{rev_number % 100000:5d}"
    )
    l2 = l2 + str(tle_checksum(l2))
    if len(l1) != 69 or len(l2) != 69:
        raise ValueError(f"element set encoding produced wrong line lengths ({len(l1)}, {len(l2)})")
    return TleRecord(name, norad_id, l1, l2, tle_epoch_to_unix(l1), is_dtc_name(name))


def _tle_exp(value: float) -> str:
    if value == 0.0:
        return " 00000-0"
    sign = "-" if value < 0 else " "
    exp = math.floor(math.log10(abs(value))) + 1
    mant = round(abs(value) / 10**exp * 1e5)
    if mant >= 100000:
        mant //= 10
        exp += 1
    return f"{sign}{mant:05d}{'-' if exp < 0 else '+'}{abs(exp)}"


# ---------------------------------------------------------------- outages


def parse_outage_log(path: str | Path, report: ParseReport | None = None) -> list[OutageEvent]:
    report = report if report is not None else ParseReport()
    report.path = str(path)
    out: list[OutageEvent] = []
    for line_no, row in _csv_rows(path, OUTAGE_COLUMNS, report):
        try:
            start = int(row["start_timestamp_ns"])
            duration = int(row["duration_ns"])
            did_switch = _parse_bool(row["did_switch"])
        except ValueError as exc:
            report.reject(line_no, str(exc))
            continue
        if duration <= 0:
            report.reject(line_no, f"non-positive duration {duration} ns")
            continue
        cause = EventReason.parse(row["cause"])
        if cause is None:
            report.warn(line_no, f"unknown event reason {row['cause']!r}; mapped to OUTAGE_UNKNOWN")
            cause = EventReason.OUTAGE_UNKNOWN
        out.append(OutageEvent(start, duration, cause, did_switch))
    _check_ceiling(report)
    return sorted(out, key=lambda e: (e.start_ns, e.duration_ns))


def write_outage_log(path: str | Path, events: Iterable[OutageEvent]) -> None:
    rows = [[str(e.start_ns), str(e.duration_ns), e.cause.value, _fmt(e.did_switch)] for e in events]
    _write_csv(path, OUTAGE_COLUMNS, rows)


# ---------------------------------------------------------------- ping

_PING_REPLY = re.compile(r"^\[(?P<ts>\d+(?:\.\d+)?)\].*icmp_seq=(?P<seq>\d+).*time=(?P<rtt>\d+(?:\.\d+)?) ms")
_PING_NOANSWER = re.compile(r"^\[(?P<ts>\d+(?:\.\d+)?)\].*no answer yet for icmp_seq=(?P<seq>\d+)")
MAX_PING_SKEW_S = 1.0


def parse_ping_log(path: str | Path, report: ParseReport | None = None) -> list[PingSample]:
    """Parse either canonical CSV or raw ``ping -D`` output.

    Sequence gaps become ``lost`` samples whose timestamps are interpolated
    between the neighbouring replies.
    """
    report = report if report is not None else ParseReport()
    report.path = str(path)
    text = _read_text(path)
    first = text.lstrip().split("\n", 1)[0] if text.strip() else ""
    if first.startswith("response_timestamp"):
        raw = _ping_rows_csv(path, report)
    else:
        raw = _ping_rows_raw(text, report)
    _check_ceiling(report)
    return _fill_ping_gaps(raw, report)


def _ping_rows_csv(path, report: ParseReport) -> list[tuple[int, PingSample]]:
    rows = []
    for line_no, row in _csv_rows(path, PING_COLUMNS, report):
        try:
            lost = _parse_bool(row["lost"])
            rtt = _opt_float(row["rtt_ms"])
            s = PingSample(float(row["response_timestamp"]), int(row["sequence"]), None if lost else rtt, lost)
        except ValueError as exc:
            report.reject(line_no, str(exc))
            continue
        if not s.lost and (s.rtt_ms is None or s.rtt_ms <= 0):
            report.reject(line_no, "received reply without a positive rtt")
            continue
        rows.append((line_no, s))
    return rows


def _ping_rows_raw(text: str, report: ParseReport) -> list[tuple[int, PingSample]]:
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        m = _PING_REPLY.match(line)
        if m:
            report.total += 1
            rtt = float(m["rtt"])
            if rtt <= 0:
                report.reject(line_no, "non-positive rtt")
                continue
            rows.append((line_no, PingSample(float(m["ts"]), int(m["seq"]), rtt, False)))
            continue
        m = _PING_NOANSWER.match(line)
        if m:
            report.total += 1
            rows.append((line_no, PingSample(float(m["ts"]), int(m["seq"]), None, True)))
    return rows


def _fill_ping_gaps(rows: list[tuple[int, PingSample]], report: ParseReport) -> list[PingSample]:
    if not rows:
        return []
    latest = -math.inf
    for line_no, s in rows:
        if s.response_timestamp < latest - MAX_PING_SKEW_S:
            raise IngestError(
                f"{report.path}:{line_no}: timestamp runs backwards by "
                f"{latest - s.response_timestamp:.3f} s (limit {MAX_PING_SKEW_S} s)"
            )
        latest = max(latest, s.response_timestamp)
    # icmp_seq is 16 bits on the wire; unwrap it in file order
    unwrapped: dict[int, PingSample] = {}
    offset, prev = 0, None
    for _, s in rows:
        if prev is not None and s.sequence < prev - 32768:
            offset += 65536
        prev = s.sequence
        seq = s.sequence + offset
        existing = unwrapped.get(seq)
        if existing is None or (existing.lost and not s.lost):
            unwrapped[seq] = PingSample(s.response_timestamp, seq, s.rtt_ms, s.lost)
    seqs = sorted(unwrapped)
    out: list[PingSample] = []
    for a, b in zip(seqs, seqs[1:]):
        out.append(unwrapped[a])
        sa, sb = unwrapped[a], unwrapped[b]
        for k in range(a + 1, b):
            frac = (k - a) / (b - a)
            t = sa.response_timestamp + frac * (sb.response_timestamp - sa.response_timestamp)
            out.append(PingSample(t, k, None, True))
    out.append(unwrapped[seqs[-1]])
    return out


def write_ping_log(path: str | Path, samples: Iterable[PingSample]) -> None:
    rows = [[_fmt(s.response_timestamp), str(s.sequence), _fmt(s.rtt_ms), _fmt(s.lost)] for s in samples]
    _write_csv(path, PING_COLUMNS, rows)


# ---------------------------------------------------------------- throughput


def parse_throughput_log(path: str | Path, report: ParseReport | None = None) -> list[ThroughputSample]:
    report = report if report is not None else ParseReport()
    report.path = str(path)
    out: list[ThroughputSample] = []
    for line_no, row in _csv_rows(path, THROUGHPUT_COLUMNS, report):
        try:
            s = ThroughputSample(float(row["timestamp"]), Direction(row["direction"].strip().upper()), float(row["bps"]))
        except ValueError as exc:
            report.reject(line_no, str(exc))
            continue
        if s.bps < 0:
            report.reject(line_no, "negative throughput")
            continue
        out.append(s)
    _check_ceiling(report)
    return sorted(out, key=lambda s: (s.timestamp, s.direction.value))


def write_throughput_log(path: str | Path, samples: Iterable[ThroughputSample]) -> None:
    rows = [[_fmt(s.timestamp), s.direction.value, _fmt(s.bps)] for s in samples]
    _write_csv(path, THROUGHPUT_COLUMNS, rows)
