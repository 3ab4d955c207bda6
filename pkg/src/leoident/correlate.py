"""Line identification results up with outage, ping and throughput traces."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from leoident.ident import SLOT_LENGTH_S, BeamSwitchEvent, IdentificationInterval, timeslot_of
from leoident.ingest import Direction, EventReason, OutageEvent, PingSample, ThroughputSample

DEFAULT_PING_INTERVAL_MS = 10.0
SWITCH_WINDOW_S = 3.0


# ---------------------------------------------------------------- outage breakdown


@dataclass(frozen=True)
class CauseShare:
    cause: EventReason
    count: int
    duration_ns: int

    @property
    def seconds(self) -> float:
        return self.duration_ns / 1e9


@dataclass(frozen=True)
class OutageBreakdown:
    shares: tuple[CauseShare, ...] = ()

    @property
    def total_ns(self) -> int:
        return sum(s.duration_ns for s in self.shares)

    @property
    def total_seconds(self) -> float:
        return self.total_ns / 1e9

    def percent(self, cause: EventReason) -> float:
        total = self.total_ns
        for s in self.shares:
            if s.cause is cause:
                return 100.0 * s.duration_ns / total if total else 0.0
        return 0.0

    def percentages(self) -> dict[EventReason, float]:
        return {s.cause: self.percent(s.cause) for s in self.shares}

    def __len__(self) -> int:
        return len(self.shares)


def outage_breakdown(events: Iterable[OutageEvent], causes: Sequence[EventReason] | None = None) -> OutageBreakdown:
    """Total outage time per cause.

    ``causes`` lists causes to report even when no event carries them (a row
    with zero seconds); otherwise only observed causes appear, in enum order.
    """
    ns: dict[EventReason, int] = {}
    count: dict[EventReason, int] = {}
    for ev in events:
        ns[ev.cause] = ns.get(ev.cause, 0) + ev.duration_ns
        count[ev.cause] = count.get(ev.cause, 0) + 1
    order = list(causes) if causes is not None else []
    order += [c for c in EventReason if c in ns and c not in order]
    return OutageBreakdown(tuple(CauseShare(c, count.get(c, 0), ns.get(c, 0)) for c in order))


# ---------------------------------------------------------------- ping gaps


@dataclass(frozen=True)
class PingGap:
    start: float
    end: float
    n_lost: int = 0

    @property
    def duration(self) -> float:
        return self.end - self.start

    def overlaps(self, lo: float, hi: float) -> bool:
        return self.start <= hi and self.end >= lo


# Unix-epoch floats resolve to about 0.24 us.
TIME_EPS_S = 1e-6


class GapDetector:
    """Streaming gap detector; feeding samples in any chunking gives the same spans.

    A gap runs from one nominal interval after the last reply to the next reply,
    and is reported when it lasts at least twice the nominal interval. Lost
    samples with no later reply close at one interval past the last of them.
    """

    def __init__(self, nominal_interval_ms: float = DEFAULT_PING_INTERVAL_MS):
        if nominal_interval_ms <= 0:
            raise ValueError("nominal ping interval must be positive")
        self.nominal = nominal_interval_ms / 1000.0
        self._last_reply: float | None = None
        self._first_lost: float | None = None
        self._last_lost: float | None = None
        self._n_lost = 0

    def _emit(self, start: float, end: float) -> list[PingGap]:
        n = self._n_lost
        self._first_lost = self._last_lost = None
        self._n_lost = 0
        if end - start >= 2.0 * self.nominal - TIME_EPS_S:
            return [PingGap(start, end, n)]
        return []

    def feed(self, samples: Iterable[PingSample]) -> list[PingGap]:
        out: list[PingGap] = []
        for s in samples:
            t = s.response_timestamp
            if s.lost or s.rtt_ms is None:
                if self._first_lost is None:
                    self._first_lost = t
                self._last_lost = t
                self._n_lost += 1
                continue
            if self._last_reply is not None:
                out += self._emit(self._last_reply + self.nominal, t)
            elif self._first_lost is not None:
                out += self._emit(self._first_lost, t)
            self._last_reply = t
        return out

    def finish(self) -> list[PingGap]:
        if self._last_lost is None:
            return []
        start = self._last_reply + self.nominal if self._last_reply is not None else self._first_lost
        return self._emit(start, self._last_lost + self.nominal)


def detect_ping_gaps(samples: Sequence[PingSample], nominal_interval_ms: float = DEFAULT_PING_INTERVAL_MS) -> list[PingGap]:
    det = GapDetector(nominal_interval_ms)
    ordered = sorted(samples, key=lambda s: (s.response_timestamp, s.sequence))
    return det.feed(ordered) + det.finish()


# ---------------------------------------------------------------- timeline


@dataclass(frozen=True)
class SwitchAnnotation:
    event: BeamSwitchEvent
    gaps: tuple[PingGap, ...]
    outage: OutageEvent | None
    throughput_before_bps: float | None
    throughput_after_bps: float | None

    @property
    def throughput_delta_pct(self) -> float | None:
        b, a = self.throughput_before_bps, self.throughput_after_bps
        if b is None or a is None or b == 0:
            return None
        return 100.0 * (a - b) / b


@dataclass(frozen=True)
class SlotRow:
    slot_start: float
    intervals: tuple[IdentificationInterval, ...] = ()
    switches: tuple[SwitchAnnotation, ...] = ()
    gaps: tuple[PingGap, ...] = ()
    outages: tuple[OutageEvent, ...] = ()
    rtt_mean_ms: float | None = None
    rtt_p95_ms: float | None = None
    throughput_mean_bps: float | None = None


@dataclass
class TimelineReport:
    rows: list[SlotRow] = field(default_factory=list)
    outage_links: list[tuple[OutageEvent, tuple[PingGap, ...]]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def switch_annotations(self) -> list[SwitchAnnotation]:
        return [a for r in self.rows for a in r.switches]


def _extent(values: Iterable[float]) -> tuple[float, float] | None:
    vals = list(values)
    return (min(vals), max(vals)) if vals else None


def _mean(values: Sequence[float]) -> float | None:
    return float(np.mean(values)) if len(values) else None


def build_timeline(
    intervals: Sequence[IdentificationInterval],
    switches: Sequence[BeamSwitchEvent],
    outages: Sequence[OutageEvent],
    pings: Sequence[PingSample],
    throughput: Sequence[ThroughputSample],
    nominal_interval_ms: float = DEFAULT_PING_INTERVAL_MS,
    window_s: float = SWITCH_WINDOW_S,
) -> TimelineReport:
    """Per-slot rows with switches annotated by nearby gaps, outages and throughput.

    Throughput windows skip samples taken during an outage so that the delta
    compares service before and after the switch rather than the outage itself.
    """
    report = TimelineReport()
    ident_span = _extent([iv.t_from for iv in intervals] + [iv.t_to for iv in intervals] + [s.timestamp for s in switches])
    trace_span = _extent(
        [p.response_timestamp for p in pings]
        + [t.timestamp for t in throughput]
        + [o.start_s for o in outages]
        + [o.end_s for o in outages]
    )
    if ident_span and trace_span and (ident_span[1] < trace_span[0] or trace_span[1] < ident_span[0]):
        report.warnings.append(
            f"identification span {ident_span[0]:.3f}-{ident_span[1]:.3f} does not overlap the trace span "
            f"{trace_span[0]:.3f}-{trace_span[1]:.3f}; nothing to correlate"
        )
        return report

    gaps = detect_ping_gaps(pings, nominal_interval_ms)
    outages = sorted(outages, key=lambda o: o.start_ns)
    down = sorted((t for t in throughput if t.direction is Direction.DOWN), key=lambda t: t.timestamp)

    def in_outage(t: float) -> bool:
        return any(o.start_s <= t < o.end_s for o in outages)

    def tput(lo: float, hi: float, closed_left: bool) -> float | None:
        vals = [
            s.bps for s in down
            if (lo <= s.timestamp < hi if closed_left else lo < s.timestamp <= hi) and not in_outage(s.timestamp)
        ]
        return _mean(vals)

    def annotate(ev: BeamSwitchEvent) -> SwitchAnnotation:
        t = ev.timestamp
        near = tuple(g for g in gaps if g.overlaps(t - window_s, t + window_s))
        outage = ev.corroborating_outage
        if outage is None:
            hits = [o for o in outages if o.start_s <= t + window_s and o.end_s >= t - window_s]
            outage = min(hits, key=lambda o: (abs(o.end_s - t), o.start_ns)) if hits else None
        return SwitchAnnotation(ev, near, outage, tput(t - window_s, t, True), tput(t, t + window_s, False))

    slots = sorted(
        {timeslot_of(iv.t_from).start if iv.slot_start is None else iv.slot_start for iv in intervals}
        | {timeslot_of(s.timestamp).start for s in switches}
        | {timeslot_of(g.start).start for g in gaps}
        | {timeslot_of(o.start_s).start for o in outages}
    )
    rtts = sorted((p.response_timestamp, p.rtt_ms) for p in pings if not p.lost and p.rtt_ms is not None)
    rtt_t = np.array([r[0] for r in rtts])
    rtt_v = np.array([r[1] for r in rtts])
    for start in slots:
        end = start + SLOT_LENGTH_S
        sel = (rtt_t >= start) & (rtt_t < end) if rtt_t.size else np.zeros(0, dtype=bool)
        vals = rtt_v[sel] if rtt_t.size else np.empty(0)
        down_vals = [s.bps for s in down if start <= s.timestamp < end]
        report.rows.append(
            SlotRow(
                start,
                tuple(iv for iv in intervals if iv.slot_start == start),
                tuple(annotate(s) for s in switches if timeslot_of(s.timestamp).start == start),
                tuple(g for g in gaps if timeslot_of(g.start).start == start),
                tuple(o for o in outages if timeslot_of(o.start_s).start == start),
                float(vals.mean()) if vals.size else None,
                float(np.percentile(vals, 95)) if vals.size else None,
                _mean(down_vals),
            )
        )
    report.outage_links = [(o, tuple(g for g in gaps if g.overlaps(o.start_s, o.end_s))) for o in outages]
    return report


# ---------------------------------------------------------------- tables


def _f(x: float | None, digits: int = 3) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.{digits}f}"


def _nid(n: int | None) -> str:
    return "UNIDENTIFIED" if n is None else str(n)


def _writer(path: str | Path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_breakdown(path: str | Path, breakdown: OutageBreakdown) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["cause", "count", "seconds", "percent"])
        for s in breakdown.shares:
            w.writerow([s.cause.short, s.count, _f(s.seconds), _f(breakdown.percent(s.cause))])
        w.writerow(["TOTAL", sum(s.count for s in breakdown.shares), _f(breakdown.total_seconds),
                    _f(100.0 if breakdown.total_ns else 0.0)])


def write_timeline(path: str | Path, report: TimelineReport) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["slot_start", "satellites", "n_switches", "n_gaps", "gap_seconds", "n_outages",
                    "rtt_mean_ms", "rtt_p95_ms", "throughput_mean_bps"])
        for r in report.rows:
            w.writerow([
                _f(r.slot_start), ";".join(_nid(iv.norad_id) for iv in r.intervals), len(r.switches), len(r.gaps),
                _f(sum(g.duration for g in r.gaps)), len(r.outages), _f(r.rtt_mean_ms), _f(r.rtt_p95_ms),
                _f(r.throughput_mean_bps, 1),
            ])


def write_switch_annotations(path: str | Path, report: TimelineReport) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["timestamp", "from_norad", "to_norad", "within_slot", "gap_seconds", "outage_cause",
                    "outage_start_ns", "throughput_before_bps", "throughput_after_bps", "throughput_delta_pct"])
        for a in report.switch_annotations:
            ev = a.event
            w.writerow([
                _f(ev.timestamp), _nid(ev.from_norad), _nid(ev.to_norad), str(ev.within_slot).lower(),
                _f(sum(g.duration for g in a.gaps)), "" if a.outage is None else a.outage.cause.short,
                "" if a.outage is None else a.outage.start_ns, _f(a.throughput_before_bps, 1),
                _f(a.throughput_after_bps, 1), _f(a.throughput_delta_pct),
            ])


def series_rows(
    report: TimelineReport, pings: Sequence[PingSample], throughput: Sequence[ThroughputSample]
) -> list[tuple[float, str, float, str]]:
    """Plot-ready ``(timestamp, metric, value, annotation)`` rows in time order."""
    rows: list[tuple[float, str, float, str]] = []
    for p in pings:
        if not p.lost and p.rtt_ms is not None:
            rows.append((p.response_timestamp, "rtt_ms", p.rtt_ms, ""))
    for t in throughput:
        rows.append((t.timestamp, f"throughput_{t.direction.value.lower()}_bps", t.bps, ""))
    for r in report.rows:
        for iv in r.intervals:
            rows.append((iv.t_from, "satellite", float(iv.norad_id or 0), "" if iv.identified else "UNIDENTIFIED"))
        for g in r.gaps:
            rows.append((g.start, "ping_gap_s", g.duration, f"end={g.end:.6f}"))
        for o in r.outages:
            rows.append((o.start_s, "outage_s", o.duration_ns / 1e9, o.cause.short))
        for a in r.switches:
            ev = a.event
            rows.append((ev.timestamp, "beam_switch", float(ev.to_norad or 0),
                         f"from={_nid(ev.from_norad)} within_slot={str(ev.within_slot).lower()}"))
    rows.sort(key=lambda x: (x[0], x[1], x[2], x[3]))
    return rows


def write_series(path: str | Path, rows: Iterable[tuple[float, str, float, str]]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["timestamp", "metric", "value", "annotation"])
        for t, metric, value, note in rows:
            w.writerow([f"{t:.6f}", metric, repr(float(value)), note])
