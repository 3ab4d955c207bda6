"""Mobility-aware satellite identification and beam-switch detection.

The pipeline turns obstruction-map frames into earth-frame diff frames, groups
the changed pixels into trajectories that live inside 15-second scheduling
slots, and matches every trajectory against the propagated catalog.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from leoident.errors import FrameOrderError, PropagationError, UndefinedHeadingError
from leoident.geometry import (
    DEFAULT_ELEVATION_MASK_DEG,
    FovModel,
    MapGeometry,
    Site,
    Topocentric,
    fov_for,
    ned_to_az_el,
    ned_to_pixels,
    pixel_to_direction,
    propagate_many,
    separation_ned,
    topocentric_ned_track,
    visible_catalog,
)
from leoident.ingest import (
    EventReason,
    FrameType,
    ObstructionFrame,
    OutageEvent,
    TleRecord,
    UtLocationRecord,
    UtStatusRecord,
)
from leoident.mapproc import (
    DEFAULT_OBSTRUCTION_THRESHOLD,
    RESET_GUARD_PX,
    TRACK_GATE_PX,
    BinaryFrame,
    DiffFrame,
    Segment,
    classify,
    dump_debug_frames,
    label_segments,
    nearest_to_centroid,
    track_segments,
    ut_to_earth_frame,
    xor_diff,
)
from leoident.orientation import Attitude, attitude_from_status, slerp

SLOT_OFFSET_S = 12.0
SLOT_LENGTH_S = 15.0
DEFAULT_TAU_MATCH_DEG = 4.0
MAX_TELEMETRY_GAP_S = 2.0
SLOT_GUARD_S = 1.0
FRAGMENT_JOIN_PX = 3.0
OUTAGE_WINDOW_S = 3.0
PIXEL_DIFF_FLAG_PX = 2.0

NO_CANDIDATES = "NO_CANDIDATES"
ABOVE_THRESHOLD = "ABOVE_THRESHOLD"
NO_TRAJECTORY = "NO_TRAJECTORY"
UNIDENTIFIED = "UNIDENTIFIED"


# ---------------------------------------------------------------- slots


@dataclass(frozen=True)
class Timeslot:
    start: float
    end: float

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end


def timeslot_of(t: float) -> Timeslot:
    k = math.floor((t - SLOT_OFFSET_S) / SLOT_LENGTH_S)
    start = SLOT_OFFSET_S + SLOT_LENGTH_S * k
    return Timeslot(start, start + SLOT_LENGTH_S)


# ---------------------------------------------------------------- telemetry tracks


class _Track(Protocol):
    def at(self, t: float): ...


class AttitudeTrack:
    """Attitude samples interpolated by slerp; gaps wider than ``max_gap_s`` are invalid."""

    def __init__(self, statuses: Iterable[UtStatusRecord], max_gap_s: float = MAX_TELEMETRY_GAP_S):
        times, atts = [], []
        self.rejected = 0
        for s in sorted(statuses, key=lambda r: r.timestamp):
            try:
                att = attitude_from_status(s)
            except (ValueError, UndefinedHeadingError):
                self.rejected += 1
                continue
            if times and s.timestamp == times[-1]:
                atts[-1] = att
                continue
            times.append(s.timestamp)
            atts.append(att)
        self.times = np.array(times, dtype=float)
        self.attitudes = atts
        self.max_gap_s = max_gap_s

    @classmethod
    def constant(cls, attitude: Attitude) -> _ConstantTrack:
        return _ConstantTrack(attitude)

    def at(self, t: float) -> Attitude | None:
        i = _bracket(self.times, t, self.max_gap_s)
        if i is None:
            return None
        lo, frac = i
        a0 = self.attitudes[lo]
        if frac == 0.0:
            return a0
        a1 = self.attitudes[lo + 1]
        q = slerp(a0.quaternion, a1.quaternion, frac)
        return Attitude.from_quaternion(q, low_confidence=a0.low_confidence or a1.low_confidence)


class LocationTrack:
    """Piecewise-linear observer position with the same gap rule as :class:`AttitudeTrack`."""

    def __init__(self, records: Iterable[UtLocationRecord], max_gap_s: float = MAX_TELEMETRY_GAP_S):
        recs = sorted(records, key=lambda r: r.timestamp)
        self.times = np.array([r.timestamp for r in recs], dtype=float)
        self.lat = np.array([r.latitude for r in recs], dtype=float)
        self.lon = np.array([r.longitude for r in recs], dtype=float)
        self.alt = np.array([r.altitude_m for r in recs], dtype=float)
        self.max_gap_s = max_gap_s

    def at(self, t: float) -> Site | None:
        i = _bracket(self.times, t, self.max_gap_s)
        if i is None:
            return None
        lo, frac = i
        if frac == 0.0:
            return Site(float(self.lat[lo]), float(self.lon[lo]), float(self.alt[lo]))
        dlon = (self.lon[lo + 1] - self.lon[lo] + 180.0) % 360.0 - 180.0
        lon = (self.lon[lo] + frac * dlon + 180.0) % 360.0 - 180.0
        return Site(
            float(self.lat[lo] + frac * (self.lat[lo + 1] - self.lat[lo])),
            float(lon),
            float(self.alt[lo] + frac * (self.alt[lo + 1] - self.alt[lo])),
        )


@dataclass(frozen=True)
class _ConstantTrack:
    value: object

    def at(self, t: float):
        return self.value


def as_track(value) -> _Track:
    """Wrap a fixed observer or attitude so it can stand in for a track."""
    return value if hasattr(value, "at") else _ConstantTrack(value)


def _bracket(times: np.ndarray, t: float, max_gap: float) -> tuple[int, float] | None:
    n = times.size
    if n == 0:
        return None
    i = int(np.searchsorted(times, t, side="right"))
    if i == 0:
        return (0, 0.0) if times[0] - t <= max_gap / 2.0 else None
    if i == n:
        return (n - 1, 0.0) if t - times[-1] <= max_gap / 2.0 else None
    t0, t1 = times[i - 1], times[i]
    if t == t0:
        return i - 1, 0.0
    if t1 - t0 > max_gap:
        return None
    return i - 1, float((t - t0) / (t1 - t0))


# ---------------------------------------------------------------- diff stream


@dataclass(frozen=True, eq=False)
class ProcessedDiff:
    diff: DiffFrame
    t_mid: float
    segments: tuple[Segment, ...]


@dataclass
class DiffStream:
    diffs: list[ProcessedDiff] = field(default_factory=list)
    n_frames: int = 0
    skipped: int = 0
    resets: int = 0
    span: tuple[float, float] | None = None


def _full_earth(frame: BinaryFrame, attitude: Attitude | None, geom: MapGeometry) -> BinaryFrame:
    if frame.frame_type is FrameType.FRAME_EARTH:
        return frame
    if attitude is None:
        return BinaryFrame.empty(frame.timestamp)
    return ut_to_earth_frame(frame, attitude, geom)


def earth_diffs(
    frames: Sequence[ObstructionFrame],
    attitudes: _Track,
    observers: _Track,
    geom: MapGeometry,
    tau_obs: float = DEFAULT_OBSTRUCTION_THRESHOLD,
    reset_guard_px: int = RESET_GUARD_PX,
    debug_dir: str | Path | None = None,
) -> DiffStream:
    """Classify frames and emit earth-frame diffs.

    FRAME_UT pixels are converted to the earth frame once, when they first
    appear, using the attitude at the middle of the frame interval in which they
    were recorded; the earth map is the union of those conversions. Frames whose
    interval midpoint falls in a telemetry gap are skipped: they advance the
    baseline without emitting a diff.
    """
    out = DiffStream(n_frames=len(frames))
    if not frames:
        return out
    out.span = (frames[0].timestamp, frames[-1].timestamp)
    prev: BinaryFrame | None = None
    earth: BinaryFrame | None = None
    for frame in frames:
        b = classify(frame, tau_obs)
        if prev is None:
            prev, earth = b, _full_earth(b, attitudes.at(b.timestamp), geom)
            continue
        if not prev.timestamp < b.timestamp:
            raise FrameOrderError(f"frames out of order: {prev.timestamp} then {b.timestamp}")
        t_mid = 0.5 * (prev.timestamp + b.timestamp)
        if b.count < prev.count - reset_guard_px:
            out.resets += 1
            empty = np.zeros_like(b.explored)
            out.diffs.append(ProcessedDiff(DiffFrame(prev.timestamp, b.timestamp, empty, reset=True), t_mid, ()))
            prev, earth = b, _full_earth(b, attitudes.at(b.timestamp), geom)
            continue
        att, site = attitudes.at(t_mid), observers.at(t_mid)
        if att is None or site is None:
            out.skipped += 1
            earth = b if b.frame_type is FrameType.FRAME_EARTH else replace(earth, timestamp=b.timestamp)
            prev = b
            continue
        if b.frame_type is FrameType.FRAME_UT:
            fresh_px = b.explored & ~prev.explored
            fresh = BinaryFrame(b.timestamp, fresh_px, b.obstructed & fresh_px, FrameType.FRAME_UT)
            conv = ut_to_earth_frame(fresh, att, geom)
            curr = BinaryFrame(b.timestamp, earth.explored | conv.explored, earth.obstructed | conv.obstructed)
        else:
            curr = b
        d = xor_diff(earth, curr, reset_guard_px)
        if d.reset:
            out.resets += 1
        segs = () if d.reset else tuple(label_segments(d))
        out.diffs.append(ProcessedDiff(d, t_mid, segs))
        if debug_dir is not None:
            dump_debug_frames(debug_dir, curr, d)
        prev, earth = b, curr
    return out


# ---------------------------------------------------------------- trajectories


@dataclass(frozen=True)
class ObservedSample:
    timestamp: float
    pixel: tuple[int, int]
    direction: Topocentric


@dataclass
class TrajectoryObservation:
    segment: Segment
    samples: list[ObservedSample] = field(default_factory=list)

    @property
    def mid_time(self) -> float:
        return 0.5 * (self.samples[0].timestamp + self.samples[-1].timestamp)


@dataclass(eq=False)
class _Trajectory:
    slot_start: float
    appeared: tuple[float, float]
    group: int
    label: int
    is_new: bool
    obs: TrajectoryObservation
    last_growth: float
    pixels: set[tuple[int, int]] = field(default_factory=set)
    start: float = math.nan

    @property
    def tip(self) -> Segment:
        return self.obs.segment


def _merge(segs: Sequence[Segment], t: float, first_seen: float | None) -> Segment:
    pixels = sorted({p for s in segs for p in s.pixels})
    mid = nearest_to_centroid(np.array(pixels))
    return Segment(min(s.label for s in segs), tuple(pixels), mid, first_seen if first_seen is not None else t, t)


def _grow(tr: _Trajectory | None, segs: Sequence[Segment], pd: ProcessedDiff, geom: MapGeometry, **new) -> _Trajectory:
    first = tr.tip.first_seen if tr is not None else None
    seg = _merge(segs, pd.diff.t_curr, first)
    sample = ObservedSample(pd.t_mid, seg.midpoint, pixel_to_direction(seg.midpoint, FrameType.FRAME_EARTH, None, geom))
    if tr is None:
        tr = _Trajectory(obs=TrajectoryObservation(seg, [sample]), last_growth=pd.diff.t_curr, **new)
    else:
        tr.obs.segment = seg
        tr.obs.samples.append(sample)
        tr.last_growth = pd.diff.t_curr
    tr.pixels.update(seg.pixels)
    return tr


def cluster_fragments(segs: Sequence[Segment], join_px: float = FRAGMENT_JOIN_PX) -> list[list[Segment]]:
    """Single-linkage grouping of segments whose closest pixels are within ``join_px``.

    Re-projecting dish-frame pixels can tear one short trajectory piece into
    fragments a pixel or two apart; distinct satellites are much further apart.
    """
    n = len(segs)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    arrs = [np.asarray(s.pixels, dtype=float) for s in segs]
    for i in range(n):
        for j in range(i + 1, n):
            d = np.sqrt(((arrs[i][:, None, :] - arrs[j][None, :, :]) ** 2).sum(-1)).min()
            if d <= join_px:
                parent[find(j)] = find(i)
    groups: dict[int, list[Segment]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(segs[i])
    return [groups[k] for k in sorted(groups)]


def build_trajectories(
    stream: DiffStream,
    geom: MapGeometry,
    gate_px: float = TRACK_GATE_PX,
    grace_s: float = SLOT_GUARD_S,
    join_px: float = FRAGMENT_JOIN_PX,
) -> tuple[list[float], dict[float, list[_Trajectory]]]:
    """Assign every changed segment to a trajectory scoped to a slot.

    Returns the ordered slot starts that saw at least one processed diff and the
    trajectories of each slot. Segments that continue a previous-slot trajectory
    within ``grace_s`` of the boundary extend it; later ones open a continued
    (not NEW) trajectory in the current slot.
    """
    slots: list[float] = []
    by_slot: dict[float, list[_Trajectory]] = {}
    group = 0
    for pd in stream.diffs:
        slot = timeslot_of(pd.t_mid)
        if not slots or slots[-1] != slot.start:
            slots.append(slot.start)
        if pd.diff.reset or not pd.segments:
            continue
        current = by_slot.setdefault(slot.start, [])
        active = current + by_slot.get(slot.start - SLOT_LENGTH_S, [])
        report = track_segments([tr.tip for tr in active], list(pd.segments), gate_px)
        extend: dict[int, list[Segment]] = {}
        carried: dict[int, list[Segment]] = {}
        fresh: list[Segment] = []
        for seg, m in zip(pd.segments, report.matches):
            if m is None:
                fresh.append(seg)
            elif active[m].slot_start == slot.start or pd.t_mid < slot.start + grace_s:
                extend.setdefault(m, []).append(seg)
            else:
                carried.setdefault(m, []).append(seg)
        appeared = (pd.diff.t_prev, pd.diff.t_curr)
        for m in sorted(extend):
            _grow(active[m], extend[m], pd, geom)
        for m in sorted(carried):
            group += 1
            segs = carried[m]
            current.append(
                _grow(None, segs, pd, geom, slot_start=slot.start, appeared=appeared, group=group,
                      label=min(s.label for s in segs), is_new=False)
            )
        if fresh:
            group += 1
            for segs in cluster_fragments(fresh, join_px):
                current.append(
                    _grow(None, segs, pd, geom, slot_start=slot.start, appeared=appeared, group=group,
                          label=min(s.label for s in segs), is_new=True)
                )
    return slots, by_slot


def _order_slot(trajs: list[_Trajectory]) -> list[_Trajectory]:
    """Order a slot's trajectories in connection order and assign start times.

    Trajectories that appeared in the same diff are ordered by when they last
    grew (the one still growing is the one currently connected), then by label;
    they split the diff interval evenly.
    """
    groups: dict[int, list[_Trajectory]] = {}
    for tr in trajs:
        groups.setdefault(tr.group, []).append(tr)
    ordered: list[_Trajectory] = []
    for gid in sorted(groups, key=lambda g: (groups[g][0].appeared[1], g)):
        members = sorted(groups[gid], key=lambda tr: (tr.last_growth, tr.label))
        t_prev, t_curr = members[0].appeared
        for i, tr in enumerate(members):
            tr.start = t_prev + i * (t_curr - t_prev) / len(members)
        ordered.extend(members)
    return ordered


# ---------------------------------------------------------------- matching


@dataclass(frozen=True)
class CandidateScore:
    norad_id: int
    name: str
    score_deg: float
    mean_elevation_deg: float


@dataclass(frozen=True)
class MatchResult:
    norad_id: int | None
    name: str
    score_deg: float | None
    reason: str = ""
    ranking: tuple[CandidateScore, ...] = ()

    @property
    def identified(self) -> bool:
        return self.norad_id is not None


def _site_at(observers: _Track, t: float, fallback_times: Sequence[float]):
    site = observers.at(t)
    if site is None:
        for ft in sorted(fallback_times, key=lambda x: abs(x - t)):
            site = observers.at(ft)
            if site is not None:
                break
    return site


def candidate_directions(
    tles: Sequence[TleRecord], times: Sequence[float], observers: _Track
) -> np.ndarray:
    """Unit NED vectors ``(n_sat, n_time, 3)`` from the (moving) observer; NaN on failure."""
    sites = [observers.at(t) for t in times]
    if any(s is None for s in sites):
        raise ValueError("observer position unavailable at a sample time")
    pos = propagate_many(tles, times)
    return topocentric_ned_track(sites, pos)


def match_segment(
    obs: TrajectoryObservation,
    observers,
    attitudes,
    catalog: Sequence[TleRecord],
    fov: FovModel,
    tau_match_deg: float = DEFAULT_TAU_MATCH_DEG,
    elevation_mask_deg: float = DEFAULT_ELEVATION_MASK_DEG,
) -> MatchResult:
    """Score every visible candidate by mean angular separation from the observed samples."""
    if not obs.samples:
        raise ValueError("observation has no samples")
    observers, attitudes = as_track(observers), as_track(attitudes)
    times = [s.timestamp for s in obs.samples]
    t_mid = obs.mid_time
    site = _site_at(observers, t_mid, times)
    att = _site_at(attitudes, t_mid, times)
    if site is None or att is None:
        raise ValueError("no observer position or attitude near the trajectory")
    cands = visible_catalog(t_mid, site, att, fov, catalog, elevation_mask_deg)
    if not cands:
        return MatchResult(None, "", None, NO_CANDIDATES)
    tles = [c[0] for c in cands]
    ned = candidate_directions(tles, times, observers)
    observed = np.array([s.direction.unit_ned() for s in obs.samples])
    with np.errstate(invalid="ignore"):
        sep = separation_ned(ned, observed[None, :, :])
    scores = np.where(np.isnan(sep).any(axis=1), np.inf, np.nanmean(np.where(np.isnan(sep), 0.0, sep), axis=1))
    _, el = ned_to_az_el(np.where(np.isnan(ned), 1.0, ned))
    mean_el = el.mean(axis=1)
    ranking = sorted(
        (CandidateScore(t.norad_id, t.name, float(s), float(e)) for t, s, e in zip(tles, scores, mean_el)),
        key=lambda c: (round(c.score_deg, 9), -c.mean_elevation_deg, c.norad_id),
    )
    best = ranking[0]
    if best.score_deg > tau_match_deg:
        return MatchResult(None, "", best.score_deg, ABOVE_THRESHOLD, tuple(ranking))
    return MatchResult(best.norad_id, best.name, best.score_deg, "", tuple(ranking))


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class IdentificationInterval:
    slot_start: float
    t_from: float
    t_to: float
    norad_id: int | None
    satellite_name: str
    score_deg: float | None
    n_samples: int
    switch_flag: bool
    reason: str = ""
    observation: TrajectoryObservation | None = field(default=None, repr=False, compare=False)

    @property
    def identified(self) -> bool:
        return self.norad_id is not None


@dataclass(frozen=True)
class IdentificationResult:
    timeslot: Timeslot
    intervals: tuple[IdentificationInterval, ...]


@dataclass(frozen=True)
class BeamSwitchEvent:
    timestamp: float
    from_norad: int | None
    to_norad: int | None
    within_slot: bool
    corroborating_outage: OutageEvent | None = None


@dataclass(frozen=True)
class Handover:
    timestamp: float
    from_norad: int | None
    to_norad: int | None


@dataclass
class IdentConfig:
    tau_obs: float = DEFAULT_OBSTRUCTION_THRESHOLD
    tau_match_deg: float = DEFAULT_TAU_MATCH_DEG
    elevation_mask_deg: float = DEFAULT_ELEVATION_MASK_DEG
    hardware_model: str | None = None
    track_gate_px: float = TRACK_GATE_PX
    reset_guard_px: int = RESET_GUARD_PX
    max_gap_s: float = MAX_TELEMETRY_GAP_S
    slot_guard_s: float = SLOT_GUARD_S
    outage_window_s: float = OUTAGE_WINDOW_S

    def __post_init__(self) -> None:
        if not 0.0 < self.tau_obs < 1.0:
            raise ValueError(f"tau_obs must be in (0, 1), got {self.tau_obs}")
        if self.tau_match_deg <= 0.0:
            raise ValueError(f"tau_match must be positive, got {self.tau_match_deg}")
        if not -90.0 <= self.elevation_mask_deg < 90.0:
            raise ValueError(f"elevation mask must be in [-90, 90), got {self.elevation_mask_deg}")


@dataclass
class IdentifyReport:
    results: list[IdentificationResult] = field(default_factory=list)
    switches: list[BeamSwitchEvent] = field(default_factory=list)
    handovers: list[Handover] = field(default_factory=list)
    stream: DiffStream = field(default_factory=DiffStream)
    hardware_model: str | None = None
    geom: MapGeometry | None = None

    @property
    def intervals(self) -> list[IdentificationInterval]:
        return [iv for r in self.results for iv in r.intervals]

    @property
    def unidentified_rate(self) -> float:
        ivs = self.intervals
        return sum(not iv.identified for iv in ivs) / len(ivs) if ivs else 0.0


def resolve_hardware(statuses: Sequence[UtStatusRecord], override: str | None) -> str:
    if override:
        return override
    for s in statuses:
        if s.hardware_model:
            return s.hardware_model
    raise ValueError("no hardware model given and none found in the status stream")


def corroborating_outage(
    t: float, outages: Sequence[OutageEvent], window_s: float = OUTAGE_WINDOW_S, after_s: float = SLOT_GUARD_S
) -> OutageEvent | None:
    hits = [o for o in outages if o.start_s <= t + after_s and o.end_s >= t - window_s]
    if not hits:
        return None
    return min(hits, key=lambda o: (not o.did_switch, abs(o.end_s - t), o.start_ns))


def identify(
    frames: Sequence[ObstructionFrame],
    statuses: Sequence[UtStatusRecord],
    locations: Sequence[UtLocationRecord],
    catalog: Sequence[TleRecord],
    config: IdentConfig | None = None,
    outages: Sequence[OutageEvent] = (),
    debug_dir: str | Path | None = None,
) -> IdentifyReport:
    cfg = config or IdentConfig()
    report = IdentifyReport()
    if not frames:
        return report
    model = resolve_hardware(statuses, cfg.hardware_model)
    fov = fov_for(model)
    geom = MapGeometry.for_fov(fov)
    report.hardware_model, report.geom = model, geom
    attitudes = AttitudeTrack(statuses, cfg.max_gap_s)
    observers = LocationTrack(locations, cfg.max_gap_s)
    stream = earth_diffs(frames, attitudes, observers, geom, cfg.tau_obs, cfg.reset_guard_px, debug_dir)
    report.stream = stream
    slots, by_slot = build_trajectories(stream, geom, cfg.track_gate_px, cfg.slot_guard_s)
    span_lo, span_hi = stream.span

    outages = sorted(outages, key=lambda o: o.start_ns)
    prev_norad: int | None = None
    prev_slot: float | None = None
    for start in slots:
        slot = Timeslot(start, start + SLOT_LENGTH_S)
        lo, hi = max(slot.start, span_lo), min(slot.end, span_hi)
        ordered = _order_slot(by_slot.get(start, []))
        intervals: list[IdentificationInterval] = []
        if not ordered:
            intervals.append(IdentificationInterval(start, lo, hi, None, "", None, 0, False, NO_TRAJECTORY))
        bounds = [lo] + [min(max(tr.start, lo), hi) for tr in ordered[1:]] + [hi]
        for i, tr in enumerate(ordered):
            bounds[i + 1] = max(bounds[i + 1], bounds[i])
            m = match_segment(tr.obs, observers, attitudes, catalog, fov, cfg.tau_match_deg, cfg.elevation_mask_deg)
            intervals.append(
                IdentificationInterval(
                    start, bounds[i], bounds[i + 1], m.norad_id, m.name, m.score_deg,
                    len(tr.obs.samples), i > 0, m.reason, tr.obs,
                )
            )
        for i, iv in enumerate(intervals):
            if iv.observation is None:
                continue
            if i == 0:
                if prev_slot is not None and prev_slot == start - SLOT_LENGTH_S:
                    report.handovers.append(Handover(start, prev_norad, iv.norad_id))
            else:
                t = iv.t_from
                within = t - slot.start >= cfg.slot_guard_s and slot.end - t >= cfg.slot_guard_s
                report.switches.append(
                    BeamSwitchEvent(
                        t, intervals[i - 1].norad_id, iv.norad_id, within,
                        corroborating_outage(t, outages, cfg.outage_window_s, cfg.slot_guard_s),
                    )
                )
        prev_norad, prev_slot = intervals[-1].norad_id, start
        report.results.append(IdentificationResult(slot, tuple(intervals)))
    return report


# ---------------------------------------------------------------- validation


def reconstruct_samples(
    tle: TleRecord,
    t_from: float,
    t_to: float,
    observers,
    geom: MapGeometry,
    cadence_s: float = 0.5,
    frame_type: FrameType = FrameType.FRAME_EARTH,
    attitudes=None,
) -> list[tuple[float, tuple[int, int]]]:
    """The satellite's projected pixel at every cadence tick in ``[t_from, t_to)``.

    Samples falling outside the disc are dropped.
    """
    observers = as_track(observers)
    n = max(1, math.ceil((t_to - t_from) / cadence_s - 1e-9))
    times = [t_from + k * cadence_s for k in range(n)]
    times = [t for t in times if observers.at(t) is not None]
    if not times:
        return []
    pos = propagate_many([tle], times)
    if np.isnan(pos).any():
        raise PropagationError(f"{tle.name} ({tle.norad_id}) could not be propagated over [{t_from}, {t_to})")
    ned = topocentric_ned_track([observers.at(t) for t in times], pos)[0]
    out = []
    for t, v in zip(times, ned):
        att = None
        if frame_type is FrameType.FRAME_UT:
            att = as_track(attitudes).at(t)
            if att is None:
                continue
        px, ok = ned_to_pixels(v[None, :], frame_type, att, geom)
        if ok[0]:
            out.append((t, (int(px[0, 0]), int(px[0, 1]))))
    return out


def _lookup(catalog: Sequence[TleRecord], norad_id: int) -> TleRecord:
    for tle in catalog:
        if tle.norad_id == norad_id:
            return tle
    raise KeyError(f"NORAD {norad_id} is not in the catalog")


def reconstruct_map(
    norad_id: int,
    interval: tuple[float, float],
    observers,
    attitudes,
    catalog: Sequence[TleRecord],
    geom: MapGeometry,
    cadence_s: float = 0.5,
    frame_type: FrameType = FrameType.FRAME_EARTH,
) -> BinaryFrame:
    samples = reconstruct_samples(
        _lookup(catalog, norad_id), interval[0], interval[1], observers, geom, cadence_s, frame_type, attitudes
    )
    mask = np.zeros((geom.grid_size, geom.grid_size), dtype=bool)
    for _, (r, c) in samples:
        mask[r, c] = True
    return BinaryFrame(interval[1], mask, np.zeros_like(mask), frame_type)


def mean_pixel_distance(samples: Sequence[tuple[int, int]], observed: Iterable[tuple[int, int]]) -> tuple[float, float]:
    """Mean and max distance from each reconstructed sample to its nearest observed pixel."""
    obs = np.array(sorted(set(observed)), dtype=float).reshape(-1, 2)
    if not len(samples) or not len(obs):
        return math.nan, math.nan
    s = np.asarray(samples, dtype=float)
    d = np.sqrt(((s[:, None, :] - obs[None, :, :]) ** 2).sum(axis=-1)).min(axis=1)
    return float(d.mean()), float(d.max())


def window_observations(
    stream: DiffStream, intervals: Sequence[IdentificationInterval], geom: MapGeometry
) -> list[tuple[TrajectoryObservation | None, set[tuple[int, int]]]]:
    """Observed samples and pixels for each interval, taken from the diffs it spans.

    Independent of the trajectory tracker: every changed pixel of a diff whose
    midpoint falls in ``[t_from, t_to)`` belongs to the interval, and the largest
    segment of each diff provides the direction sample.
    """
    out = []
    diffs = [pd for pd in stream.diffs if pd.segments]
    mids = np.array([pd.t_mid for pd in diffs])
    for iv in intervals:
        sel = [diffs[i] for i in np.flatnonzero((mids >= iv.t_from) & (mids < iv.t_to))] if len(mids) else []
        pixels = {p for pd in sel for s in pd.segments for p in s.pixels}
        samples = []
        last_seg = None
        for pd in sel:
            seg = max(pd.segments, key=lambda s: (s.size, -s.label))
            last_seg = seg
            samples.append(
                ObservedSample(pd.t_mid, seg.midpoint, pixel_to_direction(seg.midpoint, FrameType.FRAME_EARTH, None, geom))
            )
        out.append((TrajectoryObservation(last_seg, samples) if samples else None, pixels))
    return out


def sample_separations(
    interval: IdentificationInterval, observation: TrajectoryObservation | None, observers, catalog: Sequence[TleRecord]
) -> np.ndarray:
    if not interval.identified or observation is None or not observation.samples:
        return np.empty(0)
    times = [s.timestamp for s in observation.samples]
    ned = candidate_directions([_lookup(catalog, interval.norad_id)], times, as_track(observers))[0]
    observed = np.array([s.direction.unit_ned() for s in observation.samples])
    return np.asarray(separation_ned(ned, observed), dtype=float)


def separation_stats(
    intervals: Sequence[IdentificationInterval],
    observations: Sequence[TrajectoryObservation | None],
    observers,
    catalog: Sequence[TleRecord],
) -> tuple[float, float]:
    """Mean and population standard deviation of per-sample separation in degrees."""
    if not intervals:
        raise ValueError("separation_stats needs at least one interval")
    seps = [sample_separations(iv, ob, observers, catalog) for iv, ob in zip(intervals, observations)]
    allsep = np.concatenate(seps) if seps else np.empty(0)
    if not allsep.size:
        return math.nan, math.nan
    return float(allsep.mean()), float(allsep.std())


@dataclass(frozen=True)
class IntervalValidation:
    slot_start: float
    t_from: float
    t_to: float
    norad_id: int
    n_samples: int
    mean_px: float
    max_px: float
    mean_separation_deg: float
    flagged: bool


def validate_intervals(
    intervals: Sequence[IdentificationInterval],
    stream: DiffStream,
    observers,
    catalog: Sequence[TleRecord],
    geom: MapGeometry,
    cadence_s: float = 0.5,
    flag_px: float = PIXEL_DIFF_FLAG_PX,
) -> tuple[list[IntervalValidation], tuple[float, float]]:
    """Compare each identified interval with its reconstructed trajectory.

    Returns per-interval rows and the pooled separation statistics.
    """
    identified = [iv for iv in intervals if iv.identified]
    windows = window_observations(stream, identified, geom)
    rows: list[IntervalValidation] = []
    seps: list[np.ndarray] = []
    for iv, (obs, pixels) in zip(identified, windows):
        if obs is None:
            continue
        recon = reconstruct_samples(_lookup(catalog, iv.norad_id), iv.t_from, iv.t_to, observers, geom, cadence_s)
        mean_px, max_px = mean_pixel_distance([p for _, p in recon], pixels)
        sep = sample_separations(iv, obs, observers, catalog)
        seps.append(sep)
        rows.append(
            IntervalValidation(
                iv.slot_start, iv.t_from, iv.t_to, iv.norad_id, len(obs.samples), mean_px, max_px,
                float(sep.mean()) if sep.size else math.nan,
                bool(not math.isnan(mean_px) and mean_px > flag_px),
            )
        )
    pooled = np.concatenate(seps) if seps else np.empty(0)
    stats = (float(pooled.mean()), float(pooled.std())) if pooled.size else (math.nan, math.nan)
    return rows, stats


# ---------------------------------------------------------------- record streams

IDENTIFICATION_COLUMNS = (
    "slot_start", "t_from", "t_to", "norad_id", "satellite_name", "score_deg", "n_samples", "switch_flag",
)
SWITCH_COLUMNS = (
    "timestamp", "from_norad", "to_norad", "within_slot",
    "outage_start_ns", "outage_duration_ns", "outage_cause", "outage_did_switch",
)
HANDOVER_COLUMNS = ("timestamp", "from_norad", "to_norad")


def _t(x: float) -> str:
    return f"{x:.3f}"


def _id(n: int | None) -> str:
    return UNIDENTIFIED if n is None else str(n)


def _parse_id(text: str) -> int | None:
    return None if text in ("", UNIDENTIFIED) else int(text)


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes")


def write_identification(path: str | Path, intervals: Iterable[IdentificationInterval]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IDENTIFICATION_COLUMNS)
        for iv in intervals:
            w.writerow([
                _t(iv.slot_start), _t(iv.t_from), _t(iv.t_to), _id(iv.norad_id), iv.satellite_name,
                "" if iv.score_deg is None or not math.isfinite(iv.score_deg) else f"{iv.score_deg:.4f}",
                iv.n_samples, str(iv.switch_flag).lower(),
            ])


def read_identification(path: str | Path) -> list[IdentificationInterval]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != IDENTIFICATION_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            out.append(
                IdentificationInterval(
                    float(row["slot_start"]), float(row["t_from"]), float(row["t_to"]), _parse_id(row["norad_id"]),
                    row["satellite_name"], float(row["score_deg"]) if row["score_deg"] else None,
                    int(row["n_samples"]), _bool(row["switch_flag"]),
                )
            )
    return out


def write_switches(path: str | Path, events: Iterable[BeamSwitchEvent]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWITCH_COLUMNS)
        for ev in events:
            o = ev.corroborating_outage
            w.writerow([
                _t(ev.timestamp), _id(ev.from_norad), _id(ev.to_norad), str(ev.within_slot).lower(),
                "" if o is None else o.start_ns, "" if o is None else o.duration_ns,
                "" if o is None else o.cause.value, "" if o is None else str(o.did_switch).lower(),
            ])


def read_switches(path: str | Path) -> list[BeamSwitchEvent]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWITCH_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            outage = None
            if row["outage_start_ns"]:
                outage = OutageEvent(
                    int(row["outage_start_ns"]), int(row["outage_duration_ns"]),
                    EventReason.parse(row["outage_cause"]), _bool(row["outage_did_switch"]),
                )
            out.append(
                BeamSwitchEvent(
                    float(row["timestamp"]), _parse_id(row["from_norad"]), _parse_id(row["to_norad"]),
                    _bool(row["within_slot"]), outage,
                )
            )
    return out


def write_handovers(path: str | Path, handovers: Iterable[Handover]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HANDOVER_COLUMNS)
        for h in handovers:
            w.writerow([_t(h.timestamp), _id(h.from_norad), _id(h.to_norad)])
