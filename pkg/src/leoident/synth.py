"""Synthetic ground-truth scenarios.

A scenario is a generated constellation, a scripted UT path and a connection
schedule. Rendering it produces the same record streams a field capture would,
so the identification pipeline can be checked end to end against the schedule.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sgp4.propagation import gstime

from leoident.errors import InfeasibleScenarioError
from leoident.geometry import (
    DEFAULT_ELEVATION_MASK_DEG,
    MapGeometry,
    Site,
    fov_for,
    ned_to_az_el,
    ned_to_pixels,
    propagate_many,
    separation_ned,
    topocentric_ned_track,
    unix_to_jd,
)
from leoident.ident import SLOT_LENGTH_S, IdentificationResult, timeslot_of
from leoident.ingest import (
    GRID_SIZE,
    UNKNOWN_CELL,
    Direction,
    EventReason,
    FrameType,
    LocationSource,
    ObstructionFrame,
    OutageEvent,
    PingSample,
    ThroughputSample,
    TleRecord,
    UtLocationRecord,
    UtStatusRecord,
    format_tle,
    write_location_log,
    write_obstruction_frames,
    write_outage_log,
    write_ping_log,
    write_status_log,
    write_throughput_log,
    write_tle_catalog,
)
from leoident.orientation import Attitude, pose_quaternion, wrap360

EARTH_RADIUS_KM = 6378.137
MU_KM3_S2 = 398600.4418
BASE_UNIX = 1717200000  # 2024-06-01T00:00:00Z
EXPLORED_VALUE = 0.9
RED_VALUE = 0.2
NORAD_BASE = 70000


@dataclass
class SynthConfig:
    n_satellites: int = 60
    altitude_km: float = 550.0
    inclination_deg: float = 53.0
    n_dtc: int = 2
    n_slots: int = 3
    hardware_model: str = "hp1_proto2"
    tilt_deg: float = 7.9
    motion: str = "mixed"  # stationary, turning or mixed
    turn_rate_deg_s: float = 6.0
    turn_angle_deg: float | None = None
    turn_start_s: float | None = None
    speed_mps: float = 15.0
    switch_density: float = 0.6  # expected mid-slot switches per slot, capped at two
    frame_cadence_s: float = 0.5
    substeps: int = 5
    frame_type: str = "FRAME_UT"
    red_pixels: bool = False
    elevation_mask_deg: float = DEFAULT_ELEVATION_MASK_DEG
    fov_margin_deg: float = 3.0
    min_separation_deg: float = 5.0
    separation_margin_deg: float = 1.0
    tip_clearance_px: float = 10.0
    path_clearance_px: float = 4.0
    min_candidates: int = 3
    latitude_range: tuple[float, float] = (25.0, 42.0)
    longitude_range: tuple[float, float] = (-125.0, -70.0)
    placement_radius_km: float = 1300.0
    start_unix: float | None = None
    max_attempts: int = 20
    ping_interval_ms: float = 10.0

    def __post_init__(self) -> None:
        if self.motion not in ("stationary", "turning", "mixed"):
            raise ValueError(f"motion must be stationary, turning or mixed, got {self.motion!r}")
        if self.n_slots < 1:
            raise ValueError("a scenario needs at least one slot")
        if self.n_satellites < 1:
            raise ValueError("a scenario needs at least one satellite")
        step_ms = self.frame_cadence_s * 1000.0 / self.substeps
        if step_ms != round(step_ms) or step_ms <= 0:
            raise ValueError("frame cadence must split into whole-millisecond substeps")
        FrameType(self.frame_type)
        self.latitude_range = tuple(self.latitude_range)
        self.longitude_range = tuple(self.longitude_range)


@dataclass(frozen=True)
class SwitchSpec:
    """A scripted mid-slot switch, ``t_rel`` seconds into its slot.

    The connection is lost for ``outage_s`` seconds before the switch; with
    ``red_pixel`` the pixel under the old satellite is marked obstructed when
    the loss begins.
    """

    t_rel: float
    outage_s: float = 0.0
    red_pixel: bool = False


@dataclass(frozen=True)
class ScheduleEntry:
    t_from: float
    t_to: float
    norad_id: int
    slot_start: float
    switch: bool


@dataclass(frozen=True)
class ScriptedObstruction:
    start: float
    duration: float
    red_pixel: bool = False


@dataclass(frozen=True)
class UtPath:
    """Vehicle path: straight driving with at most one constant-rate turn."""

    t0: float
    latitude: float
    longitude: float
    altitude_m: float
    heading0_deg: float
    mount_offset_deg: float
    tilt_deg: float
    speed_mps: float
    turn_start: float  # seconds after t0
    turn_end: float
    turn_rate_deg_s: float

    def vehicle_heading(self, t: float) -> float:
        dt = min(max(t - self.t0 - self.turn_start, 0.0), self.turn_end - self.turn_start)
        return self.heading0_deg + self.turn_rate_deg_s * dt

    def pose_heading(self, t: float) -> float:
        return wrap360(self.vehicle_heading(t) + self.mount_offset_deg)

    def attitude(self, t: float) -> Attitude:
        return Attitude.from_pose(self.pose_heading(t), self.tilt_deg)

    def _displacement(self, t: float) -> tuple[float, float]:
        s = t - self.t0
        h0 = math.radians(self.heading0_deg)
        a = min(max(s, 0.0), self.turn_start)
        north, east = a * math.cos(h0), a * math.sin(h0)
        if s > self.turn_start and self.turn_end > self.turn_start:
            w = math.radians(self.turn_rate_deg_s)
            dur = min(s, self.turn_end) - self.turn_start
            h1 = h0 + w * dur
            if abs(w) < 1e-12:
                north += dur * math.cos(h0)
                east += dur * math.sin(h0)
            else:
                north += (math.sin(h1) - math.sin(h0)) / w
                east += (math.cos(h0) - math.cos(h1)) / w
        if s > self.turn_end:
            h2 = math.radians(self.vehicle_heading(t))
            rest = s - max(self.turn_end, self.turn_start)
            north += rest * math.cos(h2)
            east += rest * math.sin(h2)
        return north * self.speed_mps, east * self.speed_mps

    def location(self, t: float) -> Site:
        north, east = self._displacement(t)
        r = EARTH_RADIUS_KM * 1000.0
        lat = self.latitude + math.degrees(north / r)
        lon = self.longitude + math.degrees(east / (r * math.cos(math.radians(self.latitude))))
        return Site(lat, lon, self.altitude_m)


@dataclass
class SyntheticScenario:
    seed: int
    config: SynthConfig
    catalog: list[TleRecord]
    ut_path: UtPath
    schedule: list[ScheduleEntry]
    obstruction_script: list[ScriptedObstruction]
    t_start: float
    t_end: float
    attempt: int = 0

    @property
    def frame_cadence_s(self) -> float:
        return self.config.frame_cadence_s

    @property
    def slots(self) -> list[float]:
        return sorted({e.slot_start for e in self.schedule})

    def satellite_at(self, t: float) -> int | None:
        """Scheduled satellite accruing pixels at ``t`` (intervals closed on the right)."""
        for e in self.schedule:
            if e.t_from < t <= e.t_to:
                return e.norad_id
        return None

    def obstructed_at(self, t: float) -> bool:
        return any(o.start < t <= o.start + o.duration for o in self.obstruction_script)

    def switch_counts(self) -> dict[float, int]:
        out = {s: 0 for s in self.slots}
        for e in self.schedule:
            out[e.slot_start] += int(e.switch)
        return out


@dataclass
class RenderedScenario:
    frames: list[ObstructionFrame]
    statuses: list[UtStatusRecord]
    locations: list[UtLocationRecord]
    outages: list[OutageEvent]
    pings: list[PingSample] = field(default_factory=list)
    throughput: list[ThroughputSample] = field(default_factory=list)


class _Retry(Exception):
    pass


# ---------------------------------------------------------------- constellation


def mean_motion_rev_day(altitude_km: float) -> float:
    a = EARTH_RADIUS_KM + altitude_km
    return math.sqrt(MU_KM3_S2 / a**3) * 86400.0 / (2.0 * math.pi)


def _destination(lat: float, lon: float, bearing_deg: float, dist_km: float) -> tuple[float, float]:
    p1, l1 = math.radians(lat), math.radians(lon)
    b, d = math.radians(bearing_deg), dist_km / EARTH_RADIUS_KM
    p2 = math.asin(math.sin(p1) * math.cos(d) + math.cos(p1) * math.sin(d) * math.cos(b))
    l2 = l1 + math.atan2(math.sin(b) * math.sin(d) * math.cos(p1), math.cos(d) - math.sin(p1) * math.sin(p2))
    return math.degrees(p2), (math.degrees(l2) + 180.0) % 360.0 - 180.0


def place_satellite(
    name: str, norad_id: int, epoch: float, sub_lat: float, sub_lon: float, ascending: bool,
    altitude_km: float, inclination_deg: float,
) -> TleRecord:
    """Circular-orbit elements whose sub-satellite point is ``(sub_lat, sub_lon)`` at ``epoch``."""
    inc = math.radians(inclination_deg)
    su = math.sin(math.radians(sub_lat)) / math.sin(inc)
    if abs(su) > 1.0:
        raise ValueError(f"latitude {sub_lat} unreachable at inclination {inclination_deg}")
    u = math.asin(su)
    if not ascending:
        u = math.pi - u
    dlam = math.atan2(math.cos(inc) * math.sin(u), math.cos(u))
    jd, fr = unix_to_jd(epoch)
    gmst = gstime(float(jd) + float(fr))
    raan = math.degrees(math.radians(sub_lon) + gmst - dlam)
    return format_tle(
        name, norad_id, epoch, inclination_deg, raan, 0.0, 0.0, math.degrees(u), mean_motion_rev_day(altitude_km)
    )


def generate_constellation(
    rng: np.random.Generator, site: Site, epoch: float, cfg: SynthConfig
) -> list[TleRecord]:
    out = []
    limit = cfg.inclination_deg - 0.5
    for i in range(cfg.n_satellites + cfg.n_dtc):
        while True:
            dist = cfg.placement_radius_km * math.sqrt(rng.random())
            lat, lon = _destination(site.latitude, site.longitude, rng.uniform(0.0, 360.0), dist)
            ascending = bool(rng.random() < 0.5)
            if abs(lat) < limit:
                break
        norad = NORAD_BASE + i
        name = f"STARLINK-{norad}" if i < cfg.n_satellites else f"STARLINK-DTC-{norad}"
        out.append(place_satellite(name, norad, epoch, lat, lon, ascending, cfg.altitude_km, cfg.inclination_deg))
    return out


# ---------------------------------------------------------------- scheduling


def _random_switches(rng: np.random.Generator, cfg: SynthConfig) -> list[SwitchSpec]:
    p = min(max(cfg.switch_density, 0.0) / 2.0, 1.0)
    k = int(rng.binomial(2, p))
    if k == 0:
        return []
    if k == 1:
        times = [rng.uniform(3.0, 11.0)]
    else:
        t1 = rng.uniform(3.0, 8.0)
        times = [t1, rng.uniform(t1 + 3.0, 11.0)]
    return [
        SwitchSpec(round(t, 2), round(float(rng.uniform(0.4, 1.5)), 2), cfg.red_pixels)
        for t in times
    ]


@dataclass
class _Sky:
    times: np.ndarray  # substep times, index 0 = t0
    ned: np.ndarray  # (n_sat, n_t, 3)
    elevation: np.ndarray  # (n_sat, n_t)
    boresight_sep: np.ndarray  # (n_sat, n_t)
    earth_px: np.ndarray  # (n_sat, n_t, 2)
    earth_ok: np.ndarray  # (n_sat, n_t)


def _substep_times(t0: float, t_end: float, cfg: SynthConfig) -> np.ndarray:
    step_ms = int(round(cfg.frame_cadence_s * 1000.0 / cfg.substeps))
    n = int(round((t_end - t0) * 1000.0)) // step_ms
    return np.array([t0 + (j * step_ms) / 1000.0 for j in range(n + 1)])


def _sky(catalog: Sequence[TleRecord], path: UtPath, times: np.ndarray, geom: MapGeometry) -> _Sky:
    pos = propagate_many(catalog, times)
    ned = topocentric_ned_track([path.location(t) for t in times], pos)
    _, el = ned_to_az_el(ned)
    bores = np.array([path.attitude(t).boresight_ned() for t in times])
    sep = separation_ned(ned, bores[None, :, :])
    px, ok = ned_to_pixels(ned.reshape(-1, 3), FrameType.FRAME_EARTH, None, geom)
    n_sat, n_t = el.shape
    return _Sky(times, ned, el, sep, px.reshape(n_sat, n_t, 2), ok.reshape(n_sat, n_t))


def _build_schedule(
    rng: np.random.Generator,
    sky: _Sky,
    catalog: Sequence[TleRecord],
    cfg: SynthConfig,
    t0: float,
    switches: dict[int, list[SwitchSpec]],
) -> tuple[list[ScheduleEntry], list[ScriptedObstruction]]:
    half = fov_for(cfg.hardware_model).half_angle_deg
    in_fov = (sky.elevation >= cfg.elevation_mask_deg + cfg.fov_margin_deg) & (
        sky.boresight_sep <= half - cfg.fov_margin_deg
    )
    loose = (sky.elevation >= cfg.elevation_mask_deg - cfg.fov_margin_deg) & (
        sky.boresight_sep <= half + cfg.fov_margin_deg
    )
    broadband = np.array([not t.is_dtc for t in catalog])
    visible_count = (in_fov & broadband[:, None]).sum(axis=0)
    if (visible_count == 0).any():
        j = int(np.argmax(visible_count == 0))
        raise _Retry(f"no satellite in the field of view at t0+{sky.times[j] - t0:.1f}s")

    pieces: list[tuple[float, float, float, bool, SwitchSpec | None]] = []
    obstructions: list[ScriptedObstruction] = []
    for s in range(cfg.n_slots):
        slot_start = t0 + s * SLOT_LENGTH_S
        specs = sorted(switches.get(s, []), key=lambda sp: sp.t_rel)
        edges = [slot_start] + [slot_start + sp.t_rel for sp in specs] + [slot_start + SLOT_LENGTH_S]
        for k in range(len(edges) - 1):
            spec = specs[k - 1] if k > 0 else None
            pieces.append((edges[k], edges[k + 1], slot_start, k > 0, spec))
            if spec is not None and spec.outage_s > 0:
                obstructions.append(ScriptedObstruction(edges[k] - spec.outage_s, spec.outage_s, spec.red_pixel))

    def suppressed(t: float) -> bool:
        return any(o.start < t <= o.start + o.duration for o in obstructions)

    lit = np.zeros((GRID_SIZE, GRID_SIZE), dtype=bool)
    used: set[int] = set()
    history: list[tuple[float, np.ndarray]] = []  # (slot_start, tip pixel) of earlier pieces
    entries: list[ScheduleEntry] = []
    for t_from, t_to, slot_start, is_switch, _spec in pieces:
        span = np.flatnonzero((sky.times >= t_from) & (sky.times <= t_to))
        accrue = [j for j in span if sky.times[j] > t_from and not suppressed(sky.times[j])]
        need = 1 if t_to - t_from < 2.0 else 2
        tips = [p for ss, p in history if ss >= slot_start - SLOT_LENGTH_S]
        mid = span[len(span) // 2]
        feasible = []
        for i, tle in enumerate(catalog):
            if tle.is_dtc or tle.norad_id in used:
                continue
            if not in_fov[i, span].all() or not sky.earth_ok[i, accrue].all():
                continue
            others = np.flatnonzero(broadband & loose[:, mid])
            others = others[others != i]
            if int((in_fov[:, mid] & broadband).sum()) < cfg.min_candidates:
                continue
            if len(others):
                seps = separation_ned(sky.ned[others][:, span], sky.ned[i, span][None])
                if seps.min() < cfg.min_separation_deg + cfg.separation_margin_deg:
                    continue
            if not accrue:
                continue
            px = sky.earth_px[i, accrue]
            fresh = [tuple(p) for p in px if not lit[p[0], p[1]]]
            if lit[px[0, 0], px[0, 1]] or len(set(fresh)) < need:
                continue
            if tips:
                tip_arr = np.array(tips, dtype=float)
                d_first = np.hypot(*(tip_arr - px[0]).T).min()
                d_all = np.sqrt(((px[:, None, :] - tip_arr[None]) ** 2).sum(-1)).min()
                if d_first < cfg.tip_clearance_px or d_all < cfg.path_clearance_px:
                    continue
            feasible.append(i)
        if not feasible:
            raise _Retry(
                f"no feasible satellite for [t0+{t_from - t0:.2f}s, t0+{t_to - t0:.2f}s): "
                "every candidate leaves the field of view, sits too close to another satellite "
                "or to an earlier trajectory"
            )
        i = int(feasible[int(rng.integers(len(feasible)))])
        used.add(catalog[i].norad_id)
        px = sky.earth_px[i, accrue]
        lit[px[:, 0], px[:, 1]] = True
        history.append((slot_start, px[-1].astype(float)))
        entries.append(ScheduleEntry(t_from, t_to, catalog[i].norad_id, slot_start, is_switch))
    return entries, obstructions


def _make_path(rng: np.random.Generator, cfg: SynthConfig, t0: float, span_s: float) -> UtPath:
    lat = rng.uniform(*cfg.latitude_range)
    lon = rng.uniform(*cfg.longitude_range)
    heading0 = float(rng.uniform(0.0, 360.0))
    mount = float(rng.uniform(0.0, 360.0))
    turning = cfg.motion == "turning" or (cfg.motion == "mixed" and rng.random() < 0.5)
    if not turning:
        return UtPath(t0, lat, lon, 0.0, heading0, mount, cfg.tilt_deg, 0.0, span_s, span_s, 0.0)
    angle = cfg.turn_angle_deg if cfg.turn_angle_deg is not None else float(rng.uniform(45.0, 180.0))
    duration = max(1, round(angle / max(abs(cfg.turn_rate_deg_s), 1e-9)))
    duration = min(duration, max(1, int(span_s) - 2))
    if cfg.turn_start_s is not None:
        start = float(cfg.turn_start_s)
    else:
        start = float(rng.integers(1, max(2, int(span_s) - duration)))
    sign = 1.0 if rng.random() < 0.5 else -1.0
    rate = sign * angle / duration
    return UtPath(t0, lat, lon, 0.0, heading0, mount, cfg.tilt_deg, cfg.speed_mps, start, start + duration, rate)


def generate_scenario(
    seed: int, config: SynthConfig | None = None, script: dict[int, list[SwitchSpec]] | None = None
) -> SyntheticScenario:
    """Deterministic scenario for ``seed``.

    ``script`` fixes the mid-slot switches per slot index; otherwise they are
    drawn from the configured density. Each attempt redraws the constellation
    and path; after ``max_attempts`` failures the last reason is raised.
    """
    cfg = config or SynthConfig()
    reason = "no attempt made"
    for attempt in range(cfg.max_attempts):
        rng = np.random.default_rng([seed, attempt])
        try:
            return _attempt(seed, attempt, rng, cfg, script)
        except _Retry as exc:
            reason = str(exc)
    raise InfeasibleScenarioError(f"seed {seed}: {reason}")


def _attempt(seed, attempt, rng, cfg: SynthConfig, script) -> SyntheticScenario:
    if cfg.start_unix is not None:
        t0 = float(cfg.start_unix)
        if timeslot_of(t0).start != t0:
            raise ValueError("start_unix must fall on a slot boundary")
    else:
        t0 = float(BASE_UNIX + 86400 * int(rng.integers(0, 30)) + 60 * int(rng.integers(0, 1440)) + 12)
    span = cfg.n_slots * SLOT_LENGTH_S
    t_end = t0 + span
    path = _make_path(rng, cfg, t0, span)
    epoch = t0 + span / 2.0
    catalog = generate_constellation(rng, path.location(epoch), epoch, cfg)
    if script is None:
        switches = {s: _random_switches(rng, cfg) for s in range(cfg.n_slots)}
    else:
        switches = {s: list(v) for s, v in script.items()}
    geom = MapGeometry.for_fov(fov_for(cfg.hardware_model))
    sky = _sky(catalog, path, _substep_times(t0, t_end, cfg), geom)
    schedule, obstructions = _build_schedule(rng, sky, catalog, cfg, t0, switches)
    return SyntheticScenario(seed, cfg, catalog, path, schedule, obstructions, t0, t_end, attempt)


def beam_switch_replay_scenario(seed: int = 0) -> SyntheticScenario:
    """Two slots re-creating the arc, double-switch, handover and late-switch sequence.

    Slot 0: the UT turns so the first trajectory draws an arc in the dish frame;
    after an outage a satellite connects for 0.2 s and is replaced by a third one
    within the same frame interval. Slot 1: a regular handover, then a switch
    announced by a single obstructed pixel.
    """
    cfg = SynthConfig(
        n_slots=2, motion="turning", turn_rate_deg_s=8.0, turn_angle_deg=96.0, turn_start_s=1.0, red_pixels=True
    )
    script = {
        0: [SwitchSpec(6.05, 0.6), SwitchSpec(6.25, 0.0)],
        1: [SwitchSpec(8.0, 0.7, red_pixel=True)],
    }
    return generate_scenario(seed, cfg, script)


# ---------------------------------------------------------------- rendering


def render(scenario: SyntheticScenario, ping_seed: int | None = None) -> RenderedScenario:
    cfg = scenario.config
    t0, t_end = scenario.t_start, scenario.t_end
    frame_type = FrameType(cfg.frame_type)
    geom = MapGeometry.for_fov(fov_for(cfg.hardware_model))
    path = scenario.ut_path
    times = _substep_times(t0, t_end, cfg)
    index = {t.norad_id: i for i, t in enumerate(scenario.catalog)}
    used = sorted({e.norad_id for e in scenario.schedule})
    tles = [scenario.catalog[index[n]] for n in used]
    ned = topocentric_ned_track([path.location(t) for t in times], propagate_many(tles, times))
    row = {n: k for k, n in enumerate(used)}
    red_at = {}
    for o in scenario.obstruction_script:
        if o.red_pixel:
            j = int(np.argmax(times > o.start))
            red_at[j] = o

    cells = np.full((GRID_SIZE, GRID_SIZE), UNKNOWN_CELL)
    frames = [ObstructionFrame(t0, frame_type, cells.copy())]
    for j in range(1, len(times)):
        t = float(times[j])
        norad = scenario.satellite_at(t)
        mark = None
        if norad is not None and not scenario.obstructed_at(t):
            mark = EXPLORED_VALUE
        elif norad is not None and j in red_at:
            mark = RED_VALUE
        if mark is not None:
            att = path.attitude(t) if frame_type is FrameType.FRAME_UT else None
            px, ok = ned_to_pixels(ned[row[norad], j][None, :], frame_type, att, geom)
            if ok[0]:
                r, c = int(px[0, 0]), int(px[0, 1])
                cells[r, c] = mark if mark == RED_VALUE or cells[r, c] == UNKNOWN_CELL else cells[r, c]
        if j % cfg.substeps == 0:
            frames.append(ObstructionFrame(t, frame_type, cells.copy()))

    rng = np.random.default_rng([scenario.seed, scenario.attempt, 1 if ping_seed is None else ping_seed])
    return RenderedScenario(
        frames,
        _statuses(scenario, geom),
        _locations(scenario),
        _outages(scenario),
        _pings(scenario, rng),
        _throughput(scenario, rng),
    )


def _switch_times(scenario: SyntheticScenario) -> list[tuple[float, float]]:
    return [(e.t_from, e.slot_start + SLOT_LENGTH_S) for e in scenario.schedule if e.switch]


def _degraded(scenario: SyntheticScenario, t: float) -> bool:
    return any(a <= t < b for a, b in _switch_times(scenario))


def _statuses(scenario: SyntheticScenario, geom: MapGeometry) -> list[UtStatusRecord]:
    cfg, path = scenario.config, scenario.ut_path
    out = []
    for k in range(int(round(scenario.t_end - scenario.t_start)) + 1):
        t = scenario.t_start + k
        q = pose_quaternion(path.pose_heading(t), path.tilt_deg)
        down = 0.0 if scenario.obstructed_at(t) else (60e6 if _degraded(scenario, t) else 120e6)
        out.append(
            UtStatusRecord(
                timestamp=t,
                hardware_model=cfg.hardware_model,
                pop_ping_latency_ms=30.0,
                downlink_bps=down,
                uplink_bps=down / 10.0,
                tilt_deg=path.tilt_deg,
                boresight_azimuth_deg=path.pose_heading(t),
                boresight_elevation_deg=90.0 - path.tilt_deg,
                quaternion=(q.w, q.x, q.y, q.z),
                attitude_uncertainty_deg=0.5,
                attitude_estimation_state=1,
                desired_boresight_azimuth_deg=path.pose_heading(t),
                desired_boresight_elevation_deg=90.0 - path.tilt_deg,
            )
        )
    return out


def _locations(scenario: SyntheticScenario) -> list[UtLocationRecord]:
    path = scenario.ut_path
    out = []
    moving = path.speed_mps > 0
    for k in range(int(round(scenario.t_end - scenario.t_start)) + 1):
        t = scenario.t_start + k
        site = path.location(t)
        out.append(
            UtLocationRecord(
                t, site.latitude, site.longitude, site.altitude_m,
                path.speed_mps if moving else 0.0, 0.0, LocationSource.DISH_GNSS,
            )
        )
    return out


def _outages(scenario: SyntheticScenario) -> list[OutageEvent]:
    switch_starts = {e.t_from for e in scenario.schedule if e.switch}
    return [
        OutageEvent(
            round(o.start * 1000.0) * 1_000_000, round(o.duration * 1000.0) * 1_000_000, EventReason.OUTAGE_OBSTRUCTED,
            any(abs(o.start + o.duration - s) < 1e-6 for s in switch_starts),
        )
        for o in scenario.obstruction_script
    ]


def _pings(scenario: SyntheticScenario, rng: np.random.Generator) -> list[PingSample]:
    step = scenario.config.ping_interval_ms / 1000.0
    n = int(round((scenario.t_end - scenario.t_start) / step))
    rtts = 25.0 + 10.0 * rng.random(n)
    out = []
    for i in range(n):
        t = scenario.t_start + i * step
        if scenario.obstructed_at(t):
            out.append(PingSample(round(t, 6), i + 1, None, True))
        else:
            rtt = float(round(rtts[i], 3))
            out.append(PingSample(round(t + rtt / 1000.0, 6), i + 1, rtt, False))
    return out


def _throughput(scenario: SyntheticScenario, rng: np.random.Generator) -> list[ThroughputSample]:
    out = []
    for k in range(int(round(scenario.t_end - scenario.t_start)) + 1):
        t = scenario.t_start + k
        if scenario.obstructed_at(t):
            bps = 0.0
        else:
            base = 100e6 * (1.0 + 0.02 * (rng.random() - 0.5))
            bps = base / 2.0 if _degraded(scenario, t) else base
        out.append(ThroughputSample(t, Direction.DOWN, round(bps, 1)))
    return out


# ---------------------------------------------------------------- corpus files

CORPUS_FILES = {
    "frames": "frames.csv",
    "status": "status.csv",
    "location": "location.csv",
    "catalog": "catalog.tle",
    "outages": "outages.csv",
    "pings": "pings.csv",
    "throughput": "throughput.csv",
    "truth": "truth.csv",
}
TRUTH_COLUMNS = ("slot_start", "t_from", "t_to", "norad_id", "switch_flag")


def write_truth(path: str | Path, schedule: Sequence[ScheduleEntry]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for e in schedule:
            w.writerow([f"{e.slot_start:.3f}", f"{e.t_from:.3f}", f"{e.t_to:.3f}", e.norad_id, str(e.switch).lower()])


def read_truth(path: str | Path) -> list[ScheduleEntry]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            ScheduleEntry(float(r["t_from"]), float(r["t_to"]), int(r["norad_id"]), float(r["slot_start"]),
                          r["switch_flag"] == "true")
            for r in csv.DictReader(fh)
        ]


def write_corpus(out_dir: str | Path, scenario: SyntheticScenario, rendered: RenderedScenario) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in CORPUS_FILES.items()}
    write_obstruction_frames(paths["frames"], rendered.frames)
    write_status_log(paths["status"], rendered.statuses)
    write_location_log(paths["location"], rendered.locations)
    write_tle_catalog(paths["catalog"], scenario.catalog)
    write_outage_log(paths["outages"], rendered.outages)
    write_ping_log(paths["pings"], rendered.pings)
    write_throughput_log(paths["throughput"], rendered.throughput)
    write_truth(paths["truth"], scenario.schedule)
    meta = {"seed": scenario.seed, "attempt": scenario.attempt, "config": asdict(scenario.config)}
    (out / "scenario.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


# ---------------------------------------------------------------- comparison


@dataclass(frozen=True)
class ScheduleComparison:
    n_truth: int
    n_matched: int
    truth_switches: dict[float, int]
    found_switches: dict[float, int]

    @property
    def recovery(self) -> float:
        return self.n_matched / self.n_truth if self.n_truth else 1.0

    @property
    def switch_counts_match(self) -> bool:
        return all(self.found_switches.get(s, 0) == n for s, n in self.truth_switches.items())


def _lcs(a: Sequence, b: Sequence) -> int:
    dp = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            dp[i + 1][j + 1] = dp[i][j] + 1 if x == y else max(dp[i][j + 1], dp[i + 1][j])
    return dp[-1][-1]


def compare_schedule(schedule: Sequence[ScheduleEntry], results: Sequence[IdentificationResult]) -> ScheduleComparison:
    """ID-for-ID agreement per slot (longest common subsequence) and per-slot switch counts."""
    truth: dict[float, list[int]] = {}
    truth_sw: dict[float, int] = {}
    for e in schedule:
        truth.setdefault(e.slot_start, []).append(e.norad_id)
        truth_sw[e.slot_start] = truth_sw.get(e.slot_start, 0) + int(e.switch)
    found = {r.timeslot.start: [iv.norad_id for iv in r.intervals] for r in results}
    found_sw = {r.timeslot.start: sum(iv.switch_flag for iv in r.intervals) for r in results}
    matched = sum(_lcs(ids, found.get(s, [])) for s, ids in truth.items())
    return ScheduleComparison(len(schedule), matched, truth_sw, {s: found_sw.get(s, 0) for s in truth_sw})
