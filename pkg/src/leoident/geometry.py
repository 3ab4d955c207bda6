"""Orbit propagation, observer-centred directions and obstruction-map projection.

Obstruction-map pixels are ``(row, col)`` with row 0 at the top of the image.
Both reference frames use an azimuthal-equidistant projection on a disc of
``max_radius_px`` pixels around the grid centre:

* ``FRAME_EARTH`` is centred on zenith, north up and east to the right.
* ``FRAME_UT`` is centred on the boresight (body +Z); image up is body +Y and
  image right is body +X, so the bottom-centre pixel lies toward the boresight
  heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Protocol, Sequence

import numpy as np
from sgp4.api import SGP4_ERRORS, WGS72, Satrec, SatrecArray
from sgp4.propagation import gstime

from leoident.errors import OutsideDiscError, PropagationError
from leoident.ingest import GRID_SIZE, FrameType, TleRecord
from leoident.orientation import Attitude

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)
EARTH_ROTATION_RAD_S = 7.2921158553e-5
MAX_TLE_AGE_DAYS = 14.0
DEFAULT_ELEVATION_MASK_DEG = 20.0

FOV_TABLE: dict[str, float] = {
    "rev3_proto2": 110.0,
    "hp1_proto2": 140.0,
}


class Observer(Protocol):
    latitude: float
    longitude: float
    altitude_m: float


@dataclass(frozen=True)
class Site:
    """A bare observer position; any object with these attributes works."""

    latitude: float
    longitude: float
    altitude_m: float = 0.0


@dataclass(frozen=True)
class EcefState:
    position: np.ndarray  # metres
    velocity: np.ndarray  # m/s
    timestamp: float


@dataclass(frozen=True)
class Topocentric:
    azimuth_deg: float
    elevation_deg: float

    def unit_ned(self) -> np.ndarray:
        return az_el_to_ned(self.azimuth_deg, self.elevation_deg)


@dataclass(frozen=True)
class FovModel:
    hardware_model: str
    full_angle_deg: float

    def __post_init__(self) -> None:
        if not 0.0 < self.full_angle_deg < 180.0:
            raise ValueError(f"full FOV angle must be in (0, 180), got {self.full_angle_deg}")

    @property
    def half_angle_deg(self) -> float:
        return self.full_angle_deg / 2.0


def fov_for(hardware_model: str, table: dict[str, float] | None = None) -> FovModel:
    table = FOV_TABLE if table is None else table
    try:
        return FovModel(hardware_model, table[hardware_model])
    except KeyError:
        raise ValueError(f"no FOV entry for hardware model {hardware_model!r}; known: {sorted(table)}") from None


@dataclass(frozen=True)
class MapGeometry:
    zenith_max_deg: float
    grid_size: int = GRID_SIZE
    max_radius_px: int = 61

    @classmethod
    def for_fov(cls, fov: FovModel) -> MapGeometry:
        return cls(zenith_max_deg=fov.half_angle_deg)

    @property
    def center(self) -> int:
        return self.grid_size // 2

    @property
    def disc_limit_px(self) -> float:
        # pixels whose centre is within half a diagonal of the disc edge still belong to it
        return self.max_radius_px + math.sqrt(0.5)

    @property
    def deg_per_px(self) -> float:
        return self.zenith_max_deg / self.max_radius_px

    def radius_px(self, elevation_deg: float) -> float:
        """Radial distance of an elevation in the earth frame."""
        return (90.0 - elevation_deg) / self.deg_per_px

    def in_disc(self, row: int, col: int) -> bool:
        c = self.center
        if not (0 <= row < self.grid_size and 0 <= col < self.grid_size):
            return False
        return math.hypot(row - c, col - c) <= self.disc_limit_px

    def disc_pixels(self) -> np.ndarray:
        rows, cols = np.indices((self.grid_size, self.grid_size))
        mask = np.hypot(rows - self.center, cols - self.center) <= self.disc_limit_px
        return np.column_stack([rows[mask], cols[mask]])


# ---------------------------------------------------------------- Earth & time


def geodetic_to_ecef(lat_deg: float, lon_deg: float, alt_m: float) -> np.ndarray:
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
    return np.array(
        [
            (n + alt_m) * math.cos(lat) * math.cos(lon),
            (n + alt_m) * math.cos(lat) * math.sin(lon),
            (n * (1.0 - WGS84_E2) + alt_m) * math.sin(lat),
        ]
    )


def ned_basis(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Rows are the north, east and down unit vectors expressed in ECEF."""
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    sl, cl, so, co = math.sin(lat), math.cos(lat), math.sin(lon), math.cos(lon)
    return np.array(
        [
            [-sl * co, -sl * so, cl],
            [-so, co, 0.0],
            [-cl * co, -cl * so, -sl],
        ]
    )


def unix_to_jd(t: float | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=float)
    days = np.floor(t / 86400.0)
    return 2440587.5 + days, (t - days * 86400.0) / 86400.0


def _teme_to_ecef_matrices(jd: np.ndarray, fr: np.ndarray) -> np.ndarray:
    g = np.array([gstime(a + b) for a, b in zip(np.atleast_1d(jd), np.atleast_1d(fr))])
    c, s = np.cos(g), np.sin(g)
    m = np.zeros((g.size, 3, 3))
    m[:, 0, 0], m[:, 0, 1] = c, s
    m[:, 1, 0], m[:, 1, 1] = -s, c
    m[:, 2, 2] = 1.0
    return m


# ---------------------------------------------------------------- SGP4


@lru_cache(maxsize=65536)
def _satrec(line1: str, line2: str) -> Satrec:
    return Satrec.twoline2rv(line1, line2, WGS72)


def _check_window(tle: TleRecord, t: float, max_age_days: float | None) -> None:
    if max_age_days is not None and abs(t - tle.epoch) > max_age_days * 86400.0:
        raise PropagationError(
            f"{tle.name} ({tle.norad_id}): {abs(t - tle.epoch) / 86400.0:.1f} days from epoch "
            f"exceeds the {max_age_days:g}-day validity window"
        )


def propagate_teme(tle: TleRecord, t: float, max_age_days: float | None = MAX_TLE_AGE_DAYS):
    """TEME position (km) and velocity (km/s) at Unix time ``t``."""
    _check_window(tle, t, max_age_days)
    jd, fr = unix_to_jd(t)
    err, r, v = _satrec(tle.line1, tle.line2).sgp4(float(jd), float(fr))
    if err:
        raise PropagationError(f"{tle.name} ({tle.norad_id}): {SGP4_ERRORS.get(err, f'error {err}')}")
    return np.array(r), np.array(v)


def propagate_minutes(tle: TleRecord, tsince_min: float):
    """TEME state at ``tsince_min`` minutes from the element epoch (km, km/s)."""
    sat = _satrec(tle.line1, tle.line2)
    err, r, v = sat.sgp4_tsince(tsince_min)
    if err:
        raise PropagationError(f"{tle.name} ({tle.norad_id}): {SGP4_ERRORS.get(err, f'error {err}')}")
    return np.array(r), np.array(v)


def propagate(tle: TleRecord, t: float, max_age_days: float | None = MAX_TLE_AGE_DAYS) -> EcefState:
    r, v = propagate_teme(tle, t, max_age_days)
    jd, fr = unix_to_jd(t)
    m = _teme_to_ecef_matrices(jd, fr)[0]
    pos = m @ r * 1000.0
    omega = np.array([0.0, 0.0, EARTH_ROTATION_RAD_S])
    vel = m @ v * 1000.0 - np.cross(omega, pos)
    return EcefState(pos, vel, float(t))


def propagate_many(
    tles: Sequence[TleRecord], times: Sequence[float] | np.ndarray, max_age_days: float | None = MAX_TLE_AGE_DAYS
) -> np.ndarray:
    """ECEF positions in metres, shape ``(n_sat, n_time, 3)``; NaN where propagation fails."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.full((len(tles), times.size, 3), np.nan)
    if not len(tles) or not times.size:
        return out
    jd, fr = unix_to_jd(times)
    arr = SatrecArray([_satrec(t.line1, t.line2) for t in tles])
    err, r, _ = arr.sgp4(jd, fr)
    rot = _teme_to_ecef_matrices(jd, fr)
    pos = np.einsum("tij,stj->sti", rot, r) * 1000.0
    ok = err == 0
    if max_age_days is not None:
        epochs = np.array([t.epoch for t in tles])
        ok &= np.abs(times[None, :] - epochs[:, None]) <= max_age_days * 86400.0
    out[ok] = pos[ok]
    return out


# ---------------------------------------------------------------- directions


def az_el_to_ned(az_deg, el_deg) -> np.ndarray:
    az, el = np.radians(az_deg), np.radians(el_deg)
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), -np.sin(el)], axis=-1)


def ned_to_az_el(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1)
    el = np.degrees(np.arcsin(np.clip(-v[..., 2] / n, -1.0, 1.0)))
    az = np.degrees(np.arctan2(v[..., 1], v[..., 0])) % 360.0
    az = np.where(az >= 360.0, 0.0, az)
    return az, el


def topocentric_ned(observer: Observer, positions_ecef: np.ndarray) -> np.ndarray:
    """Unit NED vectors from the observer toward each ECEF position (``(..., 3)``)."""
    o = geodetic_to_ecef(observer.latitude, observer.longitude, observer.altitude_m)
    rel = np.asarray(positions_ecef, dtype=float) - o
    ned = rel @ ned_basis(observer.latitude, observer.longitude).T
    return ned / np.linalg.norm(ned, axis=-1, keepdims=True)


def topocentric_ned_track(observers: Sequence[Observer], positions_ecef: np.ndarray) -> np.ndarray:
    """Like :func:`topocentric_ned` for a moving observer.

    ``positions_ecef`` has shape ``(n_sat, n_time, 3)`` and ``observers`` one entry
    per time; NaN positions stay NaN.
    """
    pos = np.asarray(positions_ecef, dtype=float)
    origin = np.array([geodetic_to_ecef(o.latitude, o.longitude, o.altitude_m) for o in observers])
    basis = np.array([ned_basis(o.latitude, o.longitude) for o in observers])
    rel = pos - origin[None, :, :]
    ned = np.einsum("tij,stj->sti", basis, rel)
    return ned / np.linalg.norm(ned, axis=-1, keepdims=True)


def topocentric(observer: Observer, sat: EcefState) -> Topocentric:
    az, el = ned_to_az_el(topocentric_ned(observer, sat.position))
    return Topocentric(float(az), float(el))


def angular_separation(a: Topocentric, b: Topocentric) -> float:
    return float(separation_ned(a.unit_ned(), b.unit_ned()))


def separation_ned(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Great-circle angle in degrees between unit vectors (broadcasting)."""
    # atan2 form keeps precision for both tiny and near-antipodal angles
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(np.asarray(u) * np.asarray(v), axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def in_fov(direction: Topocentric, attitude: Attitude, fov: FovModel) -> bool:
    sep = separation_ned(direction.unit_ned(), attitude.boresight_ned())
    return bool(sep <= fov.half_angle_deg)


# ---------------------------------------------------------------- projection


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _rotation(attitude: Attitude | None) -> np.ndarray:
    if attitude is None:
        raise ValueError("FRAME_UT projection needs an attitude")
    return attitude.matrix if attitude.matrix is not None else attitude.quaternion.to_matrix()


def pixels_to_ned(
    pixels: np.ndarray, frame_type: FrameType, attitude: Attitude | None, geom: MapGeometry, check: bool = True
) -> np.ndarray:
    """Vectorised :func:`pixel_to_direction`; returns unit NED vectors ``(n, 3)``."""
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    c = geom.center
    dx = px[:, 1] - c
    dy = c - px[:, 0]
    r = np.hypot(dx, dy)
    if check:
        bad = (r > geom.disc_limit_px) | (px[:, 0] < 0) | (px[:, 1] < 0) | (px.max(axis=1) >= geom.grid_size)
        if bad.any():
            row, col = px[np.argmax(bad)]
            raise OutsideDiscError(f"pixel ({int(row)}, {int(col)}) is outside the map disc")
    ang = np.radians(r * geom.deg_per_px)
    safe_r = np.where(r > 0, r, 1.0)
    ux, uy = dx / safe_r, dy / safe_r
    if frame_type is FrameType.FRAME_EARTH:
        # up = north, right = east
        return np.column_stack([np.sin(ang) * uy, np.sin(ang) * ux, -np.cos(ang)])
    body = np.column_stack([np.sin(ang) * ux, np.sin(ang) * uy, np.cos(ang)])
    return body @ _rotation(attitude).T


def ned_to_pixels(
    vectors: np.ndarray, frame_type: FrameType, attitude: Attitude | None, geom: MapGeometry
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`direction_to_pixel`.

    Returns ``(pixels, valid)`` where ``pixels`` is an int array ``(n, 2)`` and
    ``valid`` marks directions that land in the disc.
    """
    v = np.asarray(vectors, dtype=float).reshape(-1, 3)
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    if frame_type is FrameType.FRAME_EARTH:
        a, b, axial = v[:, 1], v[:, 0], -v[:, 2]  # right, up, toward centre
    else:
        body = v @ _rotation(attitude)
        a, b, axial = body[:, 0], body[:, 1], body[:, 2]
    h = np.hypot(a, b)
    ang = np.degrees(np.arctan2(h, axial))
    r = ang / geom.deg_per_px
    safe_h = np.where(h > 0, h, 1.0)
    dx = np.where(h > 0, r * a / safe_h, 0.0)
    dy = np.where(h > 0, r * b / safe_h, 0.0)
    ix, iy = _round_half_away(dx), _round_half_away(dy)
    c = geom.center
    lim = geom.disc_limit_px
    valid = (r <= lim) & (np.hypot(ix, iy) <= lim) & (np.abs(ix) <= c) & (np.abs(iy) <= c)
    pixels = np.column_stack([c - iy, c + ix]).astype(int)
    return pixels, valid


def pixel_to_direction(
    px: tuple[int, int], frame_type: FrameType, attitude: Attitude | None, geom: MapGeometry
) -> Topocentric:
    az, el = ned_to_az_el(pixels_to_ned(np.array([px]), frame_type, attitude, geom)[0])
    return Topocentric(float(az), float(el))


def direction_to_pixel(
    direction: Topocentric, frame_type: FrameType, attitude: Attitude | None, geom: MapGeometry
) -> tuple[int, int]:
    pixels, valid = ned_to_pixels(direction.unit_ned()[None, :], frame_type, attitude, geom)
    if not valid[0]:
        raise OutsideDiscError(
            f"direction az={direction.azimuth_deg:.3f} el={direction.elevation_deg:.3f} is outside the "
            f"{frame_type.value} disc"
        )
    return int(pixels[0, 0]), int(pixels[0, 1])


# ---------------------------------------------------------------- catalog


def visible_catalog(
    t: float,
    observer: Observer,
    attitude: Attitude,
    fov: FovModel,
    catalog: Iterable[TleRecord],
    elevation_mask_deg: float = DEFAULT_ELEVATION_MASK_DEG,
) -> list[tuple[TleRecord, Topocentric]]:
    """Non-DTC satellites inside the FOV cone and above the mask, highest first."""
    sats = [s for s in catalog if not s.is_dtc]
    if not sats:
        return []
    pos = propagate_many(sats, [t])[:, 0, :]
    ok = ~np.isnan(pos[:, 0])
    if not ok.any():
        return []
    ned = np.full_like(pos, np.nan)
    ned[ok] = topocentric_ned(observer, pos[ok])
    az, el = ned_to_az_el(np.where(ok[:, None], ned, [1.0, 0.0, 0.0]))
    sep = separation_ned(np.where(ok[:, None], ned, [1.0, 0.0, 0.0]), attitude.boresight_ned()[None, :])
    keep = ok & (el >= elevation_mask_deg) & (sep <= fov.half_angle_deg)
    out = [(sats[i], Topocentric(float(az[i]), float(el[i]))) for i in np.flatnonzero(keep)]
    out.sort(key=lambda item: (-item[1].elevation_deg, item[0].norad_id))
    return out
