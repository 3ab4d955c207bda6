"""Obstruction-map image pipeline: binarize, re-project, difference, segment."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from leoident.errors import FrameOrderError
from leoident.geometry import MapGeometry, ned_to_pixels, pixels_to_ned
from leoident.ingest import GRID_SIZE, FrameType, ObstructionFrame
from leoident.orientation import Attitude

DEFAULT_OBSTRUCTION_THRESHOLD = 0.5
RESET_GUARD_PX = 50
TRACK_GATE_PX = 6.0

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class BinaryFrame:
    timestamp: float
    explored: np.ndarray
    obstructed: np.ndarray
    frame_type: FrameType = FrameType.FRAME_EARTH
    dropped: int = 0  # set pixels lost to the earth-frame disc edge during re-projection
    merged: int = 0  # set pixels that landed on an already-set earth pixel

    @classmethod
    def empty(cls, timestamp: float, frame_type: FrameType = FrameType.FRAME_EARTH) -> BinaryFrame:
        z = np.zeros((GRID_SIZE, GRID_SIZE), dtype=bool)
        return cls(timestamp, z, z.copy(), frame_type)

    @property
    def count(self) -> int:
        return int(self.explored.sum())

    def obstruction_ratio(self) -> float:
        n = self.count
        return float(self.obstructed.sum()) / n if n else 0.0


@dataclass(frozen=True, eq=False)
class DiffFrame:
    t_prev: float
    t_curr: float
    changed: np.ndarray
    reset: bool = False

    @property
    def count(self) -> int:
        return int(self.changed.sum())


@dataclass(frozen=True)
class Segment:
    label: int
    pixels: tuple[tuple[int, int], ...]
    midpoint: tuple[int, int]
    first_seen: float
    last_seen: float

    @property
    def size(self) -> int:
        return len(self.pixels)

    @property
    def centroid(self) -> tuple[float, float]:
        a = np.asarray(self.pixels, dtype=float)
        return float(a[:, 0].mean()), float(a[:, 1].mean())


@dataclass
class TrackReport:
    """Result of matching a diff's segments against earlier ones.

    ``matches[j]`` is the index into ``prev`` that ``curr[j]`` continues, or
    ``None`` when ``curr[j]`` is NEW. ``growth[j]`` is the number of pixels the
    matched trajectory gained (0 for NEW segments).
    """

    matches: list[int | None] = field(default_factory=list)
    distances: list[float | None] = field(default_factory=list)
    growth: list[int] = field(default_factory=list)

    @property
    def new(self) -> list[int]:
        return [j for j, m in enumerate(self.matches) if m is None]

    @property
    def grown(self) -> set[int]:
        return {m for m, g in zip(self.matches, self.growth) if m is not None and g > 0}


def classify(frame: ObstructionFrame, tau_obs: float = DEFAULT_OBSTRUCTION_THRESHOLD) -> BinaryFrame:
    if not 0.0 < tau_obs < 1.0:
        raise ValueError(f"obstruction threshold must be in (0, 1), got {tau_obs}")
    explored = frame.cells >= 0.0
    obstructed = explored & (frame.cells <= tau_obs)
    return BinaryFrame(frame.timestamp, explored, obstructed, frame.frame_type)


def _reproject(mask: np.ndarray, attitude: Attitude, geom: MapGeometry) -> tuple[np.ndarray, int, int]:
    out = np.zeros_like(mask, dtype=bool)
    src = np.argwhere(mask)
    if not len(src):
        return out, 0, 0
    c = geom.center
    inside = np.hypot(src[:, 0] - c, src[:, 1] - c) <= geom.disc_limit_px
    ned = pixels_to_ned(src[inside], FrameType.FRAME_UT, attitude, geom, check=False)
    px, ok = ned_to_pixels(ned, FrameType.FRAME_EARTH, None, geom)
    px = px[ok]
    out[px[:, 0], px[:, 1]] = True
    dropped = int((~inside).sum() + (~ok).sum())
    merged = len(px) - int(out.sum())
    return out, dropped, merged


def ut_to_earth_frame(frame: BinaryFrame, attitude: Attitude, geom: MapGeometry) -> BinaryFrame:
    """Re-project a FRAME_UT mask into FRAME_EARTH by nearest-pixel mapping.

    Pixel bookkeeping: ``earth.count + dropped + merged == frame.count``.
    """
    if frame.frame_type is not FrameType.FRAME_UT:
        raise ValueError("ut_to_earth_frame expects a FRAME_UT frame")
    explored, dropped, merged = _reproject(frame.explored, attitude, geom)
    obstructed, _, _ = _reproject(frame.obstructed, attitude, geom)
    return BinaryFrame(frame.timestamp, explored, obstructed & explored, FrameType.FRAME_EARTH, dropped, merged)


def xor_diff(prev: BinaryFrame, curr: BinaryFrame, reset_guard_px: int = RESET_GUARD_PX) -> DiffFrame:
    if not prev.timestamp < curr.timestamp:
        raise FrameOrderError(f"frames out of order: {prev.timestamp} then {curr.timestamp}")
    if curr.count < prev.count - reset_guard_px:
        return DiffFrame(prev.timestamp, curr.timestamp, np.zeros_like(curr.explored), reset=True)
    return DiffFrame(prev.timestamp, curr.timestamp, prev.explored ^ curr.explored)


def nearest_to_centroid(pixels: np.ndarray) -> tuple[int, int]:
    pixels = np.asarray(pixels)
    centroid = pixels.mean(axis=0)
    d2 = ((pixels - centroid) ** 2).sum(axis=1)
    best = np.flatnonzero(d2 == d2.min())
    # ties go to the lexicographically smallest pixel
    r, c = min(tuple(int(v) for v in pixels[i]) for i in best)
    return r, c


def label_segments(diff: DiffFrame) -> list[Segment]:
    """8-connected components of the changed mask, ordered by their first pixel in raster order."""
    labels, n = ndimage.label(diff.changed, structure=_EIGHT)
    if n == 0:
        return []
    segments = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        sub = np.argwhere(labels[sl] == k) + np.array([sl[0].start, sl[1].start])
        pixels = tuple(sorted((int(r), int(c)) for r, c in sub))
        segments.append((pixels, nearest_to_centroid(sub)))
    segments.sort(key=lambda s: s[0][0])
    return [Segment(i, px, mid, diff.t_curr, diff.t_curr) for i, (px, mid) in enumerate(segments)]


def midpoint_distance(a: Segment, b: Segment) -> float:
    return float(np.hypot(a.midpoint[0] - b.midpoint[0], a.midpoint[1] - b.midpoint[1]))


def track_segments(prev: list[Segment], curr: list[Segment], gate_px: float = TRACK_GATE_PX) -> TrackReport:
    """Continue each current segment from the closest earlier one within the gate.

    Several current segments may continue the same earlier segment (a trajectory
    can break into pieces after re-projection); ties go to the lower prev index.
    """
    report = TrackReport()
    for seg in curr:
        best, best_d = None, None
        for i, p in enumerate(prev):
            d = midpoint_distance(p, seg)
            if d <= gate_px and (best_d is None or d < best_d):
                best, best_d = i, d
        report.matches.append(best)
        report.distances.append(best_d)
        report.growth.append(seg.size if best is not None else 0)
    return report


def write_pgm(path: str | Path, mask: np.ndarray) -> None:
    """Dump a boolean mask as a binary PGM (white = set) for eyeballing."""
    img = np.where(mask, 255, 0).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def dump_debug_frames(out_dir: str | Path, frame: BinaryFrame, diff: DiffFrame | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{frame.timestamp:.3f}"
    write_pgm(out / f"{stem}_explored.pgm", frame.explored)
    write_pgm(out / f"{stem}_obstructed.pgm", frame.obstructed)
    if diff is not None:
        write_pgm(out / f"{stem}_changed.pgm", diff.changed)
