"""Planar relative-pose labels from synchronized motion-capture tracks.

Conventions: x forward along the drone heading, y to the drone's left,
angles counter-clockwise positive. ``phi`` is the subject heading minus the
drone heading, wrapped to (-pi, pi].
"""

from __future__ import annotations

import bisect
import csv
import math
import os
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .errors import FormatError

DEFAULT_MAX_GAP_S = 0.050
TWO_PI = 2.0 * math.pi


class AbsolutePose2D(NamedTuple):
    px: float
    py: float
    yaw: float


class RelativePose(NamedTuple):
    x: float
    y: float
    phi: float


def wrap_angle(a: float) -> float:
    """Map an angle to the half-open interval (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a}")
    w = math.remainder(a, TWO_PI)  # exact, in [-pi, pi]
    return math.pi if w <= -math.pi else w


def relative_pose(drone: AbsolutePose2D, subject: AbsolutePose2D) -> RelativePose:
    dx = subject.px - drone.px
    dy = subject.py - drone.py
    c, s = math.cos(drone.yaw), math.sin(drone.yaw)
    return RelativePose(c * dx + s * dy, -s * dx + c * dy, wrap_angle(subject.yaw - drone.yaw))


def compose(drone: AbsolutePose2D, rel: RelativePose) -> AbsolutePose2D:
    """Inverse of :func:`relative_pose`: recover the subject's absolute pose."""
    c, s = math.cos(drone.yaw), math.sin(drone.yaw)
    return AbsolutePose2D(
        drone.px + c * rel.x - s * rel.y,
        drone.py + s * rel.x + c * rel.y,
        wrap_angle(drone.yaw + rel.phi),
    )


def yaw_from_quaternion(qx: float, qy: float, qz: float, qw: float) -> float:
    """Heading of the body x-axis projected on the ground plane."""
    fx = 1.0 - 2.0 * (qy * qy + qz * qz)
    fy = 2.0 * (qx * qy + qw * qz)
    if math.hypot(fx, fy) < 1e-12:
        raise FormatError("body x-axis is vertical; heading undefined")
    return wrap_angle(math.atan2(fy, fx))


@dataclass(frozen=True)
class TrackSample:
    t: float
    pose: AbsolutePose2D


class Track:
    """A time-sorted planar trajectory with linear / shortest-arc interpolation."""

    def __init__(self, samples: Sequence[TrackSample], name: str = "track"):
        times = [s.t for s in samples]
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise FormatError(f"{name}: timestamps not strictly increasing ({a} then {b})")
        self.samples = list(samples)
        self.times = times
        self.name = name

    def __len__(self) -> int:
        return len(self.samples)

    def at(self, t: float, max_gap: float):
        """Interpolated pose at ``t``, or ``None`` when the bracket is too wide or missing."""
        i = bisect.bisect_left(self.times, t)
        if i < len(self.times) and self.times[i] == t:
            return self.samples[i].pose
        if i == 0 or i == len(self.times):
            return None
        a, b = self.samples[i - 1], self.samples[i]
        if b.t - a.t > max_gap:
            return None
        u = (t - a.t) / (b.t - a.t)
        pa, pb = a.pose, b.pose
        return AbsolutePose2D(
            pa.px + u * (pb.px - pa.px),
            pa.py + u * (pb.py - pa.py),
            wrap_angle(pa.yaw + u * wrap_angle(pb.yaw - pa.yaw)),
        )


@dataclass
class LabelResult:
    labels: list[tuple[str, RelativePose]]
    dropped: int


def resample_and_label(
    frames: Iterable[tuple[str, float]],
    drone_track: Track,
    subject_track: Track,
    max_gap: float = DEFAULT_MAX_GAP_S,
) -> LabelResult:
    """Label every frame ``(frame_id, timestamp)`` that both tracks cover."""
    labels = []
    dropped = 0
    for frame_id, t in frames:
        drone = drone_track.at(t, max_gap)
        subject = subject_track.at(t, max_gap)
        if drone is None or subject is None:
            dropped += 1
            continue
        labels.append((frame_id, relative_pose(drone, subject)))
    return LabelResult(labels, dropped)


# --- CSV I/O -----------------------------------------------------------------

TRACK_COLUMNS = ["timestamp_s", "px", "py", "pz", "qx", "qy", "qz", "qw"]
LABEL_COLUMNS = ["frame_id", "x", "y", "phi"]


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            yield lineno, dict(zip(header, (c.strip() for c in row)))


def read_track_csv(path: str | os.PathLike) -> Track:
    """Read a ``timestamp_s, px, py, pz, qx, qy, qz, qw`` track; z is discarded."""
    samples = []
    for lineno, row in _rows(path):
        try:
            t, px, py, _, qx, qy, qz, qw = (float(row[c]) for c in TRACK_COLUMNS)
        except KeyError as exc:
            raise FormatError(f"{path}: missing column {exc}") from None
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        samples.append(TrackSample(t, AbsolutePose2D(px, py, yaw_from_quaternion(qx, qy, qz, qw))))
    return Track(samples, name=str(path))


def read_frame_times(path: str | os.PathLike) -> list[tuple[str, float]]:
    """Read ``frame_id, timestamp_s`` rows."""
    out = []
    for lineno, row in _rows(path):
        try:
            out.append((row["frame_id"], float(row["timestamp_s"])))
        except KeyError as exc:
            raise FormatError(f"{path}: missing column {exc}") from None
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out


def format_float(v: float) -> str:
    return f"{v:.9g}"


def write_labels_csv(path: str | os.PathLike, labels: Iterable[tuple[str, RelativePose]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABEL_COLUMNS)
        for frame_id, rel in labels:
            writer.writerow([frame_id, format_float(rel.x), format_float(rel.y), format_float(rel.phi)])


def read_labels_csv(path: str | os.PathLike) -> dict[str, RelativePose]:
    out = {}
    for lineno, row in _rows(path):
        try:
            frame_id = row["frame_id"]
            pose = RelativePose(float(row["x"]), float(row["y"]), float(row["phi"]))
        except KeyError as exc:
            raise FormatError(f"{path}: missing column {exc}") from None
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if frame_id in out:
            raise FormatError(f"{path}:{lineno}: duplicate frame_id {frame_id!r}")
        out[frame_id] = pose
    return out
