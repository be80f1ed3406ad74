"""Camera model, projection, triangulation, and residual computation.

Conventions used everywhere in this package:

* A pose stores a **world-to-camera** rotation as a unit quaternion
  ``(qw, qx, qy, qz)`` (scalar first) together with the **camera center**
  ``C`` in world units.  A world point ``X`` maps into the camera frame as
  ``p = R @ (X - C)``.  We deliberately store the center, not a translation
  vector, to avoid the classic ``t = -R @ C`` confusion; the XML serializer
  writes the center as well.
* The camera is an ideal pinhole with per-axis focal lengths and zero skew
  and zero distortion.  Intrinsics are calibration constants, never
  optimization variables.
* Pixel coordinates are ``(u, v)`` with ``u`` along image columns and ``v``
  along rows.  Residual angles are ``atan2(v, u)`` mapped to ``[0, 360)``
  degrees, and that convention is shared by every chart and filter built on
  top of these records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CheiralityViolation,
    DegenerateGeometry,
    MissingFinalState,
    TooFewObservations,
)

__all__ = [
    "CHEIRALITY_EPS",
    "Intrinsics",
    "Pose",
    "Camera",
    "Observation",
    "Track",
    "ResidualRecord",
    "quat_normalize",
    "quat_multiply",
    "quat_to_matrix",
    "quat_from_matrix",
    "quat_from_rotvec",
    "rotation_angle_deg",
    "project",
    "triangulate",
    "residual",
    "residuals_from_arrays",
    "total_reprojection_error",
    "triangulation_angle",
    "LOW_ANGLE_DEG",
]

# Depth at or below this value counts as "behind the camera".
CHEIRALITY_EPS = 1e-12

# Near-parallel ray threshold: ratio of the two smallest DLT singular values.
DEGENERACY_RATIO = 1.0 - 1e-9

# Tracks triangulated from ray separations under this many degrees are
# flagged as ill-posed (a warning, never an error: such tracks must stay
# inspectable).
LOW_ANGLE_DEG = 1.0

RESIDUAL_KINDS = ("initial", "final")


def _readonly(values, shape: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite, got {arr!r}")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Quaternion helpers (scalar-first, Hamilton convention).
# ---------------------------------------------------------------------------

def quat_normalize(q) -> np.ndarray:
    """Return q scaled to unit norm."""
    q = np.asarray(q, dtype=float).reshape(4)
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a*b; rotates by b first, then a."""
    aw, ax, ay, az = np.asarray(a, dtype=float).reshape(4)
    bw, bx, by, bz = np.asarray(b, dtype=float).reshape(4)
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (no normalization performed)."""
    w, x, y, z = np.asarray(q, dtype=float).reshape(4)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(R) -> np.ndarray:
    """Unit quaternion of a rotation matrix (Shepperd's method, w >= 0)."""
    R = np.asarray(R, dtype=float).reshape(3, 3)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_from_rotvec(v) -> np.ndarray:
    """Quaternion of an axis-angle vector (angle = |v| radians)."""
    v = np.asarray(v, dtype=float).reshape(3)
    theta = float(np.linalg.norm(v))
    if theta < 1e-12:
        # First-order expansion; keeps derivatives smooth through zero.
        q = np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
        return quat_normalize(q)
    axis = v / theta
    half = 0.5 * theta
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def rotation_angle_deg(R) -> float:
    """Rotation angle of a rotation matrix, in degrees."""
    R = np.asarray(R, dtype=float).reshape(3, 3)
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


# ---------------------------------------------------------------------------
# Domain types.
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Intrinsics:
    """Pinhole calibration: focal lengths, principal point, image size (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"intrinsics {name} must be finite")
            object.__setattr__(self, name, value)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rotation (unit quaternion, scalar first) + camera center."""

    rotation: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        q = np.array(self.rotation, dtype=float).reshape(4)
        if not np.all(np.isfinite(q)):
            raise ValueError("quaternion must be finite")
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n} too far from 1")
        # Values already unit to ulp precision are kept verbatim: dividing by
        # a norm of 1 +- 1ulp perturbs the last bits without gaining accuracy
        # and can oscillate between two encodings, which would break exact
        # file round trips (construction must be idempotent).
        if abs(n - 1.0) > 1e-14:
            q = q / n
        q.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "center", _readonly(self.center, (3,), "pose center"))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @staticmethod
    def from_matrix(R, center) -> "Pose":
        return Pose(quat_from_matrix(R), np.asarray(center, dtype=float))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def transform(self, points) -> np.ndarray:
        """Map world point(s) into the camera frame: R @ (X - C)."""
        points = np.asarray(points, dtype=float)
        return (points - self.center) @ self.rotation_matrix().T


@dataclass(frozen=True, eq=False)
class Camera:
    """One image: id, file reference, calibration, and its pose(s)."""

    id: str
    image_ref: str
    intrinsics: Intrinsics
    pose_initial: Pose
    pose_final: Pose | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("camera id must be non-empty")


@dataclass(frozen=True, eq=False)
class Observation:
    """A tiepoint: where one track was measured in one camera's image."""

    camera_id: str
    pixel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixel", _readonly(self.pixel, (2,), "pixel"))


@dataclass(frozen=True, eq=False)
class Track:
    """A scene point with its tiepoints across two or more cameras.

    ``point_initial`` is normally present (file inputs require it); it may be
    None for programmatically built tracks, in which case the session layer
    triangulates before optimization.
    """

    id: str
    observations: tuple[Observation, ...]
    point_initial: np.ndarray | None = None
    point_final: np.ndarray | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("track id must be non-empty")
        obs = tuple(self.observations)
        if len(obs) < 2:
            raise TooFewObservations(f"track {self.id!r} has {len(obs)} observation(s), needs >= 2")
        seen: set[str] = set()
        for o in obs:
            if o.camera_id in seen:
                raise ValueError(f"track {self.id!r} observes camera {o.camera_id!r} twice")
            seen.add(o.camera_id)
        object.__setattr__(self, "observations", obs)
        if self.point_initial is not None:
            object.__setattr__(self, "point_initial", _readonly(self.point_initial, (3,), "point"))
        if self.point_final is not None:
            object.__setattr__(self, "point_final", _readonly(self.point_final, (3,), "point"))


@dataclass(frozen=True, eq=False)
class ResidualRecord:
    """Reprojection error of one (camera, track) pair, tagged initial/final.

    vector = projection - tiepoint, in pixels.  length is its norm, angle its
    atan2 direction in [0, 360) degrees (zero-length residuals carry angle 0).
    """

    camera_id: str
    track_id: str
    vector: np.ndarray
    length: float
    angle: float
    kind: str

    def __post_init__(self):
        if self.kind not in RESIDUAL_KINDS:
            raise ValueError(f"kind must be one of {RESIDUAL_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "vector", _readonly(self.vector, (2,), "residual vector"))


# ---------------------------------------------------------------------------
# Core operations.
# ---------------------------------------------------------------------------

def project(camera: Camera, pose: Pose, point) -> np.ndarray:
    """Project a world point through one camera.

    Returns the pixel (fx*x/z + cx, fy*y/z + cy) where (x, y, z) is the point
    in the camera frame.

    Raises:
        CheiralityViolation: if the point's depth z <= 1e-12 (on or behind
            the principal plane); huge finite residuals from near-zero depths
            would poison every statistic downstream, so this is an error.
    """
    p = pose.transform(np.asarray(point, dtype=float).reshape(3))
    z = p[2]
    if z <= CHEIRALITY_EPS:
        raise CheiralityViolation(
            f"point depth {z:.3e} behind camera {camera.id!r}"
        )
    k = camera.intrinsics
    return np.array([k.fx * p[0] / z + k.cx, k.fy * p[1] / z + k.cy])


def _dlt_point(rays: Sequence[tuple[Camera, Pose, np.ndarray]]) -> tuple[np.ndarray, float]:
    """Homogeneous linear triangulation.

    Returns (point, ratio) where ratio is s_min/s_next of the DLT system's two
    smallest singular values; a ratio near 1 means the nullspace direction is
    not unique (parallel rays).
    """
    rows = []
    for camera, pose, pixel in rays:
        k = camera.intrinsics
        u, v = np.asarray(pixel, dtype=float).reshape(2)
        # Normalized image coordinates keep the system well scaled across
        # focal lengths.
        xn = (u - k.cx) / k.fx
        yn = (v - k.cy) / k.fy
        R = pose.rotation_matrix()
        P = np.hstack([R, (-R @ pose.center).reshape(3, 1)])  # 3x4, normalized
        rows.append(xn * P[2] - P[0])
        rows.append(yn * P[2] - P[1])
    A = np.vstack(rows)
    _, s, vt = np.linalg.svd(A)
    X = vt[-1]
    # Ratio of the two smallest singular values; guard the denominator so an
    # exactly rank-2 system still reports "degenerate" rather than dividing
    # by zero.
    if s[-2] <= s[0] * 1e-15:
        ratio = 1.0
    else:
        ratio = float(s[-1] / s[-2])
    if abs(X[3]) < 1e-15 * np.linalg.norm(X[:3]):
        return np.full(3, np.inf), ratio
    return X[:3] / X[3], ratio


def triangulate(rays: Sequence[tuple[Camera, Pose, np.ndarray]]) -> np.ndarray:
    """Triangulate a point from >= 2 (camera, pose, pixel) rays by DLT.

    Stacks two cross-product rows per view and takes the right singular
    vector of least singular value, then dehomogenizes.

    Raises:
        DegenerateGeometry: rays (near-)parallel, the nullspace is not unique
            (singular-value ratio above 1 - 1e-9), or the point lies at
            infinity.
        CheiralityViolation: the triangulated point falls behind any of the
            contributing cameras.
    """
    if len(rays) < 2:
        raise DegenerateGeometry(f"need >= 2 rays, got {len(rays)}")
    point, ratio = _dlt_point(rays)
    if ratio > DEGENERACY_RATIO or not np.all(np.isfinite(point)):
        raise DegenerateGeometry(
            f"triangulation not unique (singular-value ratio {ratio:.12f})"
        )
    for camera, pose, _ in rays:
        z = pose.transform(point)[2]
        if z <= CHEIRALITY_EPS:
            raise CheiralityViolation(
                f"triangulated point behind camera {camera.id!r} (depth {z:.3e})"
            )
    return point


def _angle_deg(vector: np.ndarray) -> float:
    return float(np.degrees(np.arctan2(vector[1], vector[0])) % 360.0)


def residual(
    camera: Camera,
    pose: Pose,
    point,
    obs: Observation,
    *,
    track_id: str = "",
    kind: str = "initial",
) -> ResidualRecord:
    """Reprojection residual record for one observation.

    vector = project(camera, pose, point) - obs.pixel.  The record's
    track_id/kind tags are supplied by the caller (the observation itself
    only knows its camera).
    """
    if obs.camera_id != camera.id:
        raise ValueError(f"observation belongs to {obs.camera_id!r}, not {camera.id!r}")
    vec = project(camera, pose, point) - obs.pixel
    return ResidualRecord(
        camera_id=camera.id,
        track_id=track_id,
        vector=vec,
        length=float(np.linalg.norm(vec)),
        angle=_angle_deg(vec),
        kind=kind,
    )


def residuals_from_arrays(
    camera_ids: Sequence[str],
    track_ids: Sequence[str],
    vectors: np.ndarray,
    kind: str,
) -> list[ResidualRecord]:
    """Bulk ResidualRecord construction from a stacked (n, 2) vector array.

    Shared by the optimizer and the dataset layer, which compute residual
    vectors for all observations at once.
    """
    vectors = np.asarray(vectors, dtype=float).reshape(-1, 2)
    lengths = np.linalg.norm(vectors, axis=1)
    angles = np.degrees(np.arctan2(vectors[:, 1], vectors[:, 0])) % 360.0
    out = []
    for cam_id, trk_id, vec, ln, ang in zip(camera_ids, track_ids, vectors, lengths, angles):
        out.append(
            ResidualRecord(
                camera_id=cam_id,
                track_id=trk_id,
                vector=vec,
                length=float(ln),
                angle=float(ang),
                kind=kind,
            )
        )
    return out


def _state_of(camera: Camera, track: Track, kind: str) -> tuple[Pose, np.ndarray]:
    if kind == "initial":
        if track.point_initial is None:
            raise MissingFinalState(f"track {track.id!r} has no initial point")
        return camera.pose_initial, track.point_initial
    if kind == "final":
        if camera.pose_final is None:
            raise MissingFinalState(f"camera {camera.id!r} has no final pose")
        if track.point_final is None:
            raise MissingFinalState(f"track {track.id!r} has no final point")
        return camera.pose_final, track.point_final
    raise ValueError(f"kind must be 'initial' or 'final', got {kind!r}")


def total_reprojection_error(
    cameras: Iterable[Camera], tracks: Iterable[Track], kind: str = "initial"
) -> float:
    """Sum of squared residual norms over every observation, for one kind.

    Raises:
        MissingFinalState: kind='final' before any optimization result is
            attached to the cameras/tracks.
    """
    by_id: Mapping[str, Camera] = {c.id: c for c in cameras}
    total = 0.0
    for track in tracks:
        for obs in track.observations:
            camera = by_id[obs.camera_id]
            pose, point = _state_of(camera, track, kind)
            vec = project(camera, pose, point) - obs.pixel
            total += float(vec @ vec)
    return total


def triangulation_angle(track: Track, cameras) -> float:
    """Maximum pairwise angle (degrees) between viewing rays to the track's point.

    Rays run from each observing camera's initial center to point_initial.
    Coincident centers contribute 0. Values below LOW_ANGLE_DEG mark the
    track as ill-posed for triangulation; that is a warning flag, not an
    error, because such tracks must remain inspectable.
    """
    if isinstance(cameras, Mapping):
        by_id = cameras
    else:
        by_id = {c.id: c for c in cameras}
    if track.point_initial is None:
        raise ValueError(f"track {track.id!r} has no initial point")
    point = track.point_initial
    dirs = []
    for obs in track.observations:
        ray = point - by_id[obs.camera_id].pose_initial.center
        norm = np.linalg.norm(ray)
        if norm > 0:
            dirs.append(ray / norm)
    best = 0.0
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            c = float(np.clip(dirs[i] @ dirs[j], -1.0, 1.0))
            best = max(best, float(np.degrees(np.arccos(c))))
    return best
