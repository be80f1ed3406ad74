"""Synthetic ground-truth scene generator.

Produces a camera trajectory over a ground plane of scene points, exact
projections plus Gaussian pixel noise, optional gross-outlier observations,
and optionally perturbed initial poses; the true poses/points ride along in
``Dataset.ground_truth`` so experiments can score recovery accuracy.

Determinism contract: every random draw comes from ``numpy.random.default_rng``
(the PCG64 generator) seeded from ``SyntheticConfig.seed``, in a fixed call
order, so one config yields one dataset, byte-for-byte through ``serialize``.

Trajectories:

* ``straight``: a single constant-heading pass, camera tilted forward.
* ``sharp_turns``: boustrophedon legs joined by tight 90-degree turns whose
  camera centers sit on a small arc; points seen only inside a turn get tiny
  stereo baselines, which is exactly the ill-posed-triangulation regime the
  workbench exists to expose.
* ``loop``: a closed circle looking inward and down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, GroundTruth
from .errors import InfeasibleConfig
from .geometry import (
    Camera,
    Intrinsics,
    Observation,
    Pose,
    Track,
    quat_from_rotvec,
    quat_multiply,
)

__all__ = ["PosePerturbation", "SyntheticConfig", "generate_synthetic"]

IMAGE_WIDTH = 800
IMAGE_HEIGHT = 600
FOCAL = 600.0
ALTITUDE = 10.0
STEP = 1.5

# A feature found in one (anchor) image only matches into views whose ray to
# the point stays within this angle of the anchor's ray, mimicking the
# viewpoint tolerance of descriptor matching. Without it every distant point
# would be tracked across wildly separated cameras, which real front ends do
# not do.
VIEW_CONE_DEG = 25.0

_BATCH = 512


@dataclass(frozen=True)
class PosePerturbation:
    """How far initial poses start from the truth.

    rotation_deg: exact rotation angle about a random axis, per camera.
    translation_frac: center offset as a fraction of the trajectory extent
    (bounding-box diagonal of the true camera centers), per camera.
    """

    rotation_deg: float = 0.0
    translation_frac: float = 0.0


@dataclass(frozen=True)
class SyntheticConfig:
    n_cameras: int = 20
    trajectory: str = "straight"
    n_points: int = 300
    pixel_noise_sigma: float = 0.0
    n_outlier_tracks: int = 0
    outlier_magnitude: float = 50.0
    pose_perturbation: PosePerturbation = field(default_factory=PosePerturbation)
    seed: int = 0

    def __post_init__(self):
        if self.trajectory not in ("straight", "sharp_turns", "loop"):
            raise InfeasibleConfig(f"unknown trajectory {self.trajectory!r}")
        if self.n_cameras < 2:
            raise InfeasibleConfig("need at least 2 cameras")
        if self.n_points < 1:
            raise InfeasibleConfig("need at least 1 point")
        if self.pixel_noise_sigma < 0 or self.outlier_magnitude < 0:
            raise InfeasibleConfig("noise magnitudes must be >= 0")
        if not (0 <= self.n_outlier_tracks <= self.n_points):
            raise InfeasibleConfig("n_outlier_tracks must be within [0, n_points]")
        p = self.pose_perturbation
        if p.rotation_deg < 0 or p.translation_frac < 0:
            raise InfeasibleConfig("pose perturbation must be >= 0")

    @staticmethod
    def from_dict(d: dict) -> "SyntheticConfig":
        d = dict(d)
        pert = d.pop("pose_perturbation", None)
        if pert is not None:
            d["pose_perturbation"] = PosePerturbation(**pert)
        return SyntheticConfig(**d)

    def to_dict(self) -> dict:
        return {
            "n_cameras": self.n_cameras,
            "trajectory": self.trajectory,
            "n_points": self.n_points,
            "pixel_noise_sigma": self.pixel_noise_sigma,
            "n_outlier_tracks": self.n_outlier_tracks,
            "outlier_magnitude": self.outlier_magnitude,
            "pose_perturbation": {
                "rotation_deg": self.pose_perturbation.rotation_deg,
                "translation_frac": self.pose_perturbation.translation_frac,
            },
            "seed": self.seed,
        }


def _look_at(center: np.ndarray, target: np.ndarray) -> Pose:
    """Pose whose viewing axis points from center to target (world z is up)."""
    z_c = target - center
    z_c = z_c / np.linalg.norm(z_c)
    x_c = np.cross(z_c, np.array([0.0, 0.0, 1.0]))
    if np.linalg.norm(x_c) < 1e-8:
        # Looking straight down: pick x along world +x.
        x_c = np.cross(z_c, np.array([0.0, 1.0, 0.0]))
    x_c = x_c / np.linalg.norm(x_c)
    y_c = np.cross(z_c, x_c)
    R = np.vstack([x_c, y_c, z_c])
    return Pose.from_matrix(R, center)


def _unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta), 0.0])


def _straight(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    ahead = ALTITUDE * math.tan(math.radians(30.0))
    out = []
    for i in range(n):
        center = np.array([i * STEP, 0.0, ALTITUDE])
        target = np.array([i * STEP + ahead, 0.0, 0.0])
        out.append((center, target))
    return out


def _loop(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    radius = max(n * STEP / (2.0 * math.pi), 3.0)
    pull = ALTITUDE * math.tan(math.radians(35.0))
    out = []
    for i in range(n):
        theta = 2.0 * math.pi * i / n
        cxy = radius * np.array([math.cos(theta), math.sin(theta)])
        norm = np.linalg.norm(cxy)
        txy = cxy * max(0.0, 1.0 - pull / norm)
        out.append((np.array([cxy[0], cxy[1], ALTITUDE]), np.array([txy[0], txy[1], 0.0])))
    return out


def _sharp_turns(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Boustrophedon: long legs, short cross legs, tight 90-degree corner arcs.

    Leg cameras tilt 40 degrees forward and image the band along the path.
    Turn cameras pivot nearly in place (centers on a 0.25-unit arc) while
    tilted up at 65 degrees, so they image distant ground no leg ever sees:
    points found only during a turn therefore triangulate from sub-degree
    baselines, the ill-posed case this trajectory exists to produce.
    """
    ahead_leg = ALTITUDE * math.tan(math.radians(40.0))
    ahead_turn = ALTITUDE * math.tan(math.radians(65.0))
    arc_r = 0.25
    leg_long, leg_cross, turn_len = 8, 3, 3

    poses: list[tuple[np.ndarray, np.ndarray]] = []
    pos = np.array([0.0, 0.0])
    heading = 0.0
    left = 1.0

    def emit(center_xy: np.ndarray, theta: float, ahead: float):
        center = np.array([center_xy[0], center_xy[1], ALTITUDE])
        t2 = center_xy + ahead * _unit(theta)[:2]
        poses.append((center, np.array([t2[0], t2[1], 0.0])))

    def leg(length: int):
        nonlocal pos
        for _ in range(length):
            if len(poses) >= n:
                return
            emit(pos, heading, ahead_leg)
            pos = pos + STEP * _unit(heading)[:2]

    def turn(sign: float):
        nonlocal pos, heading
        corner = pos
        for j in range(1, turn_len + 1):
            if len(poses) >= n:
                return
            phi = heading + sign * (math.pi / 2.0) * j / (turn_len + 1)
            emit(corner + arc_r * _unit(phi)[:2], phi, ahead_turn)
        heading = heading + sign * math.pi / 2.0
        pos = corner + STEP * _unit(heading)[:2]

    while len(poses) < n:
        leg(leg_long)
        turn(left)
        leg(leg_cross)
        turn(left)
        left = -left
    return poses[:n]


_TRAJECTORIES = {"straight": _straight, "sharp_turns": _sharp_turns, "loop": _loop}


def _project_all(R: np.ndarray, C: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pixels (nc, npts, 2) and depths (nc, npts) for all camera/point pairs."""
    d = points[None, :, :] - C[:, None, :]
    p = np.einsum("cij,cbj->cbi", R, d)
    z = p[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = FOCAL * p[..., 0] / z + IMAGE_WIDTH / 2.0
        v = FOCAL * p[..., 1] / z + IMAGE_HEIGHT / 2.0
    return np.stack([u, v], axis=-1), z


def _dlt(R_list, C_list, pixels) -> np.ndarray:
    """Plain DLT without degeneracy/cheirality policing (generator internal)."""
    rows = []
    for R, C, (u, v) in zip(R_list, C_list, pixels):
        xn = (u - IMAGE_WIDTH / 2.0) / FOCAL
        yn = (v - IMAGE_HEIGHT / 2.0) / FOCAL
        P = np.hstack([R, (-R @ C).reshape(3, 1)])
        rows.append(xn * P[2] - P[0])
        rows.append(yn * P[2] - P[1])
    A = np.vstack(rows)
    _, _, vt = np.linalg.svd(A)
    X = vt[-1]
    if abs(X[3]) < 1e-15:
        return np.full(3, np.nan)
    return X[:3] / X[3]


_MIN_SEED_DEPTH = 0.1


def _polish_point(point, cams, R_all, C_all, pixels, iters: int = 10) -> np.ndarray:
    """Gauss-Newton refinement of a triangulated point under fixed poses.

    DLT minimizes an algebraic error; a few damped Gauss-Newton steps on the
    actual reprojection error move the point to its geometric optimum, which
    is what any production triangulator emits. Steps that would push the
    point to or behind an observer's image plane are halved until safe.
    """
    X = point.copy()
    for _ in range(iters):
        JTJ = np.zeros((3, 3))
        JTr = np.zeros(3)
        for j, i in enumerate(cams):
            p = R_all[i] @ (X - C_all[i])
            z = p[2]
            if z <= _MIN_SEED_DEPTH:
                return X
            r = np.array([
                FOCAL * p[0] / z + IMAGE_WIDTH / 2.0 - pixels[j][0],
                FOCAL * p[1] / z + IMAGE_HEIGHT / 2.0 - pixels[j][1],
            ])
            A = np.array([
                [FOCAL / z, 0.0, -FOCAL * p[0] / z**2],
                [0.0, FOCAL / z, -FOCAL * p[1] / z**2],
            ]) @ R_all[i]
            JTJ += A.T @ A
            JTr += A.T @ r
        JTJ[np.arange(3), np.arange(3)] *= 1.0 + 1e-9
        try:
            step = np.linalg.solve(JTJ, -JTr)
        except np.linalg.LinAlgError:
            return X
        if not np.all(np.isfinite(step)):
            return X
        scale = 1.0
        for _halving in range(8):
            cand = X + scale * step
            depths = [(R_all[i] @ (cand - C_all[i]))[2] for i in cams]
            if min(depths) > _MIN_SEED_DEPTH:
                break
            scale *= 0.5
        else:
            return X
        X = X + scale * step
        if np.linalg.norm(scale * step) < 1e-12:
            break
    return X


def _depths_ok(point, cams, R_all, C_all) -> bool:
    if not np.all(np.isfinite(point)):
        return False
    for i in cams:
        if (R_all[i] @ (point - C_all[i]))[2] <= _MIN_SEED_DEPTH:
            return False
    return True


def _reseed_point(cams, R_all, C_all, pixels):
    """Place a point at nominal depth along one observer's pixel ray.

    Tries each observing camera in turn and returns the first seed that has
    comfortable positive depth in every observer, or None if none works.
    """
    for j, i in enumerate(cams):
        u, v = pixels[j]
        d_cam = np.array([
            (u - IMAGE_WIDTH / 2.0) / FOCAL,
            (v - IMAGE_HEIGHT / 2.0) / FOCAL,
            1.0,
        ])
        seed = C_all[i] + R_all[i].T @ (d_cam * ALTITUDE)
        if _depths_ok(seed, cams, R_all, C_all):
            return seed
    return None


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Build a synthetic Dataset per the module docstring.

    Raises:
        InfeasibleConfig: contradictory parameters, or point sampling cannot
            find enough locations visible (with margin) from two cameras.
    """
    rng = np.random.default_rng(config.seed)
    nc = config.n_cameras

    truth_poses = [_look_at(c, t) for c, t in _TRAJECTORIES[config.trajectory](nc)]
    R_true = np.stack([p.rotation_matrix() for p in truth_poses])
    C_true = np.stack([p.center for p in truth_poses])
    targets = np.stack([t for _, t in _TRAJECTORIES[config.trajectory](nc)])

    # Margin keeps noised (and outlier-displaced) pixels inside the frame for
    # typical draws; the visibility test itself uses exact projections.
    margin = 2.0 + 5.0 * config.pixel_noise_sigma
    if config.n_outlier_tracks > 0:
        margin += config.outlier_magnitude
    if margin >= min(IMAGE_WIDTH, IMAGE_HEIGHT) / 2.0:
        raise InfeasibleConfig(
            f"visibility margin {margin:.1f}px exceeds the half image; "
            "reduce noise or outlier magnitude"
        )

    # Rejection-sample ground points near camera look-targets until each has
    # enough margin-visible observers. Two-view tracks leave the depth of a
    # point nearly free under pose error, so rigs with three or more cameras
    # require three observers; a two-camera rig accepts pairs.
    min_observers = 2 if nc == 2 else 3
    points: list[np.ndarray] = []
    visibility: list[np.ndarray] = []
    attempts = 0
    max_attempts = 200 + 60 * config.n_points
    while len(points) < config.n_points:
        if attempts >= max_attempts:
            raise InfeasibleConfig(
                f"only {len(points)}/{config.n_points} points visible from "
                f">= {min_observers} cameras after {attempts} candidates"
            )
        n_batch = min(_BATCH, max_attempts - attempts)
        attempts += n_batch
        anchor = rng.integers(0, nc, size=n_batch)
        offset = rng.uniform(-6.0, 6.0, size=(n_batch, 2))
        candidates = np.zeros((n_batch, 3))
        candidates[:, :2] = targets[anchor][:, :2] + offset

        pixels, z = _project_all(R_true, C_true, candidates)
        visible = (
            (z > 0.1)
            & (pixels[..., 0] >= margin)
            & (pixels[..., 0] < IMAGE_WIDTH - margin)
            & (pixels[..., 1] >= margin)
            & (pixels[..., 1] < IMAGE_HEIGHT - margin)
        )
        # Matching gate: ray to the point must stay within VIEW_CONE_DEG of
        # the anchor camera's ray.
        rays = candidates[None, :, :] - C_true[:, None, :]
        rays = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
        anchor_rays = rays[anchor, np.arange(n_batch)]
        cos_sep = np.einsum("cbi,bi->cb", rays, anchor_rays)
        visible &= cos_sep >= math.cos(math.radians(VIEW_CONE_DEG))
        counts = visible.sum(axis=0)
        for b in range(n_batch):
            if counts[b] >= min_observers and len(points) < config.n_points:
                points.append(candidates[b])
                visibility.append(np.flatnonzero(visible[:, b]))

    cam_width = max(3, len(str(nc - 1)))
    trk_width = max(5, len(str(config.n_points - 1)))
    cam_ids = [f"cam_{i:0{cam_width}d}" for i in range(nc)]
    trk_ids = [f"trk_{i:0{trk_width}d}" for i in range(config.n_points)]

    # Exact projections, then one well-ordered noise draw over all
    # observations (track-major, camera order within a track).
    exact: list[np.ndarray] = []
    for b, cams in enumerate(visibility):
        pix, _ = _project_all(R_true[cams], C_true[cams], points[b][None, :])
        exact.append(pix[:, 0, :])
    n_obs_total = sum(len(v) for v in visibility)
    if config.pixel_noise_sigma > 0:
        noise = rng.normal(0.0, config.pixel_noise_sigma, size=(n_obs_total, 2))
    else:
        noise = np.zeros((n_obs_total, 2))
    obs_pixels = []
    cursor = 0
    for pix in exact:
        obs_pixels.append(pix + noise[cursor : cursor + len(pix)])
        cursor += len(pix)

    # Gross outliers: displace one observation of each chosen track.
    outlier_ids: list[str] = []
    if config.n_outlier_tracks > 0:
        chosen = rng.choice(config.n_points, size=config.n_outlier_tracks, replace=False)
        for b in sorted(chosen):
            which = int(rng.integers(0, len(visibility[b])))
            phi = float(rng.uniform(0.0, 2.0 * math.pi))
            shift = config.outlier_magnitude * np.array([math.cos(phi), math.sin(phi)])
            moved = obs_pixels[b][which] + shift
            if not (0 <= moved[0] < IMAGE_WIDTH and 0 <= moved[1] < IMAGE_HEIGHT):
                moved = obs_pixels[b][which] - shift
            moved = np.clip(moved, 0.0, [IMAGE_WIDTH - 0.5, IMAGE_HEIGHT - 0.5])
            obs_pixels[b] = obs_pixels[b].copy()
            obs_pixels[b][which] = moved
            outlier_ids.append(trk_ids[b])

    # Initial poses: truth, optionally perturbed by an exact-angle rotation
    # about an image-plane axis plus a fraction-of-extent center offset. The
    # tilt heading flips 180 degrees (with jitter) between adjacent cameras,
    # so the pixel-space inconsistency any track sees is close to the full
    # f*delta regardless of which cameras observe it; a common-mode tilt
    # would be absorbed by re-triangulation and test nothing.
    pert = config.pose_perturbation
    extent = float(np.linalg.norm(C_true.max(axis=0) - C_true.min(axis=0)))
    extent = max(extent, 1.0)
    heading_base = rng.uniform(0.0, 2.0 * math.pi)
    heading_jitter = rng.uniform(-math.pi / 6.0, math.pi / 6.0, size=nc)
    trans_dirs = rng.normal(size=(nc, 3))
    initial_poses: list[Pose] = []
    for i, pose in enumerate(truth_poses):
        if pert.rotation_deg == 0 and pert.translation_frac == 0:
            initial_poses.append(pose)
            continue
        phi = heading_base + i * math.pi + heading_jitter[i]
        axis_cam = np.array([math.cos(phi), math.sin(phi), 0.0])
        dq = quat_from_rotvec(axis_cam * math.radians(pert.rotation_deg))
        direction = trans_dirs[i] / np.linalg.norm(trans_dirs[i])
        initial_poses.append(
            Pose(
                quat_multiply(dq, pose.rotation),
                pose.center + direction * (pert.translation_frac * extent),
            )
        )

    intr = Intrinsics(
        fx=FOCAL, fy=FOCAL, cx=IMAGE_WIDTH / 2.0, cy=IMAGE_HEIGHT / 2.0,
        width=IMAGE_WIDTH, height=IMAGE_HEIGHT,
    )
    cameras = tuple(
        Camera(
            id=cam_ids[i],
            image_ref=f"images/{cam_ids[i]}.png",
            intrinsics=intr,
            pose_initial=initial_poses[i],
        )
        for i in range(nc)
    )

    # Initial points: triangulated from the *initial* poses and the stored
    # (noised, possibly outlier-bearing) observations. Under pose perturbation
    # a low-parallax pair can triangulate behind a camera; such points are
    # re-seeded at nominal scene depth along an observing ray so the initial
    # state is always a well-posed optimization input.
    R_init = np.stack([p.rotation_matrix() for p in initial_poses])
    C_init = np.stack([p.center for p in initial_poses])
    tracks = []
    for b in range(config.n_points):
        cams = visibility[b]
        point_init = _dlt([R_init[i] for i in cams], [C_init[i] for i in cams], obs_pixels[b])
        if not _depths_ok(point_init, cams, R_init, C_init):
            point_init = _reseed_point(cams, R_init, C_init, obs_pixels[b])
            if point_init is None:
                raise InfeasibleConfig(f"triangulation failed for {trk_ids[b]}")
        point_init = _polish_point(point_init, cams, R_init, C_init, obs_pixels[b])
        obs = tuple(
            Observation(camera_id=cam_ids[i], pixel=obs_pixels[b][j])
            for j, i in enumerate(cams)
        )
        tracks.append(Track(id=trk_ids[b], observations=obs, point_initial=point_init))

    truth = GroundTruth(
        poses={cam_ids[i]: truth_poses[i] for i in range(nc)},
        points={trk_ids[b]: points[b] for b in range(config.n_points)},
        outlier_track_ids=tuple(outlier_ids),
    )
    return Dataset(
        cameras=cameras,
        tracks=tuple(tracks),
        name=f"synthetic-{config.trajectory}-seed{config.seed}",
        ground_truth=truth,
    )
