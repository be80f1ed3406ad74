"""Shared builders for synthetic cameras, poses, and tracks used across tests."""

from __future__ import annotations

import numpy as np
import pytest

from vector.dataset import Dataset
from vector.geometry import Camera, Intrinsics, Observation, Pose, Track, quat_from_rotvec


DEFAULT_INTRINSICS = Intrinsics(fx=600.0, fy=600.0, cx=400.0, cy=300.0, width=800, height=600)


def make_pose(rng: np.random.Generator | None = None, *, center=None, rotvec=None) -> Pose:
    """A pose with the given (or randomly drawn) center and axis-angle rotation."""
    if rng is not None:
        if center is None:
            center = rng.uniform(-5, 5, 3)
        if rotvec is None:
            rotvec = rng.uniform(-0.5, 0.5, 3)
    return Pose(quat_from_rotvec(np.zeros(3) if rotvec is None else rotvec),
                np.zeros(3) if center is None else np.asarray(center, dtype=float))


def make_camera(cam_id: str, pose: Pose, intrinsics: Intrinsics = DEFAULT_INTRINSICS) -> Camera:
    return Camera(
        id=cam_id,
        image_ref=f"images/{cam_id}.png",
        intrinsics=intrinsics,
        pose_initial=pose,
    )


def looking_down_pose(center) -> Pose:
    """Camera at `center` looking along -z of the world... i.e. straight down.

    World frame: z up. The camera z axis (viewing direction) points to -z,
    camera x along world +x, camera y along world -y (right-handed).
    """
    R = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    return Pose.from_matrix(R, np.asarray(center, dtype=float))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def down_rig() -> list[Camera]:
    """Five cameras 10 units above the ground plane, looking straight down."""
    cams = []
    for i in range(5):
        pose = looking_down_pose([2.0 * i, 0.5 * i, 10.0])
        cams.append(make_camera(f"cam_{i:03d}", pose))
    return cams


def observe(cameras: list[Camera], point, track_id: str, noise=None, rng=None) -> Track:
    """Build a track by projecting `point` into every camera (optionally noised)."""
    from vector.geometry import project

    obs = []
    for cam in cameras:
        px = project(cam, cam.pose_initial, point)
        if noise and rng is not None:
            px = px + rng.normal(0.0, noise, 2)
        obs.append(Observation(camera_id=cam.id, pixel=px))
    return Track(id=track_id, observations=tuple(obs), point_initial=np.asarray(point, dtype=float))


def hostile_id(rng, i: int) -> str:
    """Ids that exercise attribute escaping: quotes, angle brackets, unicode."""
    pool = ['"', "'", "<", ">", "&", " ", "µ", "Ω", "a", "Z", "9", "_", "\t"]
    core = "".join(rng.choice(pool) for _ in range(rng.integers(1, 6)))
    return f"id{i}:{core}"


def random_dataset(rng, n_cams: int = 4, n_trks: int = 6) -> Dataset:
    """A structurally arbitrary dataset: hostile ids, optional finals, any poses."""
    cams = []
    for i in range(n_cams):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        final = None
        if rng.random() < 0.5:
            qf = rng.normal(size=4)
            qf /= np.linalg.norm(qf)
            final = Pose(qf, rng.uniform(-9, 9, 3))
        cams.append(
            Camera(
                id=hostile_id(rng, i),
                image_ref=f"img/{i}<&>.png",
                intrinsics=Intrinsics(
                    fx=float(rng.uniform(100, 900)),
                    fy=float(rng.uniform(100, 900)),
                    cx=float(rng.uniform(-10, 810)),
                    cy=float(rng.uniform(-10, 610)),
                    width=int(rng.integers(1, 2000)),
                    height=int(rng.integers(1, 2000)),
                ),
                pose_initial=Pose(q, rng.uniform(-9, 9, 3)),
                pose_final=final,
            )
        )
    trks = []
    for i in range(n_trks):
        k = int(rng.integers(2, n_cams + 1))
        members = rng.choice(n_cams, size=k, replace=False)
        obs = tuple(
            Observation(camera_id=cams[j].id, pixel=rng.uniform(-1e3, 1e3, 2)) for j in members
        )
        trks.append(
            Track(
                id=f"t{i}|{hostile_id(rng, i)}",
                observations=obs,
                point_initial=rng.uniform(-50, 50, 3),
                point_final=rng.uniform(-50, 50, 3) if rng.random() < 0.5 else None,
            )
        )
    return Dataset(cameras=tuple(cams), tracks=tuple(trks))
