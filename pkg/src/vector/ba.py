"""Levenberg-Marquardt bundle adjustment with Schur-complement normal equations.

Minimizes the total reprojection error (sum of squared residual norms) over
camera poses and scene points. Parameterization per iteration: 6 values per
free camera (an axis-angle rotation increment composed onto the stored
quaternion, plus a camera-center delta) and 3 per point. Damping follows the
classic Marquardt schedule: lambda scales diag(JtJ) and moves by fixed
up/down factors on step rejection/acceptance.

Gauge handling: with ``fix_first_camera`` (the default) the first camera's
six degrees of freedom are excluded from the solve, so its pose survives
bit-for-bit; the remaining scale freedom is controlled by damping, and any
accuracy scoring should go through ``align_similarity``.

Everything here is deterministic: observation order is dataset order, all
reductions are fixed-order numpy sums, and repeated runs on the same input
produce identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .dataset import Dataset
from .errors import (
    Cancelled,
    CheiralityViolation,
    DegenerateConfiguration,
    EmptyProblem,
    MissingFinalState,
    NumericalFailure,
    SingularSystem,
)
from .geometry import (
    CHEIRALITY_EPS,
    Pose,
    ResidualRecord,
    quat_from_rotvec,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    residuals_from_arrays,
)

__all__ = [
    "BAConfig",
    "BAResult",
    "BAState",
    "BlockJacobian",
    "run_ba",
    "jacobian",
    "solve_normal_equations",
    "align_similarity",
    "evaluate_residuals",
    "result_from_final_state",
]

LAMBDA_MAX = 1e12

# Pair-block chunk size for the Schur reduction; bounds peak memory at scale.
_PAIR_CHUNK = 150_000

IterCallback = Callable[[int, float], None]
CancelCheck = Callable[[], bool]


@dataclass(frozen=True)
class BAConfig:
    max_iterations: int = 100
    initial_lambda: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    gradient_tol: float = 1e-10
    relative_cost_tol: float = 1e-12
    fix_first_camera: bool = True

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.initial_lambda < 0:
            raise ValueError("initial_lambda must be >= 0")
        if self.lambda_up <= 1 or self.lambda_down <= 1:
            raise ValueError("lambda factors must be > 1")
        if self.gradient_tol <= 0 or self.relative_cost_tol <= 0:
            raise ValueError("tolerances must be > 0")

    @staticmethod
    def from_dict(d: dict) -> "BAConfig":
        return BAConfig(**d)

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "initial_lambda": self.initial_lambda,
            "lambda_up": self.lambda_up,
            "lambda_down": self.lambda_down,
            "gradient_tol": self.gradient_tol,
            "relative_cost_tol": self.relative_cost_tol,
            "fix_first_camera": self.fix_first_camera,
        }


@dataclass(frozen=True, eq=False)
class BAState:
    """Optimization variables: one pose per camera, one 3D point per track."""

    poses: tuple[Pose, ...]
    points: np.ndarray  # (n_tracks, 3)


@dataclass(frozen=True, eq=False)
class BlockJacobian:
    """Per-observation residual derivatives, in dataset observation order.

    Row i holds the 2x6 block for camera cam_idx[i] (columns: axis-angle
    rotation increment, then center delta) and the 2x3 block for point
    trk_idx[i]; blocks for every other camera/point are structurally zero.
    """

    cam_idx: np.ndarray  # (n,)
    trk_idx: np.ndarray  # (n,)
    cam_blocks: np.ndarray  # (n, 2, 6)
    point_blocks: np.ndarray  # (n, 2, 3)
    n_cameras: int
    n_points: int


@dataclass(frozen=True, eq=False)
class BAResult:
    poses_final: tuple[Pose, ...]
    points_final: np.ndarray  # (n_tracks, 3), dataset track order
    cost_trace: tuple[float, ...]
    converged: bool
    termination_reason: str  # gradient | relative_cost | max_iterations | loaded
    residuals_initial: tuple[ResidualRecord, ...]
    residuals_final: tuple[ResidualRecord, ...]

    @property
    def iterations(self) -> int:
        return len(self.cost_trace) - 1

    @property
    def initial_cost(self) -> float:
        return self.cost_trace[0]

    @property
    def final_cost(self) -> float:
        return self.cost_trace[-1]

    def rms(self, kind: str = "final") -> float:
        records = self.residuals_final if kind == "final" else self.residuals_initial
        if not records:
            return 0.0
        return float(math.sqrt(sum(r.length**2 for r in records) / len(records)))

    def apply_to(self, dataset: Dataset) -> Dataset:
        """Dataset copy with pose_final/point_final filled from this result."""
        from dataclasses import replace

        cameras = tuple(
            replace(cam, pose_final=pose)
            for cam, pose in zip(dataset.cameras, self.poses_final)
        )
        tracks = tuple(
            replace(trk, point_final=self.points_final[i])
            for i, trk in enumerate(dataset.tracks)
        )
        return Dataset(
            cameras=cameras, tracks=tracks, name=dataset.name, ground_truth=dataset.ground_truth
        )


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------

class _Problem:
    """Flattened observation arrays for vectorized evaluation."""

    def __init__(self, dataset: Dataset):
        cams = dataset.cameras
        tracks = dataset.tracks
        cam_index = {c.id: i for i, c in enumerate(cams)}
        obs_cam, obs_trk, obs_px = [], [], []
        for t, track in enumerate(tracks):
            if track.point_initial is None:
                raise ValueError(
                    f"track {track.id!r} has no initial point; triangulate before optimizing"
                )
            for obs in track.observations:
                obs_cam.append(cam_index[obs.camera_id])
                obs_trk.append(t)
                obs_px.append(obs.pixel)
        if not obs_cam or not cams:
            raise EmptyProblem("no observations to optimize")
        self.dataset = dataset
        self.n_cameras = len(cams)
        self.n_points = len(tracks)
        self.obs_cam = np.asarray(obs_cam, dtype=np.intp)
        self.obs_trk = np.asarray(obs_trk, dtype=np.intp)
        self.obs_px = np.asarray(obs_px, dtype=float)
        self.fx = np.array([c.intrinsics.fx for c in cams])
        self.fy = np.array([c.intrinsics.fy for c in cams])
        self.cx = np.array([c.intrinsics.cx for c in cams])
        self.cy = np.array([c.intrinsics.cy for c in cams])
        self.cam_ids = [c.id for c in cams]
        self.trk_ids = [t.id for t in tracks]
        self.rec_cam_ids = [self.cam_ids[i] for i in self.obs_cam]
        self.rec_trk_ids = [self.trk_ids[i] for i in self.obs_trk]

    def p_cam(self, R: np.ndarray, C: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Camera-frame coordinates of each observation's point, (n, 3)."""
        d = X[self.obs_trk] - C[self.obs_cam]
        return np.einsum("nij,nj->ni", R[self.obs_cam], d)

    def residual_vectors(self, p: np.ndarray) -> np.ndarray:
        z = p[:, 2]
        u = self.fx[self.obs_cam] * p[:, 0] / z + self.cx[self.obs_cam]
        v = self.fy[self.obs_cam] * p[:, 1] / z + self.cy[self.obs_cam]
        return np.stack([u, v], axis=1) - self.obs_px


def _state_arrays(state: BAState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    R = np.stack([p.rotation_matrix() for p in state.poses])
    C = np.stack([p.center for p in state.poses])
    X = np.asarray(state.points, dtype=float)
    return R, C, X


# ---------------------------------------------------------------------------
# Jacobian
# ---------------------------------------------------------------------------

def _blocks(problem: _Problem, R: np.ndarray, C: np.ndarray, X: np.ndarray):
    """Residual vectors plus per-observation Jacobian blocks.

    Raises CheiralityViolation if any observed point sits behind its camera.
    """
    p = problem.p_cam(R, C, X)
    z = p[:, 2]
    if np.any(z <= CHEIRALITY_EPS):
        bad = int(np.argmin(z))
        raise CheiralityViolation(
            f"point {problem.trk_ids[problem.obs_trk[bad]]!r} behind camera "
            f"{problem.cam_ids[problem.obs_cam[bad]]!r} (depth {z[bad]:.3e})"
        )
    r = problem.residual_vectors(p)

    n = len(z)
    fx = problem.fx[problem.obs_cam]
    fy = problem.fy[problem.obs_cam]
    inv_z = 1.0 / z
    # A = d(pixel)/d(p_cam), shape (n, 2, 3)
    A = np.zeros((n, 2, 3))
    A[:, 0, 0] = fx * inv_z
    A[:, 0, 2] = -fx * p[:, 0] * inv_z**2
    A[:, 1, 1] = fy * inv_z
    A[:, 1, 2] = -fy * p[:, 1] * inv_z**2

    # dp/d(rotation increment) = -[p]x
    skew = np.zeros((n, 3, 3))
    skew[:, 0, 1] = -p[:, 2]
    skew[:, 0, 2] = p[:, 1]
    skew[:, 1, 0] = p[:, 2]
    skew[:, 1, 2] = -p[:, 0]
    skew[:, 2, 0] = -p[:, 1]
    skew[:, 2, 1] = p[:, 0]

    Rn = R[problem.obs_cam]
    AR = np.einsum("nij,njk->nik", A, Rn)  # also the point block
    cam_blocks = np.empty((n, 2, 6))
    cam_blocks[:, :, :3] = -np.einsum("nij,njk->nik", A, skew)
    cam_blocks[:, :, 3:] = -AR
    return r, cam_blocks, AR


def jacobian(dataset: Dataset, state: BAState) -> BlockJacobian:
    """Analytic residual derivatives at ``state``, one block pair per observation.

    Camera columns are ordered (rotation increment xyz, center xyz); blocks
    for cameras/points an observation does not involve are absent by
    construction (that is the sparsity pattern LM exploits).
    """
    problem = _Problem(dataset)
    R, C, X = _state_arrays(state)
    _, cam_blocks, point_blocks = _blocks(problem, R, C, X)
    return BlockJacobian(
        cam_idx=problem.obs_cam,
        trk_idx=problem.obs_trk,
        cam_blocks=cam_blocks,
        point_blocks=point_blocks,
        n_cameras=problem.n_cameras,
        n_points=problem.n_points,
    )


# ---------------------------------------------------------------------------
# Normal equations via Schur complement
# ---------------------------------------------------------------------------

def _track_pairs(trk_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All ordered observation pairs (a, b) sharing a track, diagonal included."""
    order = np.argsort(trk_idx, kind="stable")
    sorted_trk = trk_idx[order]
    boundaries = np.flatnonzero(np.diff(sorted_trk)) + 1
    groups = np.split(order, boundaries)
    pa, pb = [], []
    for g in groups:
        m = len(g)
        pa.append(np.repeat(g, m))
        pb.append(np.tile(g, m))
    return np.concatenate(pa), np.concatenate(pb)


def solve_normal_equations(
    jac: BlockJacobian,
    residuals: np.ndarray,
    lam: float,
    *,
    fixed_cameras: Sequence[int] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Solve (JtJ + lam*diag(JtJ)) delta = -Jt r by point-block elimination.

    Returns (delta_cameras (n_cameras, 6), delta_points (n_points, 3)); rows
    for fixed cameras are zero. The point blocks are eliminated first (Schur
    complement), leaving a dense reduced camera system, then points are
    recovered by back-substitution.

    Raises:
        SingularSystem: a point block or the reduced camera system is not
            (numerically) positive definite.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    r = np.asarray(residuals, dtype=float).reshape(-1, 2)
    n = len(r)
    cam_idx, trk_idx = jac.cam_idx, jac.trk_idx
    Jc, Jp = jac.cam_blocks, jac.point_blocks
    nc, npt = jac.n_cameras, jac.n_points

    fixed = np.zeros(nc, dtype=bool)
    for i in fixed_cameras:
        fixed[i] = True
    free_of = -np.ones(nc, dtype=np.intp)
    free_of[~fixed] = np.arange(int((~fixed).sum()))
    nf = int((~fixed).sum())
    if nf == 0 and npt == 0:
        raise SingularSystem("nothing to solve: all parameters fixed")

    # Per-camera and per-point Gauss-Newton blocks, damped on the diagonal.
    U = np.zeros((nc, 6, 6))
    np.add.at(U, cam_idx, np.einsum("nki,nkj->nij", Jc, Jc))
    V = np.zeros((npt, 3, 3))
    np.add.at(V, trk_idx, np.einsum("nki,nkj->nij", Jp, Jp))
    bc = np.zeros((nc, 6))
    np.add.at(bc, cam_idx, -np.einsum("nki,nk->ni", Jc, r))
    bp = np.zeros((npt, 3))
    np.add.at(bp, trk_idx, -np.einsum("nki,nk->ni", Jp, r))

    di = np.arange(6)
    U[:, di, di] *= 1.0 + lam
    dj = np.arange(3)
    V[:, dj, dj] *= 1.0 + lam

    try:
        V_inv = np.linalg.inv(V)
    except np.linalg.LinAlgError:
        raise SingularSystem("singular point block in normal equations") from None
    if not np.all(np.isfinite(V_inv)):
        raise SingularSystem("singular point block in normal equations")

    # W_a = Jc_a^T Jp_a (6x3 per observation); Y_a = W_a V^{-1}.
    W = np.einsum("nki,nkj->nij", Jc, Jp)
    Y = np.einsum("nij,njk->nik", W, V_inv[trk_idx])

    # Reduced camera system S dc = rhs.
    S = np.zeros((nf, nf, 6, 6))
    rhs = bc[~fixed].copy()
    contrib = np.einsum("nij,nj->ni", Y, bp[trk_idx])
    keep = ~fixed[cam_idx]
    np.add.at(rhs, free_of[cam_idx[keep]], -contrib[keep])

    pa, pb = _track_pairs(trk_idx)
    pair_keep = ~fixed[cam_idx[pa]] & ~fixed[cam_idx[pb]]
    pa, pb = pa[pair_keep], pb[pair_keep]
    for lo in range(0, len(pa), _PAIR_CHUNK):
        sl = slice(lo, lo + _PAIR_CHUNK)
        blocks = np.einsum("nij,nkj->nik", Y[pa[sl]], W[pb[sl]])
        np.add.at(S, (free_of[cam_idx[pa[sl]]], free_of[cam_idx[pb[sl]]]), -blocks)

    ui = free_of[np.flatnonzero(~fixed)]
    S[ui, ui] += U[~fixed]

    S2 = S.transpose(0, 2, 1, 3).reshape(6 * nf, 6 * nf)
    try:
        chol = scipy.linalg.cho_factor(S2, lower=True, check_finite=False)
        dc_free = scipy.linalg.cho_solve(chol, rhs.reshape(-1), check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"reduced camera system not positive definite: {exc}") from None
    dc = np.zeros((nc, 6))
    dc[~fixed] = dc_free.reshape(nf, 6)

    # Back-substitution for the points: dp = V^{-1} (bp - W^T dc).
    acc = bp.copy()
    np.add.at(acc, trk_idx, -np.einsum("nji,nj->ni", W, dc[cam_idx]))
    dp = np.einsum("tij,tj->ti", V_inv, acc)
    return dc, dp


# ---------------------------------------------------------------------------
# The LM loop
# ---------------------------------------------------------------------------

def _apply_step(
    poses: tuple[Pose, ...], X: np.ndarray, dc: np.ndarray, dp: np.ndarray
) -> tuple[tuple[Pose, ...], np.ndarray]:
    new_poses = []
    for i, pose in enumerate(poses):
        if not np.any(dc[i]):
            new_poses.append(pose)
            continue
        q = quat_normalize(quat_multiply(quat_from_rotvec(dc[i, :3]), pose.rotation))
        new_poses.append(Pose(q, pose.center + dc[i, 3:]))
    return tuple(new_poses), X + dp


def run_ba(
    dataset: Dataset,
    config: BAConfig | None = None,
    *,
    on_iteration: IterCallback | None = None,
    should_cancel: CancelCheck | None = None,
) -> BAResult:
    """Minimize total reprojection error over poses and points.

    Every accepted step strictly decreases the cost; the trace starts at the
    initial cost and gains one entry per accepted iteration. Termination:
    small gradient, small relative cost change (also reported when damping
    escalation stalls with no descent available), or the iteration cap.

    ``on_iteration(iteration, cost)`` observes progress; ``should_cancel()``
    is polled once per iteration and aborts with Cancelled when true.

    Raises:
        EmptyProblem: no cameras or no observations.
        CheiralityViolation: a point starts behind a camera (during the
            iteration, steps causing this are simply rejected).
        NumericalFailure: normal equations unsolvable even at lambda = 1e12.
        Cancelled: the cancel hook fired.
    """
    config = config or BAConfig()
    problem = _Problem(dataset)
    poses = tuple(c.pose_initial for c in dataset.cameras)
    X = np.stack([t.point_initial for t in dataset.tracks])

    fixed: tuple[int, ...] = (0,) if config.fix_first_camera else ()
    fixed_mask = np.zeros(problem.n_cameras, dtype=bool)
    for i in fixed:
        fixed_mask[i] = True

    R = np.stack([p.rotation_matrix() for p in poses])
    C = np.stack([p.center for p in poses])
    r, cam_blocks, point_blocks = _blocks(problem, R, C, X)
    cost = float(np.sum(r * r))
    residuals_initial = tuple(
        residuals_from_arrays(problem.rec_cam_ids, problem.rec_trk_ids, r, "initial")
    )

    trace = [cost]
    lam = config.initial_lambda
    converged = False
    reason = "max_iterations"

    for iteration in range(config.max_iterations):
        if should_cancel is not None and should_cancel():
            raise Cancelled(f"cancelled at iteration {iteration}")

        # A cost at or below the relative tolerance is zero for all practical
        # purposes (sub-microsecond pixel errors); stop instead of polishing
        # floating-point noise.
        if cost <= config.relative_cost_tol:
            converged, reason = True, "relative_cost"
            break

        # Gradient over free parameters only (fixed cameras have no columns).
        g_cam = np.zeros((problem.n_cameras, 6))
        np.add.at(g_cam, problem.obs_cam, np.einsum("nki,nk->ni", cam_blocks, r))
        g_pt = np.zeros((problem.n_points, 3))
        np.add.at(g_pt, problem.obs_trk, np.einsum("nki,nk->ni", point_blocks, r))
        g_inf = max(
            float(np.abs(g_cam[~fixed_mask]).max(initial=0.0)),
            float(np.abs(g_pt).max(initial=0.0)),
        )
        if g_inf <= config.gradient_tol:
            converged, reason = True, "gradient"
            break

        jac = BlockJacobian(
            cam_idx=problem.obs_cam,
            trk_idx=problem.obs_trk,
            cam_blocks=cam_blocks,
            point_blocks=point_blocks,
            n_cameras=problem.n_cameras,
            n_points=problem.n_points,
        )

        accepted = False
        stalled = False
        while True:
            try:
                dc, dp = solve_normal_equations(jac, r, lam, fixed_cameras=fixed)
                new_poses, new_X = _apply_step(poses, X, dc, dp)
                R_new = np.stack([p.rotation_matrix() for p in new_poses])
                C_new = np.stack([p.center for p in new_poses])
                r_new, cam_blocks_new, point_blocks_new = _blocks(problem, R_new, C_new, new_X)
                new_cost = float(np.sum(r_new * r_new))
                step_ok = new_cost < cost
            except SingularSystem:
                if lam >= LAMBDA_MAX:
                    raise NumericalFailure(
                        f"normal equations unsolvable at lambda {lam:.1e}"
                    ) from None
                step_ok = False
            except CheiralityViolation:
                # A step that pushes points behind cameras is just a bad step.
                step_ok = False

            if step_ok:
                poses, X = new_poses, new_X
                r, cam_blocks, point_blocks = r_new, cam_blocks_new, point_blocks_new
                prev_cost, cost = cost, new_cost
                lam = max(lam / config.lambda_down, 1e-15)
                accepted = True
                break
            if lam >= LAMBDA_MAX:
                stalled = True
                break
            lam = config.lambda_up * lam if lam > 0 else 1e-12

        if stalled:
            # Solvable system but no strict descent at maximum damping: the
            # cost cannot be improved further; report relative-cost stop.
            converged, reason = True, "relative_cost"
            break
        if accepted:
            trace.append(cost)
            if on_iteration is not None:
                on_iteration(iteration + 1, cost)
            if abs(prev_cost - cost) <= config.relative_cost_tol * max(prev_cost, 1e-300):
                converged, reason = True, "relative_cost"
                break

    residuals_final = tuple(
        residuals_from_arrays(problem.rec_cam_ids, problem.rec_trk_ids, r, "final")
    )
    return BAResult(
        poses_final=poses,
        points_final=X,
        cost_trace=tuple(trace),
        converged=converged,
        termination_reason=reason,
        residuals_initial=residuals_initial,
        residuals_final=residuals_final,
    )


def result_from_final_state(dataset: Dataset) -> BAResult:
    """BAResult view over final poses/points already stored on a dataset.

    No optimization runs: residuals are evaluated from the stored states and
    the cost trace holds just the initial and final costs, with the
    termination reason set to "loaded". This lets reporting and ranking code
    consume written-back result files without re-solving.

    Raises:
        MissingFinalState: any camera or track lacks a final state.
    """
    residuals_initial = tuple(evaluate_residuals(dataset, "initial"))
    residuals_final = tuple(evaluate_residuals(dataset, "final"))
    cost_initial = float(sum(r.length**2 for r in residuals_initial))
    cost_final = float(sum(r.length**2 for r in residuals_final))
    return BAResult(
        poses_final=tuple(c.pose_final for c in dataset.cameras),
        points_final=np.stack([t.point_final for t in dataset.tracks]),
        cost_trace=(cost_initial, cost_final),
        converged=True,
        termination_reason="loaded",
        residuals_initial=residuals_initial,
        residuals_final=residuals_final,
    )


def evaluate_residuals(dataset: Dataset, kind: str = "initial") -> list[ResidualRecord]:
    """Vectorized residual records over every observation, for one kind."""
    problem = _Problem(dataset)
    if kind == "initial":
        poses = [c.pose_initial for c in dataset.cameras]
        X = np.stack([t.point_initial for t in dataset.tracks])
    elif kind == "final":
        if any(c.pose_final is None for c in dataset.cameras) or any(
            t.point_final is None for t in dataset.tracks
        ):
            raise MissingFinalState("dataset has no complete final state")
        poses = [c.pose_final for c in dataset.cameras]
        X = np.stack([t.point_final for t in dataset.tracks])
    else:
        raise ValueError(f"kind must be 'initial' or 'final', got {kind!r}")
    R = np.stack([p.rotation_matrix() for p in poses])
    C = np.stack([p.center for p in poses])
    p = problem.p_cam(R, C, X)
    z = p[:, 2]
    if np.any(z <= CHEIRALITY_EPS):
        bad = int(np.argmin(z))
        raise CheiralityViolation(
            f"point {problem.trk_ids[problem.obs_trk[bad]]!r} behind camera "
            f"{problem.cam_ids[problem.obs_cam[bad]]!r}"
        )
    r = problem.residual_vectors(p)
    return residuals_from_arrays(problem.rec_cam_ids, problem.rec_trk_ids, r, kind)


# ---------------------------------------------------------------------------
# Similarity alignment (gauge-invariant accuracy scoring)
# ---------------------------------------------------------------------------

def align_similarity(
    estimated: np.ndarray, truth: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Least-squares similarity transform mapping estimated points onto truth.

    Returns (scale, rotation, translation) minimizing
    sum ||s R p + t - q||^2 over correspondences p -> q.

    Raises:
        DegenerateConfiguration: fewer than 3 correspondences, or the points
            are (near-)collinear/coincident so the rotation is not unique.
    """
    p = np.asarray(estimated, dtype=float).reshape(-1, 3)
    q = np.asarray(truth, dtype=float).reshape(-1, 3)
    if p.shape != q.shape:
        raise ValueError("point sets must have matching shapes")
    n = len(p)
    if n < 3:
        raise DegenerateConfiguration(f"need >= 3 correspondences, got {n}")
    mu_p = p.mean(axis=0)
    mu_q = q.mean(axis=0)
    pc = p - mu_p
    qc = q - mu_q
    var_p = float(np.sum(pc * pc)) / n
    if var_p <= 0:
        raise DegenerateConfiguration("estimated points are coincident")
    cov = (qc.T @ pc) / n
    U, d, Vt = np.linalg.svd(cov)
    if d[1] <= max(d[0] * 1e-12, 1e-300):
        raise DegenerateConfiguration("points are (near-)collinear; rotation not unique")
    sign = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        sign[2] = -1.0
    Rm = U @ np.diag(sign) @ Vt
    scale = float(np.sum(d * sign)) / var_p
    t = mu_q - scale * (Rm @ mu_p)
    return scale, Rm, t
