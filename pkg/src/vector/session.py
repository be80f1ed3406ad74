"""Edit sessions: the identify, delete, re-run, compare loop.

A Session wraps a base dataset with an append-only edit log. The effective
dataset is always the pure replay of that log over the base, never an
in-place mutation, so a persisted session reloads to exactly the state it
was saved in, and every recorded optimization run can be reproduced bit for
bit from its (edit position, solver config) pair.

Edits come in three kinds. ``delete_track`` removes one track; cameras it
referenced stay in place even if nothing observes them any more (a warning
callback reports that). ``delete_camera`` removes a camera together with
all its observations; tracks left with fewer than two observations cannot
be triangulated and are cascade-removed (also reported). ``restore`` undoes
a prior deletion that is still in force, bringing cascade-removed tracks
back with it.

Runs are append-only bookkeeping: each records the content digest of the
dataset it optimized, summary costs, and enough provenance to recompute the
full result on demand after a reload. Nothing is recorded for a run that
fails or is cancelled midway.
"""

from __future__ import annotations

import json
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from .ba import BAConfig, BAResult, CancelCheck, IterCallback, result_from_final_state, run_ba
from .dataset import Dataset, WarnFn, content_digest, parse_cameras, parse_tracks
from .errors import (
    AlreadyDeleted,
    CorruptSessionFile,
    TooFewCamerasRemaining,
    UnknownId,
    UnknownRun,
)
from .geometry import triangulate

__all__ = [
    "EditOp",
    "Run",
    "SlopeSummary",
    "ComparisonReport",
    "Session",
    "open_session",
    "effective_dataset",
    "delete_track",
    "delete_camera",
    "restore",
    "rerun",
    "run_dataset",
    "run_result",
    "current_result",
    "compare",
    "save_session",
    "load_session",
]

EDIT_KINDS = ("delete_track", "delete_camera", "restore")


@dataclass(frozen=True)
class EditOp:
    """One entry of the edit log. ``timestamp`` is a monotonic counter."""

    kind: str
    target_id: str
    timestamp: int

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise ValueError(f"edit kind must be one of {EDIT_KINDS}, got {self.kind!r}")
        if not self.target_id:
            raise ValueError("edit target_id must be non-empty")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target_id": self.target_id, "timestamp": self.timestamp}

    @staticmethod
    def from_dict(d: dict) -> "EditOp":
        return EditOp(kind=d["kind"], target_id=d["target_id"], timestamp=int(d["timestamp"]))


@dataclass(frozen=True)
class Run:
    """Metadata for one recorded optimization.

    ``edit_index`` is the edit-log length at run time; replaying that prefix
    reproduces the exact dataset the run optimized (checked against
    ``digest`` on recomputation).
    """

    run_id: str
    edit_index: int
    digest: str
    config: BAConfig
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    termination_reason: str
    cost_trace: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.run_id,
            "edit_index": self.edit_index,
            "digest": self.digest,
            "config": self.config.to_dict(),
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "iterations": self.iterations,
            "converged": self.converged,
            "termination_reason": self.termination_reason,
            "cost_trace": list(self.cost_trace),
        }

    @staticmethod
    def from_dict(d: dict) -> "Run":
        return Run(
            run_id=d["id"],
            edit_index=int(d["edit_index"]),
            digest=d["digest"],
            config=BAConfig.from_dict(d["config"]),
            initial_cost=float(d["initial_cost"]),
            final_cost=float(d["final_cost"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            termination_reason=d["termination_reason"],
            cost_trace=tuple(float(c) for c in d["cost_trace"]),
        )


@dataclass(frozen=True)
class SlopeSummary:
    """Pre/post RMS of one track's (or image's) shared observations."""

    id: str
    rms_a: float
    rms_b: float

    def to_dict(self) -> dict:
        return {"id": self.id, "rms_a": self.rms_a, "rms_b": self.rms_b}


@dataclass(frozen=True)
class ComparisonReport:
    """Paired comparison of two runs over their shared observations.

    Only observation keys (camera_id, track_id) present in both runs' final
    residuals enter the paired statistics; removed/added id lists account
    for everything else. Deltas are b minus a, so a negative delta_rms means
    run_b fits the shared observations better.
    """

    run_a: str
    run_b: str
    paired_observations: int
    delta_total_error: float
    delta_rms: float
    track_slopes: tuple[SlopeSummary, ...]
    image_slopes: tuple[SlopeSummary, ...]
    removed_track_ids: tuple[str, ...]
    added_track_ids: tuple[str, ...]
    removed_camera_ids: tuple[str, ...]
    added_camera_ids: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "run_a": self.run_a,
            "run_b": self.run_b,
            "paired_observations": self.paired_observations,
            "delta_total_error": self.delta_total_error,
            "delta_rms": self.delta_rms,
            "track_slopes": [s.to_dict() for s in self.track_slopes],
            "image_slopes": [s.to_dict() for s in self.image_slopes],
            "removed_track_ids": list(self.removed_track_ids),
            "added_track_ids": list(self.added_track_ids),
            "removed_camera_ids": list(self.removed_camera_ids),
            "added_camera_ids": list(self.added_camera_ids),
        }


class Session:
    """Mutable editing state around an immutable base dataset.

    Single-writer: callers running edits or reruns from multiple threads
    must serialize them (the HTTP layer holds a lock). Reading recorded
    runs is safe concurrently.
    """

    def __init__(self, base_dataset: Dataset, *, cameras_path: str = "", tracks_path: str = ""):
        self.base_dataset = base_dataset
        self.cameras_path = cameras_path
        self.tracks_path = tracks_path
        self.edit_log: list[EditOp] = []
        self.runs: list[Run] = []
        self._base_digest: str | None = None
        self._results: dict[str, BAResult] = {}
        self._cache_key = -1
        self._cache_value: Dataset | None = None

    @property
    def base_digest(self) -> str:
        # Lazy: programmatic datasets may lack initial points until the first
        # rerun triangulates them, and serialization needs those points.
        if self._base_digest is None:
            self._base_digest = content_digest(self.base_dataset)
        return self._base_digest


def open_session(cameras_path: str, tracks_path: str, *, on_warning: WarnFn | None = None) -> Session:
    """Session over the dataset parsed from a cameras/tracks file pair."""
    cameras = parse_cameras(cameras_path, on_warning=on_warning)
    tracks = parse_tracks(tracks_path, cameras, on_warning=on_warning)
    base = Dataset(cameras=tuple(cameras), tracks=tuple(tracks))
    return Session(base, cameras_path=str(cameras_path), tracks_path=str(tracks_path))


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

class _ReplayState:
    """Deleted-id sets evolved op by op, with the same checks edits make."""

    def __init__(self, base: Dataset):
        self.base = base
        self.tracks_by_id = {t.id: t for t in base.tracks}
        self.track_ids = set(self.tracks_by_id)
        self.camera_ids = {c.id for c in base.cameras}
        self.deleted_tracks: set[str] = set()
        self.deleted_cameras: set[str] = set()

    def _n_live_obs(self, track) -> int:
        return sum(1 for o in track.observations if o.camera_id not in self.deleted_cameras)

    def track_present(self, track_id: str) -> bool:
        if track_id in self.deleted_tracks:
            return False
        return self._n_live_obs(self.tracks_by_id[track_id]) >= 2

    def apply(self, op: EditOp) -> None:
        tid = op.target_id
        if op.kind == "delete_track":
            if tid not in self.track_ids:
                raise UnknownId(f"no track {tid!r} in this session's dataset")
            if not self.track_present(tid):
                raise AlreadyDeleted(f"track {tid!r} is not in the effective dataset")
            self.deleted_tracks.add(tid)
        elif op.kind == "delete_camera":
            if tid not in self.camera_ids:
                raise UnknownId(f"no camera {tid!r} in this session's dataset")
            if tid in self.deleted_cameras:
                raise AlreadyDeleted(f"camera {tid!r} is already deleted")
            if len(self.camera_ids) - len(self.deleted_cameras) - 1 < 2:
                raise TooFewCamerasRemaining(
                    f"deleting camera {tid!r} would leave fewer than 2 cameras"
                )
            self.deleted_cameras.add(tid)
        else:  # restore
            if tid in self.deleted_tracks:
                self.deleted_tracks.discard(tid)
            elif tid in self.deleted_cameras:
                self.deleted_cameras.discard(tid)
            else:
                raise UnknownId(f"no deletion of {tid!r} is in force")

    def effective(self) -> Dataset:
        cameras = tuple(c for c in self.base.cameras if c.id not in self.deleted_cameras)
        tracks = []
        for t in self.base.tracks:
            if t.id in self.deleted_tracks:
                continue
            obs = tuple(o for o in t.observations if o.camera_id not in self.deleted_cameras)
            if len(obs) < 2:
                continue
            tracks.append(t if len(obs) == len(t.observations) else replace(t, observations=obs))
        return Dataset(
            cameras=cameras,
            tracks=tuple(tracks),
            name=self.base.name,
            ground_truth=self.base.ground_truth,
        )


def _replay(base: Dataset, ops: Sequence[EditOp]) -> Dataset:
    state = _ReplayState(base)
    for op in ops:
        state.apply(op)
    return state.effective()


def effective_dataset(session: Session) -> Dataset:
    """The dataset the edit log currently selects (pure replay, cached)."""
    key = len(session.edit_log)
    if session._cache_key != key or session._cache_value is None:
        session._cache_value = _replay(session.base_dataset, session.edit_log)
        session._cache_key = key
    return session._cache_value


def _append(session: Session, kind: str, target_id: str) -> None:
    op = EditOp(kind=kind, target_id=target_id, timestamp=len(session.edit_log))
    # Validate against the current state before committing the op.
    state = _ReplayState(session.base_dataset)
    for prior in session.edit_log:
        state.apply(prior)
    state.apply(op)
    session.edit_log.append(op)
    session._cache_value = state.effective()
    session._cache_key = len(session.edit_log)


# ---------------------------------------------------------------------------
# Edit operations
# ---------------------------------------------------------------------------

def delete_track(session: Session, track_id: str, *, on_warning: WarnFn | None = None) -> Session:
    """Remove one track from the effective dataset.

    Cameras the track referenced stay in the dataset even if nothing
    observes them any more; ``on_warning`` reports each camera that became
    unreferenced.

    Raises:
        UnknownId: no such track in the base dataset.
        AlreadyDeleted: the track is not in the effective dataset (deleted
            explicitly, or cascade-removed with a deleted camera).
    """
    before = effective_dataset(session)
    _append(session, "delete_track", track_id)
    if on_warning is not None:
        after = effective_dataset(session)
        referenced = {o.camera_id for t in after.tracks for o in t.observations}
        was_referenced = {o.camera_id for t in before.tracks for o in t.observations}
        for cam_id in sorted(was_referenced - referenced):
            on_warning(f"camera {cam_id!r} is no longer referenced by any track")
    return session


def delete_camera(session: Session, camera_id: str, *, on_warning: WarnFn | None = None) -> Session:
    """Remove one camera and every observation made in it.

    Tracks left with fewer than two observations cannot be triangulated and
    are cascade-removed; ``on_warning`` lists them.

    Raises:
        UnknownId: no such camera.
        AlreadyDeleted: the camera is already deleted.
        TooFewCamerasRemaining: fewer than two cameras would remain.
    """
    before = effective_dataset(session)
    _append(session, "delete_camera", camera_id)
    if on_warning is not None:
        after_ids = {t.id for t in effective_dataset(session).tracks}
        dropped = sorted(t.id for t in before.tracks if t.id not in after_ids)
        if dropped:
            on_warning(
                f"cascade-removed {len(dropped)} track(s) left under-observed by "
                f"deleting camera {camera_id!r}: {', '.join(dropped)}"
            )
    return session


def restore(session: Session, target_id: str) -> Session:
    """Undo a deletion that is still in force.

    Restoring a camera also brings back any tracks that were cascade-removed
    with it, because the effective dataset is a pure replay of the log.

    Raises:
        UnknownId: nothing with this id is currently deleted.
    """
    _append(session, "restore", target_id)
    return session


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def _with_initial_points(dataset: Dataset) -> Dataset:
    """Fill missing point_initial values by triangulating from initial poses."""
    missing = [t for t in dataset.tracks if t.point_initial is None]
    if not missing:
        return dataset
    by_id = dataset.camera_by_id
    tracks = []
    for t in dataset.tracks:
        if t.point_initial is None:
            rays = [
                (by_id[o.camera_id], by_id[o.camera_id].pose_initial, o.pixel)
                for o in t.observations
            ]
            tracks.append(replace(t, point_initial=triangulate(rays)))
        else:
            tracks.append(t)
    return Dataset(
        cameras=dataset.cameras,
        tracks=tuple(tracks),
        name=dataset.name,
        ground_truth=dataset.ground_truth,
    )


def rerun(
    session: Session,
    config: BAConfig | None = None,
    *,
    on_iteration: IterCallback | None = None,
    should_cancel: CancelCheck | None = None,
) -> Run:
    """Optimize the current effective dataset and record the run.

    Tracks lacking an initial point are triangulated first. The run is
    appended only after the optimizer returns, so a failed or cancelled run
    leaves the session unchanged. Returns the recorded Run.
    """
    config = config or BAConfig()
    dataset = _with_initial_points(effective_dataset(session))
    result = run_ba(dataset, config, on_iteration=on_iteration, should_cancel=should_cancel)
    run = Run(
        run_id=f"run_{len(session.runs):03d}",
        edit_index=len(session.edit_log),
        digest=content_digest(dataset),
        config=config,
        initial_cost=result.initial_cost,
        final_cost=result.final_cost,
        iterations=result.iterations,
        converged=result.converged,
        termination_reason=result.termination_reason,
        cost_trace=result.cost_trace,
    )
    session.runs.append(run)
    session._results[run.run_id] = result
    return run


def _run_by_id(session: Session, run_id: str) -> Run:
    for run in session.runs:
        if run.run_id == run_id:
            return run
    raise UnknownRun(f"no run {run_id!r} in this session")


def run_dataset(session: Session, run_id: str) -> Dataset:
    """The exact dataset a recorded run optimized.

    Replays the edit-log prefix the run was made at and fills any missing
    initial points, then checks the result against the digest recorded with
    the run.

    Raises:
        UnknownRun: no run with this id.
        CorruptSessionFile: the replayed dataset does not match the digest
            recorded with the run (base files changed since the run).
    """
    run = _run_by_id(session, run_id)
    dataset = _with_initial_points(
        _replay(session.base_dataset, session.edit_log[: run.edit_index])
    )
    if content_digest(dataset) != run.digest:
        raise CorruptSessionFile(
            f"dataset for {run_id!r} no longer matches its recorded digest; "
            "the base files changed since the run was recorded"
        )
    return dataset


def run_result(session: Session, run_id: str) -> BAResult:
    """Full BAResult for a recorded run.

    Results live in memory for runs made in this process. For a run loaded
    from disk the result is recomputed by re-optimizing run_dataset() with
    the recorded config; the optimizer is deterministic, so this reproduces
    the original exactly.

    Raises:
        UnknownRun: no run with this id.
        CorruptSessionFile: the replayed dataset does not match the digest
            recorded with the run (base files changed since the run).
    """
    cached = session._results.get(run_id)
    if cached is not None:
        _run_by_id(session, run_id)
        return cached
    run = _run_by_id(session, run_id)
    result = run_ba(run_dataset(session, run_id), run.config)
    session._results[run_id] = result
    return result


def current_result(session: Session) -> BAResult | None:
    """The result describing the current effective dataset's latest solve.

    The most recent recorded run qualifies only if it was made at the
    current edit position; edits made after a run leave the session with no
    current solve (returns None) until the next rerun. When the base files
    already carry final states whose cost matches the qualifying run, a view
    over those states is returned instead of re-solving; a files-only
    session (finals present, no edits, no runs) also yields that view.
    """
    eff = effective_dataset(session)
    complete = (
        bool(eff.tracks)
        and all(c.pose_final is not None for c in eff.cameras)
        and all(t.point_final is not None for t in eff.tracks)
    )
    latest = session.runs[-1] if session.runs else None
    if latest is not None and latest.edit_index == len(session.edit_log):
        if complete:
            view = result_from_final_state(eff)
            if math.isclose(view.final_cost, latest.final_cost, rel_tol=1e-9):
                return view
        return run_result(session, latest.run_id)
    if latest is None and not session.edit_log and complete:
        return result_from_final_state(eff)
    return None


def _paired_rms(values: list[float]) -> float:
    return float(np.sqrt(np.mean(np.square(values)))) if values else 0.0


def compare(session: Session, run_a: str, run_b: str) -> ComparisonReport:
    """Paired pre/post comparison of two recorded runs.

    Statistics cover only observation keys (camera_id, track_id) present in
    both runs' final residuals; tracks/cameras present in one effective
    dataset but not the other are listed by id instead.
    """
    a, b = _run_by_id(session, run_a), _run_by_id(session, run_b)
    res_a, res_b = run_result(session, run_a), run_result(session, run_b)
    len_a = {(r.camera_id, r.track_id): r.length for r in res_a.residuals_final}
    len_b = {(r.camera_id, r.track_id): r.length for r in res_b.residuals_final}
    shared = sorted(len_a.keys() & len_b.keys())

    per_track: dict[str, tuple[list[float], list[float]]] = {}
    per_image: dict[str, tuple[list[float], list[float]]] = {}
    total_a = total_b = 0.0
    for key in shared:
        cam_id, trk_id = key
        va, vb = len_a[key], len_b[key]
        total_a += va
        total_b += vb
        per_track.setdefault(trk_id, ([], []))
        per_track[trk_id][0].append(va)
        per_track[trk_id][1].append(vb)
        per_image.setdefault(cam_id, ([], []))
        per_image[cam_id][0].append(va)
        per_image[cam_id][1].append(vb)

    rms_a = _paired_rms([len_a[k] for k in shared])
    rms_b = _paired_rms([len_b[k] for k in shared])

    ds_a = _replay(session.base_dataset, session.edit_log[: a.edit_index])
    ds_b = _replay(session.base_dataset, session.edit_log[: b.edit_index])
    tracks_a, tracks_b = {t.id for t in ds_a.tracks}, {t.id for t in ds_b.tracks}
    cams_a, cams_b = {c.id for c in ds_a.cameras}, {c.id for c in ds_b.cameras}

    return ComparisonReport(
        run_a=run_a,
        run_b=run_b,
        paired_observations=len(shared),
        delta_total_error=total_b - total_a,
        delta_rms=rms_b - rms_a,
        track_slopes=tuple(
            SlopeSummary(tid, _paired_rms(pair[0]), _paired_rms(pair[1]))
            for tid, pair in sorted(per_track.items())
        ),
        image_slopes=tuple(
            SlopeSummary(cid, _paired_rms(pair[0]), _paired_rms(pair[1]))
            for cid, pair in sorted(per_image.items())
        ),
        removed_track_ids=tuple(sorted(tracks_a - tracks_b)),
        added_track_ids=tuple(sorted(tracks_b - tracks_a)),
        removed_camera_ids=tuple(sorted(cams_a - cams_b)),
        added_camera_ids=tuple(sorted(cams_b - cams_a)),
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_session(session: Session, path: str) -> None:
    """Write the session as JSON: base file references, edit log, run metadata.

    The base dataset itself is not embedded; the file stores the paths it
    was parsed from plus a content digest so drift is detected on load.
    Sessions created from an in-memory dataset cannot be saved until their
    dataset has been written to files and the paths recorded.
    """
    if not session.cameras_path or not session.tracks_path:
        raise ValueError("session has no backing cameras/tracks files to reference")
    doc = {
        "base": {
            "cameras_path": session.cameras_path,
            "tracks_path": session.tracks_path,
            "digest": session.base_digest,
        },
        "edits": [op.to_dict() for op in session.edit_log],
        "runs": [run.to_dict() for run in session.runs],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_session(path: str, *, on_warning: WarnFn | None = None) -> Session:
    """Load a session file and re-parse its base dataset.

    Relative cameras/tracks paths are resolved against the session file's
    directory. The edit log is replayed immediately so an inconsistent log
    fails here, not on first use.

    Raises:
        CorruptSessionFile: unreadable JSON, missing fields, a base digest
            mismatch, or an edit log that does not replay cleanly.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptSessionFile(f"cannot read session file {path!r}: {exc}") from exc

    try:
        base_info = doc["base"]
        cameras_path = base_info["cameras_path"]
        tracks_path = base_info["tracks_path"]
        digest = base_info["digest"]
        edits = [EditOp.from_dict(d) for d in doc["edits"]]
        runs = [Run.from_dict(d) for d in doc["runs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSessionFile(f"session file {path!r} is missing fields: {exc}") from exc

    root = os.path.dirname(os.path.abspath(path))
    cam_abs = cameras_path if os.path.isabs(cameras_path) else os.path.join(root, cameras_path)
    trk_abs = tracks_path if os.path.isabs(tracks_path) else os.path.join(root, tracks_path)
    try:
        cameras = parse_cameras(cam_abs, on_warning=on_warning)
        tracks = parse_tracks(trk_abs, cameras, on_warning=on_warning)
    except OSError as exc:
        raise CorruptSessionFile(f"cannot read base dataset files: {exc}") from exc
    base = Dataset(cameras=tuple(cameras), tracks=tuple(tracks))

    session = Session(base, cameras_path=cameras_path, tracks_path=tracks_path)
    if session.base_digest != digest:
        raise CorruptSessionFile(
            f"base dataset digest mismatch for {path!r}: the cameras/tracks "
            "files changed since the session was saved"
        )
    last = -1
    for op in edits:
        if op.timestamp <= last:
            raise CorruptSessionFile("edit log timestamps are not strictly increasing")
        last = op.timestamp
    session.edit_log = list(edits)
    session.runs = list(runs)
    try:
        effective_dataset(session)
    except (UnknownId, AlreadyDeleted, TooFewCamerasRemaining) as exc:
        raise CorruptSessionFile(f"edit log does not replay cleanly: {exc}") from exc
    return session
