"""HTTP/JSON service over a review session.

The service is a thin shell around the library: every number it returns is
produced by the same dataset, analysis, and solver code the CLI uses.  State
is a single session plus a derived read snapshot that is swapped atomically
after each mutation, so readers never observe a half-applied edit.

Concurrency contract:

* Any number of concurrent readers.
* One writer at a time: edits take the write lock non-blocking and answer
  409 when it is held; optimizer runs execute on a background thread that
  holds the lock for the whole run.
* Jobs are cancellable and are recorded in the session only on completion,
  so a cancelled or failed run never corrupts the session file.

Error mapping: malformed requests 400, unknown ids 404, write-lock conflicts
409, semantically invalid operations 422, numerical failures 500.  Unknown
query parameters are ignored and reported in a Warning header.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, replace

from fastapi import Body, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.routing import APIRoute

from .analysis import (
    FilterState,
    angular_concentration,
    apply_filter,
    histogram,
    image_summary,
    radial,
    rank_images,
    rank_tracks,
)
from .ba import BAConfig, BAResult, evaluate_residuals
from .dataset import Dataset, validate
from .errors import (
    Cancelled,
    CheiralityViolation,
    DegenerateConfiguration,
    DegenerateGeometry,
    EmptyInput,
    MissingFinalState,
    NumericalFailure,
    SingularSystem,
    UnknownId,
    UnknownRun,
    VectorError,
)
from .geometry import Camera, Intrinsics, Pose, ResidualRecord, Track
from .session import (
    EDIT_KINDS,
    Session,
    compare,
    current_result,
    delete_camera,
    delete_track,
    effective_dataset,
    rerun,
    restore,
    save_session,
)

__all__ = ["create_app"]

_NUMERICAL_ERRORS = (
    NumericalFailure,
    SingularSystem,
    CheiralityViolation,
    DegenerateGeometry,
    DegenerateConfiguration,
)


class _BadRequest(Exception):
    """Raised by handlers for malformed (as opposed to semantically wrong) input."""


# ---------------------------------------------------------------------------
# JSON shapes
# ---------------------------------------------------------------------------

def _pose_dict(pose: Pose | None) -> dict | None:
    if pose is None:
        return None
    return {
        "rotation": [float(v) for v in pose.rotation],
        "center": [float(v) for v in pose.center],
    }


def _intrinsics_dict(k: Intrinsics) -> dict:
    return {
        "fx": k.fx,
        "fy": k.fy,
        "cx": k.cx,
        "cy": k.cy,
        "width": k.width,
        "height": k.height,
    }


def _record_dict(rec: ResidualRecord) -> dict:
    return {
        "camera_id": rec.camera_id,
        "track_id": rec.track_id,
        "vector": [float(rec.vector[0]), float(rec.vector[1])],
        "length": rec.length,
        "angle": rec.angle,
        "kind": rec.kind,
    }


def _point_list(point) -> list[float] | None:
    if point is None:
        return None
    return [float(v) for v in point]


def _camera_dict(camera: Camera, image_url: str | None) -> dict:
    return {
        "id": camera.id,
        "image_ref": camera.image_ref,
        "image_url": image_url,
        "intrinsics": _intrinsics_dict(camera.intrinsics),
        "pose_initial": _pose_dict(camera.pose_initial),
        "pose_final": _pose_dict(camera.pose_final),
    }


def _concentration_or_none(records) -> float | None:
    try:
        return angular_concentration(records)
    except EmptyInput:
        return None


def _rms_or_none(records) -> float | None:
    recs = list(records)
    if not recs:
        return None
    return (sum(r.length**2 for r in recs) / len(recs)) ** 0.5


# ---------------------------------------------------------------------------
# Server state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Snapshot:
    """Immutable read view derived from the session's current log position."""

    dataset: Dataset
    result: BAResult | None
    records: tuple[ResidualRecord, ...]
    track_by_id: dict[str, Track]


def _strip_finals(dataset: Dataset) -> Dataset:
    cameras = tuple(replace(c, pose_final=None) for c in dataset.cameras)
    tracks = tuple(replace(t, point_final=None) for t in dataset.tracks)
    return Dataset(cameras=cameras, tracks=tracks)


def _build_snapshot(session: Session) -> _Snapshot:
    result = current_result(session)
    eff = effective_dataset(session)
    if result is not None:
        dataset = result.apply_to(eff)
        records = tuple(result.residuals_initial) + tuple(result.residuals_final)
    else:
        # No solve matches the current log position: expose initial state
        # only.  Stale per-entity final values from an earlier run would
        # misrepresent the edited problem, so they are dropped until the
        # next rerun.  Editing may legitimately empty the dataset, which
        # the residual evaluator refuses; the view is simply empty then.
        dataset = _strip_finals(eff)
        if dataset.n_observations:
            records = tuple(evaluate_residuals(dataset, "initial"))
        else:
            records = ()
    return _Snapshot(
        dataset=dataset,
        result=result,
        records=records,
        track_by_id={t.id: t for t in dataset.tracks},
    )


@dataclass
class _Job:
    job_id: str
    state: str = "queued"  # queued | running | done | failed | cancelled
    iteration: int = 0
    cost: float | None = None
    result_ref: str | None = None
    error: str | None = None
    cancel_event: threading.Event = field(default_factory=threading.Event)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def to_dict(self) -> dict:
        with self.lock:
            return {
                "job_id": self.job_id,
                "state": self.state,
                "progress": {"iteration": self.iteration, "cost": self.cost},
                "result_ref": self.result_ref,
                "error": self.error,
            }


class _ServerState:
    def __init__(self, session: Session, session_path: str | None, images_root: str | None):
        self.session = session
        self.session_path = session_path
        self.images_root = os.path.realpath(images_root) if images_root else None
        self.write_lock = threading.Lock()
        self.jobs: dict[str, _Job] = {}
        self.jobs_lock = threading.Lock()
        self._job_counter = 0
        self.snapshot = _build_snapshot(session)

    def refresh(self) -> None:
        self.snapshot = _build_snapshot(self.session)

    def save(self) -> None:
        if self.session_path:
            save_session(self.session, self.session_path)

    def new_job(self) -> _Job:
        with self.jobs_lock:
            job = _Job(job_id=f"job_{self._job_counter:03d}")
            self._job_counter += 1
            self.jobs[job.job_id] = job
        return job

    def image_url(self, camera: Camera) -> str | None:
        if not camera.image_ref or self.images_root is None:
            return None
        return f"/static/images/{camera.image_ref}"

    # -- mutations ----------------------------------------------------------

    def apply_edit(self, kind: str, target_id: str) -> dict:
        if kind not in EDIT_KINDS:
            raise ValueError(f"unknown edit kind {kind!r}; expected one of {sorted(EDIT_KINDS)}")
        if not self.write_lock.acquire(blocking=False):
            raise _Busy()
        try:
            warnings: list[str] = []
            if kind == "delete_track":
                delete_track(self.session, target_id, on_warning=warnings.append)
            elif kind == "delete_camera":
                delete_camera(self.session, target_id, on_warning=warnings.append)
            else:
                restore(self.session, target_id)
            op = self.session.edit_log[-1]
            self.refresh()
            self.save()
            eff = self.snapshot.dataset
            return {
                "edit": op.to_dict(),
                "warnings": warnings,
                "n_cameras": len(eff.cameras),
                "n_tracks": len(eff.tracks),
                "n_observations": eff.n_observations,
            }
        finally:
            self.write_lock.release()

    def run_job(self, job: _Job, config: BAConfig) -> None:
        self.write_lock.acquire()
        try:
            if job.cancel_event.is_set():
                with job.lock:
                    job.state = "cancelled"
                return
            with job.lock:
                job.state = "running"

            def on_iteration(iteration: int, cost: float) -> None:
                with job.lock:
                    job.iteration = iteration
                    job.cost = cost

            run = rerun(
                self.session,
                config,
                on_iteration=on_iteration,
                should_cancel=job.cancel_event.is_set,
            )
            self.refresh()
            self.save()
            with job.lock:
                job.state = "done"
                job.result_ref = run.run_id
        except Cancelled:
            with job.lock:
                job.state = "cancelled"
        except (VectorError, ValueError) as exc:
            with job.lock:
                job.state = "failed"
                job.error = str(exc)
        except Exception as exc:  # keep the job observable rather than stuck
            with job.lock:
                job.state = "failed"
                job.error = f"{type(exc).__name__}: {exc}"
        finally:
            self.write_lock.release()


class _Busy(Exception):
    """Write lock is held by another edit or a running job."""


# ---------------------------------------------------------------------------
# Unknown-query-parameter warnings
# ---------------------------------------------------------------------------

class _WarnUnknownParams(APIRoute):
    """Route class that flags ignored query parameters in a Warning header."""

    def get_route_handler(self):
        handler = super().get_route_handler()
        declared = {p.alias or p.name for p in self.dependant.query_params}

        async def wrapped(request: Request) -> Response:
            response = await handler(request)
            unknown = sorted({k for k in request.query_params if k not in declared})
            if unknown:
                joined = ", ".join(unknown)
                response.headers["Warning"] = (
                    f'199 - "ignored unknown query parameter(s): {joined}"'
                )
            return response

        return wrapped


# ---------------------------------------------------------------------------
# Application factory
# ---------------------------------------------------------------------------

def create_app(
    session: Session,
    *,
    session_path: str | None = None,
    images_root: str | None = None,
) -> FastAPI:
    """Build the service over one session.

    ``session_path`` enables persistence: edits and completed runs are saved
    back to that file.  ``images_root`` is the directory image references
    resolve against for /static/images; without it, image URLs are omitted
    and the static route answers 404.
    """
    state = _ServerState(session, session_path, images_root)
    app = FastAPI(title="vector review service", openapi_url=None)
    app.router.route_class = _WarnUnknownParams
    app.state.server = state

    # -- error mapping ------------------------------------------------------

    def _status_for(exc: VectorError) -> int:
        if isinstance(exc, (UnknownId, UnknownRun)):
            return 404
        if isinstance(exc, _NUMERICAL_ERRORS):
            return 500
        return 422

    @app.exception_handler(VectorError)
    async def _vector_error(request: Request, exc: VectorError) -> JSONResponse:
        return JSONResponse(status_code=_status_for(exc), content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError) -> JSONResponse:
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(_BadRequest)
    async def _bad_request(request: Request, exc: _BadRequest) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(_Busy)
    async def _busy(request: Request, exc: _Busy) -> JSONResponse:
        return JSONResponse(
            status_code=409,
            content={"detail": "another edit or optimizer run holds the session write lock"},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    # -- helpers ------------------------------------------------------------

    def _camera_or_404(dataset: Dataset, camera_id: str) -> Camera:
        camera = dataset.camera_by_id.get(camera_id)
        if camera is None:
            raise UnknownId(f"no camera '{camera_id}' in the current dataset")
        return camera

    def _track_or_404(snap: _Snapshot, track_id: str) -> Track:
        track = snap.track_by_id.get(track_id)
        if track is None:
            raise UnknownId(f"no track '{track_id}' in the current dataset")
        return track

    def _parse_filter(raw: str | None) -> FilterState:
        if raw is None:
            return FilterState()
        try:
            decoded = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise _BadRequest(f"filter is not valid JSON: {exc}")
        if not isinstance(decoded, dict):
            raise _BadRequest("filter must be a JSON object")
        return FilterState.from_dict(decoded)

    def _result_or_422(snap: _Snapshot) -> BAResult:
        if snap.result is None:
            raise MissingFinalState(
                "no optimizer result matches the current edit log; rerun first"
            )
        return snap.result

    # -- read endpoints -----------------------------------------------------

    @app.get("/api/scene")
    def get_scene() -> dict:
        snap = state.snapshot
        cameras = [_camera_dict(c, state.image_url(c)) for c in snap.dataset.cameras]
        points = [
            {
                "id": t.id,
                "initial": _point_list(t.point_initial),
                "final": _point_list(t.point_final),
                "n_observations": len(t.observations),
            }
            for t in snap.dataset.tracks
        ]
        return {"cameras": cameras, "points": points, "has_final": snap.result is not None}

    @app.get("/api/session")
    def get_session() -> dict:
        snap = state.snapshot
        latest = state.session.runs[-1] if state.session.runs else None
        current_run = (
            latest.run_id
            if latest is not None and latest.edit_index == len(state.session.edit_log)
            else None
        )
        return {
            "cameras_path": state.session.cameras_path or None,
            "tracks_path": state.session.tracks_path or None,
            "digest": state.session.base_digest,
            "n_cameras": len(snap.dataset.cameras),
            "n_tracks": len(snap.dataset.tracks),
            "n_observations": snap.dataset.n_observations,
            "edits": [op.to_dict() for op in state.session.edit_log],
            "runs": [run.to_dict() for run in state.session.runs],
            "current_run": current_run,
            "has_result": snap.result is not None,
            "validation_warnings": validate(snap.dataset),
        }

    @app.get("/api/images")
    def get_images() -> dict:
        snap = state.snapshot
        per_camera: dict[str, int] = {c.id: 0 for c in snap.dataset.cameras}
        for track in snap.dataset.tracks:
            for obs in track.observations:
                per_camera[obs.camera_id] += 1
        rows = [
            {
                "camera_id": c.id,
                "image_ref": c.image_ref,
                "image_url": state.image_url(c),
                "n_observations": per_camera[c.id],
            }
            for c in snap.dataset.cameras
        ]
        return {"images": rows}

    @app.get("/api/images/{camera_id}")
    def get_image(camera_id: str, bins: int = 20) -> dict:
        snap = state.snapshot
        camera = _camera_or_404(snap.dataset, camera_id)
        summary = image_summary(camera_id, snap.records, n_bins=bins)
        doc = _camera_dict(camera, state.image_url(camera))
        doc["summary"] = summary.to_dict()
        return doc

    @app.get("/api/tracks/{track_id}")
    def get_track(track_id: str) -> dict:
        snap = state.snapshot
        track = _track_or_404(snap, track_id)
        residuals = [_record_dict(r) for r in snap.records if r.track_id == track_id]
        observers = [
            _camera_dict(snap.dataset.camera_by_id[obs.camera_id],
                         state.image_url(snap.dataset.camera_by_id[obs.camera_id]))
            for obs in track.observations
        ]
        return {
            "id": track.id,
            "observations": [
                {"camera_id": obs.camera_id, "pixel": [float(obs.pixel[0]), float(obs.pixel[1])]}
                for obs in track.observations
            ],
            "point_initial": _point_list(track.point_initial),
            "point_final": _point_list(track.point_final),
            "residuals": residuals,
            "cameras": observers,
        }

    @app.get("/api/records")
    def get_records(camera_id: str | None = None, track_id: str | None = None) -> dict:
        snap = state.snapshot
        records = snap.records
        if camera_id is not None:
            _camera_or_404(snap.dataset, camera_id)
            records = tuple(r for r in records if r.camera_id == camera_id)
        if track_id is not None:
            _track_or_404(snap, track_id)
            records = tuple(r for r in records if r.track_id == track_id)
        tiepoints = {
            (obs.camera_id, track.id): [float(obs.pixel[0]), float(obs.pixel[1])]
            for track in snap.dataset.tracks
            for obs in track.observations
        }
        rows = []
        for rec in records:
            doc = _record_dict(rec)
            doc["tiepoint"] = tiepoints.get((rec.camera_id, rec.track_id))
            rows.append(doc)
        return {"count": len(rows), "records": rows}

    @app.get("/api/stats")
    def get_stats(filter: str | None = None, bins: int = 20) -> dict:
        snap = state.snapshot
        fs = _parse_filter(filter)
        visible = apply_filter(snap.records, fs)
        initial = [r for r in visible if r.kind == "initial"]
        final = [r for r in visible if r.kind == "final"]
        return {
            "count": len(visible),
            "kind_counts": {"initial": len(initial), "final": len(final)},
            "histogram": histogram(visible, n_bins=bins).to_dict(),
            "radial": radial(visible).to_dict(),
            "concentration": {
                "initial": _concentration_or_none(initial),
                "final": _concentration_or_none(final),
            },
            "rms": {"initial": _rms_or_none(initial), "final": _rms_or_none(final)},
            "filter": fs.to_dict(),
        }

    @app.get("/api/rank/tracks")
    def get_rank_tracks(key: str = "max_final_length", limit: int | None = None) -> dict:
        snap = state.snapshot
        scores = rank_tracks(snap.dataset, _result_or_422(snap), key)
        if limit is not None:
            scores = scores[:limit]
        return {"key": key, "tracks": [s.to_dict() for s in scores]}

    @app.get("/api/rank/images")
    def get_rank_images(key: str = "max_final_length", limit: int | None = None) -> dict:
        snap = state.snapshot
        scores = rank_images(snap.dataset, _result_or_422(snap), key)
        if limit is not None:
            scores = scores[:limit]
        return {"key": key, "images": [s.to_dict() for s in scores]}

    @app.get("/api/compare")
    def get_compare(a: str, b: str) -> dict:
        return compare(state.session, a, b).to_dict()

    # -- mutations ----------------------------------------------------------

    @app.post("/api/edits")
    def post_edit(payload: dict = Body(...)) -> dict:
        kind = payload.get("kind")
        target_id = payload.get("target_id")
        if not isinstance(kind, str) or not isinstance(target_id, str):
            raise _BadRequest("edit body needs string fields 'kind' and 'target_id'")
        return state.apply_edit(kind, target_id)

    @app.delete("/api/tracks/{track_id}")
    def delete_track_route(track_id: str) -> dict:
        return state.apply_edit("delete_track", track_id)

    @app.delete("/api/cameras/{camera_id}")
    def delete_camera_route(camera_id: str) -> dict:
        return state.apply_edit("delete_camera", camera_id)

    @app.post("/api/ba/run", status_code=202)
    def post_ba_run(payload: dict | None = Body(None)) -> dict:
        config_dict = (payload or {}).get("config") or {}
        if not isinstance(config_dict, dict):
            raise _BadRequest("'config' must be a JSON object")
        try:
            config = BAConfig.from_dict(config_dict)
        except TypeError as exc:  # unknown field name in the config document
            raise _BadRequest(str(exc))
        job = state.new_job()
        thread = threading.Thread(
            target=state.run_job, args=(job, config), name=job.job_id, daemon=True
        )
        thread.start()
        return job.to_dict()

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        job = state.jobs.get(job_id)
        if job is None:
            raise UnknownId(f"no job '{job_id}'")
        return job.to_dict()

    @app.post("/api/jobs/{job_id}/cancel")
    def cancel_job(job_id: str) -> dict:
        job = state.jobs.get(job_id)
        if job is None:
            raise UnknownId(f"no job '{job_id}'")
        job.cancel_event.set()
        return job.to_dict()

    # -- static images ------------------------------------------------------

    @app.get("/static/images/{path:path}")
    def get_image_file(path: str):
        if state.images_root is None:
            raise UnknownId("no images root configured")
        full = os.path.realpath(os.path.join(state.images_root, path))
        if full != state.images_root and not full.startswith(state.images_root + os.sep):
            raise UnknownId(f"no image '{path}'")
        if not os.path.isfile(full):
            raise UnknownId(f"no image '{path}'")
        return FileResponse(full)

    return app
