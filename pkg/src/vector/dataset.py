"""Two-file XML data model: cameras + tracks, parsing, validation, serialization.

The camera file holds one ``<camera>`` element per image (calibration and
initial/final poses); the track file holds one ``<track>`` element per scene
point (initial/final XYZ plus its 2D observations). Numbers are serialized
with 17 significant digits so parse(serialize(x)) is value-exact for float64.

Parsing is streaming (expat): memory use is bounded by the size of a single
element, never the document, because track files can grow to gigabytes.
``iter_tracks`` exposes that property directly; ``parse_tracks`` merely
collects it into a list.
"""

from __future__ import annotations

import hashlib
import io
import os
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Iterator, Mapping
from xml.parsers import expat
from xml.sax.saxutils import quoteattr

import numpy as np

from .errors import DuplicateId, SchemaError, TooFewObservations, UnknownCameraRef
from .geometry import (
    LOW_ANGLE_DEG,
    Camera,
    Intrinsics,
    Observation,
    Pose,
    Track,
    triangulation_angle,
)

__all__ = [
    "Dataset",
    "GroundTruth",
    "parse_cameras",
    "parse_tracks",
    "iter_tracks",
    "serialize",
    "write_cameras_file",
    "write_tracks_file",
    "validate",
    "content_digest",
]

WarnFn = Callable[[str], None]

_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """True poses/points retained by the synthetic generator (never serialized).

    outlier_track_ids records which tracks carry an injected gross-error
    observation, so experiments can score outlier-identification recall.
    """

    poses: Mapping[str, Pose]
    points: Mapping[str, np.ndarray]
    outlier_track_ids: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable multi-view problem: cameras, tracks, and optional truth."""

    cameras: tuple[Camera, ...]
    tracks: tuple[Track, ...]
    name: str = "dataset"
    ground_truth: GroundTruth | None = None

    def __post_init__(self):
        object.__setattr__(self, "cameras", tuple(self.cameras))
        object.__setattr__(self, "tracks", tuple(self.tracks))
        by_id: dict[str, Camera] = {}
        for cam in self.cameras:
            if cam.id in by_id:
                raise DuplicateId(f"camera id {cam.id!r} appears twice")
            by_id[cam.id] = cam
        seen_tracks: set[str] = set()
        for track in self.tracks:
            if track.id in seen_tracks:
                raise DuplicateId(f"track id {track.id!r} appears twice")
            seen_tracks.add(track.id)
            for obs in track.observations:
                if obs.camera_id not in by_id:
                    raise UnknownCameraRef(
                        f"track {track.id!r} observes unknown camera {obs.camera_id!r}"
                    )
        object.__setattr__(self, "_by_id", by_id)

    @property
    def camera_by_id(self) -> Mapping[str, Camera]:
        return self._by_id  # type: ignore[attr-defined]

    @property
    def n_observations(self) -> int:
        return sum(len(t.observations) for t in self.tracks)


# ---------------------------------------------------------------------------
# Streaming parse
# ---------------------------------------------------------------------------

def _chunks(source) -> Iterator[bytes]:
    if isinstance(source, (bytes, bytearray, memoryview)):
        data = memoryview(source)
        for i in range(0, len(data), _CHUNK):
            yield bytes(data[i : i + _CHUNK])
        return
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            while chunk := f.read(_CHUNK):
                yield chunk
        return
    if hasattr(source, "read"):
        while chunk := source.read(_CHUNK):
            yield chunk
        return
    raise TypeError(f"cannot parse from {type(source).__name__}")


def _parse_float(tag: str, name: str, text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"bad number {text!r} for {name!r} on <{tag}> (line {line})") from None
    if not np.isfinite(value):
        raise ValueError(f"non-finite {name!r} on <{tag}> (line {line})")
    return value


def _parse_int(tag: str, name: str, text: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"bad integer {text!r} for {name!r} on <{tag}> (line {line})") from None


def _take_attrs(
    tag: str,
    attrs: dict[str, str],
    required: tuple[str, ...],
    line: int,
    warn: WarnFn | None,
) -> dict[str, str]:
    for name in required:
        if name not in attrs:
            raise SchemaError(f"<{tag}> missing required attribute {name!r}", line)
    if warn is not None:
        for name in attrs:
            if name not in required:
                warn(f"ignoring unknown attribute {name!r} on <{tag}> (line {line})")
    return {name: attrs[name] for name in required}


class _StackParser:
    """Shared expat plumbing: element stack, structure checks, drain queue."""

    # parent tag -> allowed child tags; None is the document root.
    grammar: dict[str | None, set[str]] = {}

    def __init__(self, warn: WarnFn | None):
        self.warn = warn
        self.stack: list[str] = []
        self.done: list = []
        self.parser = expat.ParserCreate("UTF-8")
        self.parser.buffer_text = True
        self.parser.StartElementHandler = self._start
        self.parser.EndElementHandler = self._end
        self.parser.CharacterDataHandler = self._chardata

    @property
    def line(self) -> int:
        return self.parser.CurrentLineNumber

    def _start(self, tag: str, attrs: dict[str, str]):
        parent = self.stack[-1] if self.stack else None
        allowed = self.grammar.get(parent, set())
        if tag not in allowed:
            where = f"inside <{parent}>" if parent else "as document root"
            raise SchemaError(f"unexpected element <{tag}> {where}", self.line)
        self.stack.append(tag)
        self.on_start(tag, attrs)

    def _end(self, tag: str):
        self.on_end(tag)
        self.stack.pop()

    def _chardata(self, data: str):
        if data.strip():
            raise SchemaError(f"unexpected text content {data.strip()[:20]!r}", self.line)

    def on_start(self, tag: str, attrs: dict[str, str]):  # pragma: no cover - overridden
        raise NotImplementedError

    def on_end(self, tag: str):  # pragma: no cover - overridden
        raise NotImplementedError

    def run(self, source) -> Iterator:
        try:
            for chunk in _chunks(source):
                self.parser.Parse(chunk, False)
                if self.done:
                    yield from self.done
                    self.done.clear()
            self.parser.Parse(b"", True)
        except expat.ExpatError as exc:
            raise SchemaError(f"malformed XML: {expat.errors.messages[exc.code]}", exc.lineno) from None
        yield from self.done
        self.done.clear()


class _PoseReader:
    """Accumulates <rotation> + <center> children of one <pose> element."""

    def __init__(self, kind: str, line: int):
        self.kind = kind
        self.line = line
        self.rotation: np.ndarray | None = None
        self.center: np.ndarray | None = None

    def finish(self, end_line: int) -> Pose:
        if self.rotation is None:
            raise SchemaError(f"<pose kind={self.kind!r}> missing <rotation>", end_line)
        if self.center is None:
            raise SchemaError(f"<pose kind={self.kind!r}> missing <center>", end_line)
        return Pose(self.rotation, self.center)


class _CamerasParser(_StackParser):
    grammar = {
        None: {"cameras"},
        "cameras": {"camera"},
        "camera": {"image", "intrinsics", "pose"},
        "pose": {"rotation", "center"},
    }

    def __init__(self, warn: WarnFn | None):
        super().__init__(warn)
        self.seen_ids: set[str] = set()
        self.cam_id: str | None = None
        self.cam_line = 0
        self.image: tuple[str, int, int] | None = None
        self.intr: dict[str, float] | None = None
        self.poses: dict[str, Pose] = {}
        self.pose_reader: _PoseReader | None = None

    def on_start(self, tag: str, attrs: dict[str, str]):
        line = self.line
        if tag == "camera":
            a = _take_attrs(tag, attrs, ("id",), line, self.warn)
            if a["id"] in self.seen_ids:
                raise DuplicateId(f"camera id {a['id']!r} appears twice (line {line})")
            self.cam_id, self.cam_line = a["id"], line
            self.image, self.intr, self.poses = None, None, {}
        elif tag == "image":
            if self.image is not None:
                raise SchemaError("duplicate <image> in <camera>", line)
            a = _take_attrs(tag, attrs, ("src", "width", "height"), line, self.warn)
            self.image = (
                a["src"],
                _parse_int(tag, "width", a["width"], line),
                _parse_int(tag, "height", a["height"], line),
            )
        elif tag == "intrinsics":
            if self.intr is not None:
                raise SchemaError("duplicate <intrinsics> in <camera>", line)
            a = _take_attrs(tag, attrs, ("fx", "fy", "cx", "cy"), line, self.warn)
            self.intr = {k: _parse_float(tag, k, v, line) for k, v in a.items()}
        elif tag == "pose":
            a = _take_attrs(tag, attrs, ("kind",), line, self.warn)
            if a["kind"] not in ("initial", "final"):
                raise SchemaError(f"pose kind must be initial|final, got {a['kind']!r}", line)
            if a["kind"] in self.poses:
                raise SchemaError(f"duplicate <pose kind={a['kind']!r}>", line)
            self.pose_reader = _PoseReader(a["kind"], line)
        elif tag == "rotation":
            a = _take_attrs(tag, attrs, ("qw", "qx", "qy", "qz"), line, self.warn)
            reader = self.pose_reader
            assert reader is not None
            if reader.rotation is not None:
                raise SchemaError("duplicate <rotation> in <pose>", line)
            reader.rotation = np.array(
                [_parse_float(tag, k, a[k], line) for k in ("qw", "qx", "qy", "qz")]
            )
        elif tag == "center":
            a = _take_attrs(tag, attrs, ("x", "y", "z"), line, self.warn)
            reader = self.pose_reader
            assert reader is not None
            if reader.center is not None:
                raise SchemaError("duplicate <center> in <pose>", line)
            reader.center = np.array([_parse_float(tag, k, a[k], line) for k in ("x", "y", "z")])
        elif tag == "cameras":
            _take_attrs(tag, attrs, (), line, self.warn)

    def on_end(self, tag: str):
        if tag == "pose":
            reader = self.pose_reader
            assert reader is not None
            self.poses[reader.kind] = reader.finish(self.line)
            self.pose_reader = None
        elif tag == "camera":
            line = self.line
            if self.image is None:
                raise SchemaError(f"camera {self.cam_id!r} missing <image>", line)
            if self.intr is None:
                raise SchemaError(f"camera {self.cam_id!r} missing <intrinsics>", line)
            if "initial" not in self.poses:
                raise SchemaError(f"camera {self.cam_id!r} missing <pose kind=\"initial\">", line)
            src, width, height = self.image
            assert self.cam_id is not None
            self.seen_ids.add(self.cam_id)
            self.done.append(
                Camera(
                    id=self.cam_id,
                    image_ref=src,
                    intrinsics=Intrinsics(width=width, height=height, **self.intr),
                    pose_initial=self.poses["initial"],
                    pose_final=self.poses.get("final"),
                )
            )


class _TracksParser(_StackParser):
    grammar = {
        None: {"tracks"},
        "tracks": {"track"},
        "track": {"point", "obs"},
    }

    def __init__(self, camera_ids: set[str], warn: WarnFn | None):
        super().__init__(warn)
        self.camera_ids = camera_ids
        self.seen_ids: set[str] = set()
        self.track_id: str | None = None
        self.track_line = 0
        self.points: dict[str, np.ndarray] = {}
        self.obs: list[Observation] = []

    def on_start(self, tag: str, attrs: dict[str, str]):
        line = self.line
        if tag == "track":
            a = _take_attrs(tag, attrs, ("id",), line, self.warn)
            if a["id"] in self.seen_ids:
                raise DuplicateId(f"track id {a['id']!r} appears twice (line {line})")
            self.track_id, self.track_line = a["id"], line
            self.points, self.obs = {}, []
        elif tag == "point":
            a = _take_attrs(tag, attrs, ("kind", "x", "y", "z"), line, self.warn)
            if a["kind"] not in ("initial", "final"):
                raise SchemaError(f"point kind must be initial|final, got {a['kind']!r}", line)
            if a["kind"] in self.points:
                raise SchemaError(f"duplicate <point kind={a['kind']!r}>", line)
            self.points[a["kind"]] = np.array(
                [_parse_float(tag, k, a[k], line) for k in ("x", "y", "z")]
            )
        elif tag == "obs":
            a = _take_attrs(tag, attrs, ("camera", "u", "v"), line, self.warn)
            if a["camera"] not in self.camera_ids:
                raise UnknownCameraRef(
                    f"track {self.track_id!r} references unknown camera {a['camera']!r} (line {line})"
                )
            self.obs.append(
                Observation(
                    camera_id=a["camera"],
                    pixel=np.array(
                        [_parse_float(tag, "u", a["u"], line), _parse_float(tag, "v", a["v"], line)]
                    ),
                )
            )
        elif tag == "tracks":
            _take_attrs(tag, attrs, (), line, self.warn)

    def on_end(self, tag: str):
        if tag == "track":
            line = self.line
            if "initial" not in self.points:
                raise SchemaError(f"track {self.track_id!r} missing <point kind=\"initial\">", line)
            if len(self.obs) < 2:
                raise TooFewObservations(
                    f"track {self.track_id!r} has {len(self.obs)} observation(s), needs >= 2"
                    f" (line {line})"
                )
            assert self.track_id is not None
            self.seen_ids.add(self.track_id)
            self.done.append(
                Track(
                    id=self.track_id,
                    observations=tuple(self.obs),
                    point_initial=self.points["initial"],
                    point_final=self.points.get("final"),
                )
            )
            self.obs = []


def parse_cameras(source, *, on_warning: WarnFn | None = None) -> list[Camera]:
    """Parse a cameras XML document (bytes, path, or binary stream).

    Cameras come back in document order. Quaternions within 1e-6 of unit norm
    are renormalized; anything farther off raises ValueError. Unknown
    attributes are reported through ``on_warning``; unknown elements raise
    SchemaError with the offending line number.
    """
    return list(_CamerasParser(on_warning).run(source))


def iter_tracks(source, cameras: Iterable[Camera], *, on_warning: WarnFn | None = None) -> Iterator[Track]:
    """Stream tracks from an XML document one Track at a time.

    Memory stays bounded by the largest single element regardless of file
    size; use this for multi-gigabyte files instead of parse_tracks.
    """
    camera_ids = {c.id for c in cameras}
    return _TracksParser(camera_ids, on_warning).run(source)


def parse_tracks(source, cameras: Iterable[Camera], *, on_warning: WarnFn | None = None) -> list[Track]:
    """Parse a tracks XML document into a list (see iter_tracks for streaming)."""
    return list(iter_tracks(source, cameras, on_warning=on_warning))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    # 17 significant digits round-trip any float64 exactly.
    return format(float(value), ".17g")


def _write_pose(out: IO[bytes], kind: str, pose: Pose) -> None:
    q, c = pose.rotation, pose.center
    out.write(
        (
            f'    <pose kind="{kind}">\n'
            f'      <rotation qw="{_fmt(q[0])}" qx="{_fmt(q[1])}" qy="{_fmt(q[2])}" qz="{_fmt(q[3])}"/>\n'
            f'      <center x="{_fmt(c[0])}" y="{_fmt(c[1])}" z="{_fmt(c[2])}"/>\n'
            f"    </pose>\n"
        ).encode()
    )


def write_cameras_file(out: IO[bytes], cameras: Iterable[Camera], *, include_final: bool = True) -> None:
    out.write(b'<?xml version="1.0" encoding="UTF-8"?>\n<cameras>\n')
    for cam in cameras:
        k = cam.intrinsics
        out.write(f"  <camera id={quoteattr(cam.id)}>\n".encode())
        out.write(
            f'    <image src={quoteattr(cam.image_ref)} width="{k.width}" height="{k.height}"/>\n'.encode()
        )
        out.write(
            f'    <intrinsics fx="{_fmt(k.fx)}" fy="{_fmt(k.fy)}" cx="{_fmt(k.cx)}" cy="{_fmt(k.cy)}"/>\n'.encode()
        )
        _write_pose(out, "initial", cam.pose_initial)
        if include_final and cam.pose_final is not None:
            _write_pose(out, "final", cam.pose_final)
        out.write(b"  </camera>\n")
    out.write(b"</cameras>\n")


def _write_point(out: IO[bytes], kind: str, p: np.ndarray) -> None:
    out.write(f'    <point kind="{kind}" x="{_fmt(p[0])}" y="{_fmt(p[1])}" z="{_fmt(p[2])}"/>\n'.encode())


def write_tracks_file(out: IO[bytes], tracks: Iterable[Track], *, include_final: bool = True) -> None:
    out.write(b'<?xml version="1.0" encoding="UTF-8"?>\n<tracks>\n')
    for track in tracks:
        if track.point_initial is None:
            raise ValueError(f"track {track.id!r} has no initial point; triangulate before writing")
        out.write(f"  <track id={quoteattr(track.id)}>\n".encode())
        _write_point(out, "initial", track.point_initial)
        if include_final and track.point_final is not None:
            _write_point(out, "final", track.point_final)
        for obs in track.observations:
            out.write(
                f'    <obs camera={quoteattr(obs.camera_id)} u="{_fmt(obs.pixel[0])}" v="{_fmt(obs.pixel[1])}"/>\n'.encode()
            )
        out.write(b"  </track>\n")
    out.write(b"</tracks>\n")


def serialize(dataset: Dataset, *, include_final: bool = True) -> tuple[bytes, bytes]:
    """Serialize to (cameras_xml, tracks_xml) byte strings.

    Deterministic: same dataset, same bytes. Numbers use 17 significant
    digits, so a parse of the output reproduces every float64 exactly.
    """
    cam_buf, trk_buf = io.BytesIO(), io.BytesIO()
    write_cameras_file(cam_buf, dataset.cameras, include_final=include_final)
    write_tracks_file(trk_buf, dataset.tracks, include_final=include_final)
    return cam_buf.getvalue(), trk_buf.getvalue()


def content_digest(dataset: Dataset) -> str:
    """SHA-256 over the canonical initial-state serialization.

    Final poses/points are excluded on purpose: the digest identifies the
    optimization *problem* (structure + initial states), so it is stable
    whether or not a result has been written back into the files.
    """
    cam_bytes, trk_bytes = serialize(dataset, include_final=False)
    h = hashlib.sha256()
    h.update(cam_bytes)
    h.update(b"\x00")
    h.update(trk_bytes)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate(dataset: Dataset) -> list[str]:
    """Non-fatal dataset diagnostics.

    Returns warnings for cameras no track references, tracks whose viewing
    rays separate by less than 1 degree (ill-posed triangulation), and
    observations falling outside their image bounds.
    """
    warnings: list[str] = []
    referenced = {obs.camera_id for track in dataset.tracks for obs in track.observations}
    for cam in dataset.cameras:
        if cam.id not in referenced:
            warnings.append(f"camera {cam.id!r} is not referenced by any track")
    by_id = dataset.camera_by_id
    for track in dataset.tracks:
        if track.point_initial is not None:
            angle = triangulation_angle(track, by_id)
            if angle < LOW_ANGLE_DEG:
                warnings.append(
                    f"track {track.id!r} triangulation angle {angle:.4f} deg is below "
                    f"{LOW_ANGLE_DEG:.1f} deg (ill-posed)"
                )
        for obs in track.observations:
            k = by_id[obs.camera_id].intrinsics
            u, v = obs.pixel
            if not (0 <= u < k.width and 0 <= v < k.height):
                warnings.append(
                    f"track {track.id!r} observation in camera {obs.camera_id!r} at "
                    f"({u:.2f}, {v:.2f}) lies outside the {k.width}x{k.height} image"
                )
    return warnings
