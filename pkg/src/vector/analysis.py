"""Chart data and rankings over residual records.

Everything here is a pure function of residual record lists (and, for the
rankings, a finished optimization result), producing the numbers behind
histograms, radial plots, slope charts, per-track and per-image scores, and
the display filter. No plotting: callers render these however they like.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ba import BAResult
from .dataset import Dataset
from .errors import EmptyInput, MissingFinalState
from .geometry import ResidualRecord

__all__ = [
    "HistogramData",
    "RadialData",
    "SlopePair",
    "FilterState",
    "TrackScore",
    "ImageScore",
    "ImageSummary",
    "histogram",
    "radial",
    "slope_pairs",
    "angular_concentration",
    "rank_tracks",
    "rank_images",
    "apply_filter",
    "image_summary",
]

RANK_KEYS = ("max_final_length", "mean_final_length", "delta_rms", "concentration")

DEFAULT_BINS = 20


@dataclass(frozen=True, eq=False)
class HistogramData:
    """Equal-width binning of residual lengths.

    Out-of-range lengths are clamped into the end bins; the last bin is
    right-inclusive, all others right-exclusive.
    """

    bin_edges: np.ndarray  # (n_bins + 1,), ascending
    counts: np.ndarray  # (n_bins,), integers

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def to_dict(self) -> dict:
        return {
            "bin_edges": [float(e) for e in self.bin_edges],
            "counts": [int(c) for c in self.counts],
        }


@dataclass(frozen=True, eq=False)
class RadialData:
    """Residual vectors re-rooted at a common origin."""

    endpoints: np.ndarray  # (n, 2)
    max_radius: float

    def to_dict(self) -> dict:
        return {
            "endpoints": [[float(x), float(y)] for x, y in self.endpoints],
            "max_radius": float(self.max_radius),
        }


@dataclass(frozen=True)
class SlopePair:
    """Pre/post length pair for one (camera, track) observation."""

    camera_id: str
    track_id: str
    pre_length: float
    post_length: float

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "track_id": self.track_id,
            "pre_length": self.pre_length,
            "post_length": self.post_length,
        }


@dataclass(frozen=True)
class FilterState:
    """The five-way residual display filter.

    kinds selects record kinds; length_range and angle_range bound the
    rounded length/angle (angle ranges wrap: [350, 10] covers 350..360 and
    0..10, and start == end means the full circle); precision is the number
    of decimal digits both values are rounded to before comparison; scale is
    a pure rendering magnification that never affects membership.
    """

    kinds: frozenset = frozenset({"initial", "final"})
    length_range: tuple = (0.0, math.inf)
    angle_range: tuple = (0.0, 0.0)
    precision: int = 12
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kinds", frozenset(self.kinds))
        object.__setattr__(self, "length_range", tuple(float(v) for v in self.length_range))
        object.__setattr__(self, "angle_range", tuple(float(v) for v in self.angle_range))
        bad = self.kinds - {"initial", "final"}
        if bad:
            raise ValueError(f"unknown residual kinds: {sorted(bad)}")
        lo, hi = self.length_range
        if not (lo <= hi):
            raise ValueError("length_range min must be <= max")
        if lo < 0:
            raise ValueError("length_range must be non-negative")
        a, b = self.angle_range
        if not (0 <= a < 360 and 0 <= b < 360):
            raise ValueError("angle_range endpoints must lie in [0, 360)")
        if not (0 <= int(self.precision) <= 12) or self.precision != int(self.precision):
            raise ValueError("precision must be an integer in [0, 12]")
        object.__setattr__(self, "precision", int(self.precision))
        if not self.scale > 0:
            raise ValueError("scale must be > 0")

    @staticmethod
    def from_dict(d: dict) -> "FilterState":
        d = dict(d)
        kwargs = {}
        if "kinds" in d:
            kwargs["kinds"] = frozenset(d["kinds"])
        if "length_range" in d:
            lo, hi = d["length_range"]
            kwargs["length_range"] = (lo, math.inf if hi is None else hi)
        if "angle_range" in d:
            kwargs["angle_range"] = tuple(d["angle_range"])
        for k in ("precision", "scale"):
            if k in d:
                kwargs[k] = d[k]
        return FilterState(**kwargs)

    def to_dict(self) -> dict:
        lo, hi = self.length_range
        return {
            "kinds": sorted(self.kinds),
            "length_range": [lo, None if math.isinf(hi) else hi],
            "angle_range": list(self.angle_range),
            "precision": self.precision,
            "scale": self.scale,
        }


@dataclass(frozen=True)
class TrackScore:
    track_id: str
    max_final_length: float
    mean_final_length: float
    delta_rms: float
    concentration: float

    def to_dict(self) -> dict:
        return {
            "track_id": self.track_id,
            "max_final_length": self.max_final_length,
            "mean_final_length": self.mean_final_length,
            "delta_rms": self.delta_rms,
            "concentration": self.concentration,
        }


@dataclass(frozen=True)
class ImageScore:
    camera_id: str
    max_final_length: float
    mean_final_length: float
    delta_rms: float
    concentration: float
    n_observations: int

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "max_final_length": self.max_final_length,
            "mean_final_length": self.mean_final_length,
            "delta_rms": self.delta_rms,
            "concentration": self.concentration,
            "n_observations": self.n_observations,
        }


@dataclass(frozen=True, eq=False)
class ImageSummary:
    """Per-image bundle backing one Image Grid card."""

    camera_id: str
    counts: dict
    histogram: HistogramData
    radial: RadialData
    slopes: tuple

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "counts": dict(self.counts),
            "histogram": self.histogram.to_dict(),
            "radial": self.radial.to_dict(),
            "slopes": [s.to_dict() for s in self.slopes],
        }


# ---------------------------------------------------------------------------
# Chart data
# ---------------------------------------------------------------------------

def histogram(
    residuals: Iterable[ResidualRecord],
    n_bins: int = DEFAULT_BINS,
    value_range: tuple | None = None,
) -> HistogramData:
    """Equal-width histogram of residual lengths.

    With no explicit range, bins span [0, max observed length] (or [0, 1]
    when that would be empty). Lengths outside the range are clamped into
    the end bins; the last bin includes its right edge.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    lengths = np.array([r.length for r in residuals], dtype=float)
    if value_range is None:
        top = float(lengths.max()) if len(lengths) else 0.0
        value_range = (0.0, top if top > 0 else 1.0)
    lo, hi = float(value_range[0]), float(value_range[1])
    if not hi > lo:
        raise ValueError("range max must be > range min")
    edges = np.linspace(lo, hi, n_bins + 1)
    counts = np.zeros(n_bins, dtype=int)
    if len(lengths):
        idx = np.searchsorted(edges, lengths, side="right") - 1
        idx = np.clip(idx, 0, n_bins - 1)
        np.add.at(counts, idx, 1)
    return HistogramData(bin_edges=edges, counts=counts)


def radial(residuals: Iterable[ResidualRecord]) -> RadialData:
    """Residual vectors as endpoints around a shared origin."""
    records = list(residuals)
    if not records:
        return RadialData(endpoints=np.zeros((0, 2)), max_radius=0.0)
    endpoints = np.stack([r.vector for r in records])
    return RadialData(endpoints=endpoints, max_radius=float(max(r.length for r in records)))


def slope_pairs(
    residuals_initial: Iterable[ResidualRecord],
    residuals_final: Iterable[ResidualRecord],
) -> tuple[list[SlopePair], int]:
    """Inner join of pre/post lengths on (camera_id, track_id).

    Returns the pairs (in the order of the initial list) plus the number of
    records on either side that had no partner.
    """
    final_by_key = {(r.camera_id, r.track_id): r for r in residuals_final}
    pairs = []
    matched = set()
    n_initial = 0
    for rec in residuals_initial:
        n_initial += 1
        key = (rec.camera_id, rec.track_id)
        other = final_by_key.get(key)
        if other is not None:
            pairs.append(
                SlopePair(
                    camera_id=rec.camera_id,
                    track_id=rec.track_id,
                    pre_length=rec.length,
                    post_length=other.length,
                )
            )
            matched.add(key)
    omissions = (n_initial - len(matched)) + (len(final_by_key) - len(matched))
    return pairs, omissions


def angular_concentration(residuals: Iterable[ResidualRecord]) -> float:
    """Mean resultant length of the residual directions.

    0 means directions cancel (uniform spray), 1 means a single shared
    direction. Zero-length residuals carry no direction and are excluded.

    Raises:
        EmptyInput: no residual with positive length.
    """
    units = []
    for r in residuals:
        if r.length > 0:
            units.append(r.vector / r.length)
    if not units:
        raise EmptyInput("no residuals with positive length")
    mean = np.sum(units, axis=0) / len(units)
    return float(np.linalg.norm(mean))


# ---------------------------------------------------------------------------
# Rankings
# ---------------------------------------------------------------------------

def _group_by(records: Iterable[ResidualRecord], attr: str) -> dict:
    groups: dict = {}
    for r in records:
        groups.setdefault(getattr(r, attr), []).append(r)
    return groups


def _rms(records: Sequence[ResidualRecord]) -> float:
    if not records:
        return 0.0
    return math.sqrt(sum(r.length**2 for r in records) / len(records))


def _concentration_or_zero(records: Sequence[ResidualRecord]) -> float:
    try:
        return angular_concentration(records)
    except EmptyInput:
        return 0.0


def _check_result(ba_result: BAResult) -> None:
    if not ba_result.residuals_final:
        raise MissingFinalState("ba_result carries no final residuals")


def rank_tracks(dataset: Dataset, ba_result: BAResult, key: str) -> list[TrackScore]:
    """Per-track scores, descending by ``key``, ties broken by track_id."""
    if key not in RANK_KEYS:
        raise ValueError(f"key must be one of {RANK_KEYS}, got {key!r}")
    _check_result(ba_result)
    pre = _group_by(ba_result.residuals_initial, "track_id")
    post = _group_by(ba_result.residuals_final, "track_id")
    scores = []
    for track in dataset.tracks:
        post_recs = post.get(track.id, [])
        pre_recs = pre.get(track.id, [])
        lengths = [r.length for r in post_recs]
        scores.append(
            TrackScore(
                track_id=track.id,
                max_final_length=max(lengths) if lengths else 0.0,
                mean_final_length=sum(lengths) / len(lengths) if lengths else 0.0,
                delta_rms=_rms(post_recs) - _rms(pre_recs),
                concentration=_concentration_or_zero(post_recs),
            )
        )
    scores.sort(key=lambda s: (-getattr(s, key), s.track_id))
    return scores


def rank_images(dataset: Dataset, ba_result: BAResult, key: str) -> list[ImageScore]:
    """Per-camera aggregate scores, same ordering contract as rank_tracks."""
    if key not in RANK_KEYS:
        raise ValueError(f"key must be one of {RANK_KEYS}, got {key!r}")
    _check_result(ba_result)
    pre = _group_by(ba_result.residuals_initial, "camera_id")
    post = _group_by(ba_result.residuals_final, "camera_id")
    scores = []
    for cam in dataset.cameras:
        post_recs = post.get(cam.id, [])
        pre_recs = pre.get(cam.id, [])
        lengths = [r.length for r in post_recs]
        scores.append(
            ImageScore(
                camera_id=cam.id,
                max_final_length=max(lengths) if lengths else 0.0,
                mean_final_length=sum(lengths) / len(lengths) if lengths else 0.0,
                delta_rms=_rms(post_recs) - _rms(pre_recs),
                concentration=_concentration_or_zero(post_recs),
                n_observations=len(post_recs),
            )
        )
    scores.sort(key=lambda s: (-getattr(s, key), s.camera_id))
    return scores


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------

def _angle_in_range(angle: float, start: float, end: float) -> bool:
    if start == end:
        return True  # degenerate range = no angular constraint
    if start <= end:
        return start <= angle <= end
    return angle >= start or angle <= end


def apply_filter(
    residuals: Iterable[ResidualRecord], filter_state: FilterState
) -> list[ResidualRecord]:
    """Keep records passing the kind, length, and angle tests.

    Length and angle are rounded to ``precision`` decimal digits before the
    range comparisons; ``scale`` is a rendering hint and plays no part here.
    """
    lo, hi = filter_state.length_range
    a, b = filter_state.angle_range
    p = filter_state.precision
    kept = []
    for rec in residuals:
        if rec.kind not in filter_state.kinds:
            continue
        length = round(rec.length, p)
        if not (lo <= length <= hi):
            continue
        angle = round(rec.angle, p) % 360.0
        if not _angle_in_range(angle, a, b):
            continue
        kept.append(rec)
    return kept


def image_summary(
    camera_id: str,
    residuals: Iterable[ResidualRecord],
    n_bins: int = DEFAULT_BINS,
    value_range: tuple | None = None,
) -> ImageSummary:
    """Chart bundle for one image: counts, histogram, radial, slope pairs.

    The histogram and radial cover the final-kind records when any exist,
    otherwise the initial ones (pre-BA browsing).
    """
    records = [r for r in residuals if r.camera_id == camera_id]
    initial = [r for r in records if r.kind == "initial"]
    final = [r for r in records if r.kind == "final"]
    shown = final if final else initial
    pairs, _ = slope_pairs(initial, final)
    return ImageSummary(
        camera_id=camera_id,
        counts={"initial": len(initial), "final": len(final)},
        histogram=histogram(shown, n_bins=n_bins, value_range=value_range),
        radial=radial(shown),
        slopes=tuple(pairs),
    )
