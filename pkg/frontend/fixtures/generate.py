"""Record golden API documents for the front-end test suite.

Runs the real review service in-process over a small synthetic dataset with
injected outlier tracks, walks the delete-and-rerun loop once, and captures
every response the browser tests replay through their fake fetch. Also emits
reference values for the decimal rounding the client must reproduce.

Usage: python3 generate.py [--out ../src/testdata]
"""

from __future__ import annotations

import argparse
import json
import os
import random
import statistics
import time

from fastapi.testclient import TestClient

from vector.server import create_app
from vector.session import Session
from vector.synthetic import PosePerturbation, SyntheticConfig, generate_synthetic

CONFIG = SyntheticConfig(
    n_cameras=10,
    n_points=100,
    pixel_noise_sigma=0.5,
    n_outlier_tracks=3,
    outlier_magnitude=50.0,
    pose_perturbation=PosePerturbation(rotation_deg=0.5, translation_frac=0.0),
    seed=9,
)

TERMINAL = ("done", "failed", "cancelled")


def run_to_done(client: TestClient) -> dict:
    resp = client.post("/api/ba/run", json={})
    assert resp.status_code == 202, resp.text
    job_id = resp.json()["job_id"]
    deadline = time.monotonic() + 120
    while time.monotonic() < deadline:
        doc = client.get(f"/api/jobs/{job_id}").json()
        if doc["state"] in TERMINAL:
            assert doc["state"] == "done", doc
            return doc
        time.sleep(0.01)
    raise AssertionError("run did not finish")


def capture_phase(client: TestClient, camera_ids: list[str], ranked: bool = True) -> dict:
    phase = {
        "session": client.get("/api/session").json(),
        "scene": client.get("/api/scene").json(),
        "images": client.get("/api/images").json(),
        "records": client.get("/api/records").json(),
        "stats_default": client.get("/api/stats").json(),
        "image_details": {
            camera_id: client.get(f"/api/images/{camera_id}").json()
            for camera_id in camera_ids
        },
    }
    if ranked:
        phase["rank_images"] = client.get(
            "/api/rank/images", params={"key": "max_final_length"}
        ).json()
        phase["rank_tracks"] = client.get(
            "/api/rank/tracks", params={"key": "delta_rms"}
        ).json()
    return phase


def flagged_track_in_image(records: list[dict], camera_id: str) -> tuple[str, bool]:
    """Replicate the image view's card ordering and flag rule.

    Cards group the camera's records by track, order by max final length
    (falling back to max overall), and flag tracks whose max final length is
    at least five times the image median.
    """
    per_track: dict[str, list[dict]] = {}
    for rec in records:
        if rec["camera_id"] == camera_id:
            per_track.setdefault(rec["track_id"], []).append(rec)
    max_final = {
        track_id: max(r["length"] for r in recs if r["kind"] == "final")
        for track_id, recs in per_track.items()
        if any(r["kind"] == "final" for r in recs)
    }
    med = statistics.median(max_final.values())
    ranked = sorted(
        per_track,
        key=lambda track_id: (
            -max_final.get(
                track_id, max(r["length"] for r in per_track[track_id])
            ),
            track_id,
        ),
    )
    top = ranked[0]
    flagged = med > 0 and max_final.get(top, 0.0) >= 5 * med
    return top, flagged


def stats_battery(client: TestClient, records: list[dict]) -> list[dict]:
    lengths = sorted(rec["length"] for rec in records)
    median_length = lengths[len(lengths) // 2]
    p90 = lengths[int(len(lengths) * 0.9)]
    filters: list[dict] = [
        {},
        {"kinds": ["initial"]},
        {"kinds": ["final"]},
        {"kinds": []},
        {"length_range": [0.25, 1.5]},
        {"length_range": [0.0, round(median_length, 2)]},
        {"length_range": [round(p90, 3), None]},
        {"angle_range": [350.0, 10.0]},
        {"angle_range": [90.0, 270.0]},
        {"angle_range": [10.0, 10.0]},
        {"precision": 0, "length_range": [0.0, 1.0]},
        {"precision": 1, "length_range": [0.05, 2.05]},
        {"precision": 2, "angle_range": [45.5, 315.25]},
        {"scale": 3.0, "length_range": [0.25, 1.5]},
        {
            "kinds": ["final"],
            "length_range": [0.5, None],
            "angle_range": [300.0, 60.0],
            "precision": 3,
        },
    ]
    out = []
    for raw in filters:
        doc = client.get("/api/stats", params={"filter": json.dumps(raw)}).json()
        out.append(
            {
                "sent": raw,
                "echo": doc["filter"],
                "count": doc["count"],
                "kind_counts": doc["kind_counts"],
            }
        )
    return out


def pyround_cases() -> list[list[float | int]]:
    rng = random.Random(20260819)
    cases: list[tuple[float, int]] = [
        (0.5, 0), (1.5, 0), (2.5, 0), (-0.5, 0), (-1.5, 0),
        (0.25, 1), (0.35, 1), (0.125, 2), (0.375, 2), (-0.125, 2),
        (2.675, 2), (0.005, 2), (1.005, 2), (359.9995, 3), (0.0001, 3),
        (1e-13, 12), (5e-13, 12), (123456.789, 2), (1.0, 5), (0.1, 12),
    ]
    for _ in range(600):
        digits = rng.randrange(0, 13)
        magnitude = 10 ** rng.uniform(-6, 3)
        value = rng.uniform(-1.0, 1.0) * magnitude
        cases.append((value, digits))
    for _ in range(200):
        digits = rng.randrange(0, 4)
        # Values sitting exactly on a decimal rounding boundary when the
        # binary double allows it; these separate tie rules cleanly.
        step = 10.0 ** -digits
        value = (rng.randrange(-2000, 2000) + 0.5) * step
        cases.append((value, digits))
    for _ in range(200):
        digits = rng.randrange(0, 13)
        cases.append((rng.uniform(0.0, 360.0), digits))
    return [[value, digits, round(value, digits)] for value, digits in cases]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out",
        default=os.path.join(os.path.dirname(__file__), "..", "src", "testdata"),
    )
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    dataset = generate_synthetic(CONFIG)
    assert dataset.ground_truth is not None
    injected = sorted(dataset.ground_truth.outlier_track_ids)
    camera_ids = [camera.id for camera in dataset.cameras]

    client = TestClient(create_app(Session(dataset)))

    job0 = run_to_done(client)
    phase0 = capture_phase(client, camera_ids)
    battery = stats_battery(client, phase0["records"]["records"])

    worst_camera = phase0["rank_images"]["images"][0]["camera_id"]
    flagged, is_flagged = flagged_track_in_image(
        phase0["records"]["records"], worst_camera
    )
    assert is_flagged, "top track card in the worst image must be flagged"
    assert flagged in injected, (
        f"flagged card {flagged} is not an injected outlier {injected}"
    )
    track_detail = client.get(f"/api/tracks/{flagged}").json()

    delete_result = client.delete(f"/api/tracks/{flagged}").json()
    # Between the edit and the rerun the previous solution is stale: the
    # service reports initial-only residuals and no result.
    edited = capture_phase(client, camera_ids, ranked=False)
    assert edited["session"]["has_result"] is False
    job1 = run_to_done(client)
    phase1 = capture_phase(client, camera_ids)
    compare = client.get(
        "/api/compare", params={"a": "run_000", "b": "run_001"}
    ).json()
    assert compare["delta_rms"] < 0, compare["delta_rms"]

    loop = {
        "injected_track_ids": injected,
        "worst_camera": worst_camera,
        "flagged_track": flagged,
        "flagged_track_detail": track_detail,
        "delete_result": delete_result,
        "jobs": {"run_000": job0, "run_001": job1},
        "compare": compare,
        "phase0": phase0,
        "edited": edited,
        "phase1": phase1,
    }

    with open(os.path.join(args.out, "loop.json"), "w") as fh:
        json.dump(loop, fh)
    with open(os.path.join(args.out, "stats_cases.json"), "w") as fh:
        json.dump(battery, fh)
    with open(os.path.join(args.out, "pyround.json"), "w") as fh:
        json.dump(pyround_cases(), fh)

    print(f"worst camera {worst_camera}, flagged track {flagged}")
    print(f"delta_rms {compare['delta_rms']:.4f}")
    print(f"records: {phase0['records']['count']} -> {phase1['records']['count']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
