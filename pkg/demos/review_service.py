"""Serve a synthetic survey for interactive review over HTTP.

Builds a small noisy dataset with a few injected gross errors, saves it as
a session directory, and serves the review API on localhost. Point a
browser or curl at it:

    curl localhost:8008/api/session
    curl localhost:8008/api/scene
    curl -X POST localhost:8008/api/ba/run -d '{"config": {}}' \
         -H 'content-type: application/json'
    curl localhost:8008/api/jobs/job_000
    curl 'localhost:8008/api/rank/tracks?key=delta_rms&limit=5'
    curl -X DELETE localhost:8008/api/tracks/trk_00012
    curl 'localhost:8008/api/stats?filter={"kinds":["final"]}'

The equivalent one-liner once a session exists on disk:

    vector serve --session work/session.json --port 8008
"""

from __future__ import annotations

import argparse
import os
import tempfile

import uvicorn

from vector.dataset import serialize
from vector.server import create_app
from vector.session import open_session, save_session
from vector.synthetic import PosePerturbation, SyntheticConfig, generate_synthetic


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--port", type=int, default=8008)
    ap.add_argument("--workdir", help="session directory (default: a fresh temp dir)")
    args = ap.parse_args()

    workdir = args.workdir or tempfile.mkdtemp(prefix="vector_demo_")
    os.makedirs(workdir, exist_ok=True)

    cfg = SyntheticConfig(
        n_cameras=12,
        n_points=200,
        pixel_noise_sigma=0.5,
        n_outlier_tracks=4,
        pose_perturbation=PosePerturbation(rotation_deg=1.0, translation_frac=0.0),
        seed=2,
    )
    dataset = generate_synthetic(cfg)
    cam_xml, trk_xml = serialize(dataset, include_final=False)
    cameras_path = os.path.join(workdir, "cameras.xml")
    tracks_path = os.path.join(workdir, "tracks.xml")
    with open(cameras_path, "wb") as f:
        f.write(cam_xml)
    with open(tracks_path, "wb") as f:
        f.write(trk_xml)

    session = open_session(cameras_path, tracks_path)
    session_path = os.path.join(workdir, "session.json")
    save_session(session, session_path)

    print(f"session: {session_path}")
    print(f"injected outlier tracks: {', '.join(dataset.ground_truth.outlier_track_ids)}")
    print(f"serving on http://127.0.0.1:{args.port}  (ctrl-c to stop)")

    app = create_app(session, session_path=session_path, images_root=workdir)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
