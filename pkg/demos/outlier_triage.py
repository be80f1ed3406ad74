"""Find and remove bad tracks, then prove the map got better.

This is the workload the package exists for: a survey with a handful of
gross matching errors buried in it. We optimize, rank tracks by how much
worse they got relative to where they started (delta_rms), delete the
flagged ones, re-optimize, and compare the two runs over their shared
observations.

The same flow is available from the shell:

    vector synth --config cfg.json --out work/
    vector ba --session work/session.json
    vector report --session work/session.json
    vector edit --session work/session.json --delete-tracks bad.txt
    vector ba --session work/session.json
"""

from __future__ import annotations

import argparse

from vector.analysis import rank_tracks
from vector.session import Session, compare, delete_track, effective_dataset, rerun, run_result
from vector.synthetic import PosePerturbation, SyntheticConfig, generate_synthetic


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cameras", type=int, default=20)
    ap.add_argument("--points", type=int, default=500)
    ap.add_argument("--outliers", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = SyntheticConfig(
        n_cameras=args.cameras,
        n_points=args.points,
        pixel_noise_sigma=0.5,
        n_outlier_tracks=args.outliers,
        pose_perturbation=PosePerturbation(rotation_deg=1.0, translation_frac=0.0),
        seed=args.seed,
    )
    dataset = generate_synthetic(cfg)
    injected = set(dataset.ground_truth.outlier_track_ids)
    print(f"dataset: {len(dataset.cameras)} cameras, {len(dataset.tracks)} tracks, "
          f"{args.outliers} tracks secretly corrupted")

    session = Session(dataset)
    first = rerun(session)
    print(f"\nrun {first.run_id}: {first.iterations} iterations, "
          f"final RMS {run_result(session, first.run_id).rms('final'):.4f} px")

    scores = rank_tracks(effective_dataset(session), run_result(session, first.run_id), "delta_rms")
    suspects = scores[: args.outliers]
    caught = sum(1 for s in suspects if s.track_id in injected)
    print(f"\ntop {args.outliers} tracks by delta_rms "
          f"({caught}/{args.outliers} are the injected ones):")
    for s in suspects:
        tag = "injected" if s.track_id in injected else "clean"
        print(f"  {s.track_id:12s} delta_rms {s.delta_rms:8.2f} px   [{tag}]")

    for s in suspects:
        delete_track(session, s.track_id)
    second = rerun(session)
    report = compare(session, first.run_id, second.run_id)

    rms_before = run_result(session, first.run_id).rms("final")
    rms_after = run_result(session, second.run_id).rms("final")
    print(f"\nafter deleting {len(suspects)} tracks and re-optimizing:")
    print(f"  final RMS {rms_before:.4f} -> {rms_after:.4f} px "
          f"({rms_before / rms_after:.1f}x better)")
    print(f"  paired observations: {report.paired_observations}, "
          f"delta RMS on shared observations: {report.delta_rms:+.4f} px")
    print(f"  removed tracks: {len(report.removed_track_ids)}")


if __name__ == "__main__":
    main()
