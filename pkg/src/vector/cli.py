"""Batch command line front end.

Subcommands
    synth   generate a synthetic dataset and write cameras.xml / tracks.xml
    ba      optimize a dataset and write the results back as kind="final"
    report  emit an analysis JSON document for a session
    edit    apply track/camera deletions listed in files to a session
    serve   start the HTTP/JSON review service

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
inputs, unknown ids), 3 numerical failure (the optimizer or a geometric
routine could not produce an answer).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

from .analysis import (
    angular_concentration,
    histogram,
    rank_images,
    rank_tracks,
)
from .ba import BAConfig, evaluate_residuals
from .dataset import serialize, validate
from .errors import (
    CheiralityViolation,
    DegenerateConfiguration,
    DegenerateGeometry,
    EmptyInput,
    MissingFinalState,
    NumericalFailure,
    SingularSystem,
    VectorError,
)
from .session import (
    Session,
    current_result,
    delete_camera,
    delete_track,
    effective_dataset,
    load_session,
    open_session,
    rerun,
    run_dataset,
    run_result,
    save_session,
)
from .synthetic import SyntheticConfig, generate_synthetic

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

_NUMERICAL_ERRORS = (
    NumericalFailure,
    SingularSystem,
    CheiralityViolation,
    DegenerateGeometry,
    DegenerateConfiguration,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exceptions, not sys.exit(2)."""

    def error(self, message):
        raise _UsageError(message)


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _write_xml_pair(out_dir: str, dataset, *, include_final: bool) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    cam_xml, trk_xml = serialize(dataset, include_final=include_final)
    cam_path = os.path.join(out_dir, "cameras.xml")
    trk_path = os.path.join(out_dir, "tracks.xml")
    with open(cam_path, "wb") as f:
        f.write(cam_xml)
    with open(trk_path, "wb") as f:
        f.write(trk_xml)
    return cam_path, trk_path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = SyntheticConfig.from_dict(_load_json(args.config)) if args.config else SyntheticConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    dataset = generate_synthetic(cfg)
    cam_path, trk_path = _write_xml_pair(args.out, dataset, include_final=False)
    print(f"wrote {cam_path} ({len(dataset.cameras)} cameras)")
    print(f"wrote {trk_path} ({len(dataset.tracks)} tracks, {dataset.n_observations} observations)")
    if dataset.ground_truth and dataset.ground_truth.outlier_track_ids:
        ids_path = os.path.join(args.out, "outlier_ids.txt")
        with open(ids_path, "w", encoding="utf-8") as f:
            f.write("\n".join(dataset.ground_truth.outlier_track_ids) + "\n")
        print(f"wrote {ids_path} ({len(dataset.ground_truth.outlier_track_ids)} injected outliers)")
    return EXIT_OK


def cmd_ba(args) -> int:
    if args.session:
        if args.cameras or args.tracks:
            raise _UsageError("--session cannot be combined with --cameras/--tracks")
        session = load_session(args.session, on_warning=_warn)
    else:
        if not (args.cameras and args.tracks):
            raise _UsageError("ba needs --cameras and --tracks, or --session")
        session = open_session(args.cameras, args.tracks, on_warning=_warn)
    config = BAConfig.from_dict(_load_json(args.config)) if args.config else BAConfig()

    run = rerun(session, config)
    result = run_result(session, run.run_id)
    finalized = result.apply_to(run_dataset(session, run.run_id))
    _write_xml_pair(args.out, finalized, include_final=True)

    # The session file makes the run reproducible and feeds report/edit/serve.
    # A fresh session is rooted at the output copies; an existing one keeps
    # its own base references and is saved back in place.
    if args.session:
        session_path = args.session
    else:
        session.cameras_path = "cameras.xml"
        session.tracks_path = "tracks.xml"
        session_path = os.path.join(args.out, "session.json")
    save_session(session, session_path)

    print(
        f"{run.run_id}: {run.iterations} iterations, cost {run.initial_cost:.6e} -> "
        f"{run.final_cost:.6e} ({run.termination_reason})"
    )
    print(f"rms {result.rms('initial'):.4f} -> {result.rms('final'):.4f} px")
    print(f"wrote results to {args.out}; session at {session_path}")
    return EXIT_OK


def _concentration_or_none(records) -> float | None:
    try:
        return angular_concentration(records)
    except EmptyInput:
        return None


def cmd_report(args) -> int:
    session = load_session(args.session, on_warning=_warn)
    eff = effective_dataset(session)
    initial = evaluate_residuals(eff, "initial")
    # None when the log has advanced past the last run: the current dataset
    # has no solve yet, so the report carries initial-state figures only.
    result = current_result(session)

    doc = {
        "session": args.session,
        "name": eff.name,
        "n_cameras": len(eff.cameras),
        "n_tracks": len(eff.tracks),
        "n_observations": eff.n_observations,
        "edits": [op.to_dict() for op in session.edit_log],
        "runs": [run.to_dict() for run in session.runs],
        "validation_warnings": validate(eff),
        "rms_initial": float(math.sqrt(sum(r.length**2 for r in initial) / len(initial)))
        if initial
        else 0.0,
        "histogram_initial": histogram(initial).to_dict(),
        "concentration_initial": _concentration_or_none(initial),
    }
    if result is not None:
        final = result.residuals_final
        doc["rms_final"] = result.rms("final")
        doc["histogram_final"] = histogram(final).to_dict()
        doc["concentration_final"] = _concentration_or_none(final)
        doc["top_tracks"] = [
            s.to_dict() for s in rank_tracks(eff, result, "max_final_length")[:10]
        ]
        doc["top_images"] = [
            s.to_dict() for s in rank_images(eff, result, "max_final_length")[:10]
        ]
    else:
        doc["rms_final"] = None

    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def _read_ids(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]


def cmd_edit(args) -> int:
    if not args.delete_tracks and not args.delete_cameras:
        raise _UsageError("edit needs --delete-tracks and/or --delete-cameras")
    session = load_session(args.session, on_warning=_warn)

    n = 0
    if args.delete_tracks:
        for tid in _read_ids(args.delete_tracks):
            delete_track(session, tid, on_warning=_warn)
            n += 1
    if args.delete_cameras:
        for cid in _read_ids(args.delete_cameras):
            delete_camera(session, cid, on_warning=_warn)
            n += 1
    save_session(session, args.session)
    eff = effective_dataset(session)
    print(
        f"applied {n} edit(s); log length {len(session.edit_log)}; effective dataset "
        f"{len(eff.cameras)} cameras, {len(eff.tracks)} tracks, {eff.n_observations} observations"
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    session = load_session(args.session, on_warning=_warn)
    images_root = args.images_root
    if images_root is None:
        # Image references in the cameras file are relative to that file.
        session_dir = os.path.dirname(os.path.abspath(args.session))
        images_root = os.path.dirname(os.path.join(session_dir, session.cameras_path))
    app = create_app(session, session_path=args.session, images_root=images_root)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser / dispatch
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="vector", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON file of generator parameters")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ba", help="run the optimizer and write results back")
    p.add_argument("--cameras", help="cameras XML file")
    p.add_argument("--tracks", help="tracks XML file")
    p.add_argument("--session", help="run on an existing session instead")
    p.add_argument("--config", help="JSON file of solver parameters")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ba)

    p = sub.add_parser("report", help="write an analysis JSON document")
    p.add_argument("--session", required=True, help="session file")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("edit", help="apply deletions listed in id files")
    p.add_argument("--session", required=True, help="session file")
    p.add_argument("--delete-tracks", help="file with one track id per line")
    p.add_argument("--delete-cameras", help="file with one camera id per line")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("serve", help="start the HTTP review service")
    p.add_argument("--session", required=True, help="session file")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--images-root", help="directory image references resolve against")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VectorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
