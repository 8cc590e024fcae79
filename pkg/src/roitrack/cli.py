"""Command-line interface: ``roitrack {track,synth,eval,extract}``.

Exit status is 0 on success, 1 on a usage error and 2 on a data error.
Diagnostics go to stderr; results only to the files named on the command line.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .flow import FlowConfig
from .synthbench import MotionBounds, evaluate, generate_scenario
from .tracker import RegionTracker, TrackerConfig, validate_initial

log = logging.getLogger("roitrack")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="roitrack", description="Optical-flow region tracking.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    t = sub.add_parser("track", help="track ROIs through a frame sequence")
    t.add_argument("--frames", required=True, help="frame directory or raw stream used for tracking")
    t.add_argument("--rois", required=True, help="ROI config CSV (id,x,y,w,h)")
    t.add_argument("--method", choices=("median", "affine"), default="median")
    t.add_argument("--out", required=True, help="tracks CSV to write")
    t.add_argument("--data-frames", help="separate sequence to collect intensities from")
    t.add_argument("--intensity", help="intensity CSV to write")
    t.add_argument("--overlay", help="directory for overlay images")
    t.add_argument("--min-visible-frac", type=float, default=TrackerConfig.min_visible_frac)
    t.add_argument("--seedless", action="store_true",
                   help="accepted for script compatibility; tracking uses no randomness")

    s = sub.add_parser("synth", help="generate a synthetic benchmark scenario")
    s.add_argument("--source", required=True, help="still image to animate")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--frames", type=int, default=50)
    s.add_argument("--rotation-max", type=float, choices=(0, 5, 10), default=0)
    s.add_argument("--reflections", type=int, choices=(0, 10, 25), default=0)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--shear", type=float, default=3.0)
    s.add_argument("--scale-min", type=float, default=0.95)
    s.add_argument("--scale-max", type=float, default=1.05)
    s.add_argument("--step", type=float, default=3.0)
    s.add_argument("--rois", type=int, default=10)

    e = sub.add_parser("eval", help="score tracks against ground truth")
    e.add_argument("--tracks", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out", required=True, help="metrics CSV; the summary goes next to it")

    x = sub.add_parser("extract", help="mean ROI intensities from a frame sequence")
    x.add_argument("--frames", required=True)
    x.add_argument("--tracks", required=True)
    x.add_argument("--out", required=True)
    return p


def _cmd_track(a) -> None:
    if a.data_frames and not a.intensity:
        raise UsageError("--data-frames requires --intensity")
    try:
        cfg = TrackerConfig(method=a.method, min_visible_frac=a.min_visible_frac)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    frames = io.read_frames(a.frames)
    rois = io.read_rois(a.rois)
    try:
        validate_initial(rois, frames.width, frames.height)
    except ValueError as exc:
        raise io.DataError(str(exc)) from None
    data = None
    if a.data_frames:
        data = io.read_frames(a.data_frames, expect=(frames.height, frames.width))
        if len(data) != len(frames):
            raise io.DataError(f"frame count mismatch: {a.frames} has {len(frames)}, "
                               f"{a.data_frames} has {len(data)}")

    log.info("tracking %d ROIs through %d frames (%s)", len(rois), len(frames), a.method)
    it = iter(frames)
    trk = RegionTracker(next(it), rois, cfg, FlowConfig())
    for frame in it:
        trk.update(frame)
    traj = trk.trajectory()
    io.write_tracks(traj, a.out)
    io.write_timing(traj, io.timing_path(a.out))
    log.info("%.1f frames/s", traj.fps())

    if a.intensity:
        records = io.extract_intensity(data if data is not None else frames, traj,
                                       (frames.height, frames.width))
        io.write_intensity(records, a.intensity)
    if a.overlay:
        io.render_overlay(frames, traj, a.overlay)


def _cmd_synth(a) -> None:
    try:
        bounds = MotionBounds(max_shear=a.shear, scale_range=(a.scale_min, a.scale_max),
                              max_translation_step=a.step, max_rotation_deg=a.rotation_max,
                              n_reflections=a.reflections, n_frames=a.frames, n_rois=a.rois)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    source = io.read_image(a.source)
    scenario = generate_scenario(source, bounds, a.seed)
    out = Path(a.out)
    io.write_frames(scenario.frames, out / "frames")
    io.write_truth(scenario.truth, out / "truth.csv")
    io.write_rois(scenario.initial_rois, out / "rois.csv")
    meta = {"source": str(a.source), "seed": a.seed, "bounds": {
        "max_shear": bounds.max_shear, "scale_range": list(bounds.scale_range),
        "max_translation_step": bounds.max_translation_step,
        "max_rotation_deg": bounds.max_rotation_deg, "n_reflections": bounds.n_reflections,
        "n_frames": bounds.n_frames, "n_rois": bounds.n_rois}}
    (out / "scenario.json").write_text(json.dumps(meta, indent=2) + "\n")
    log.info("wrote %d frames to %s", len(scenario.frames), out)


def _cmd_eval(a) -> None:
    traj = io.read_tracks(a.tracks)
    truth = io.read_truth(a.truth)
    fps = float("nan")
    timing = io.timing_path(a.tracks)
    if timing.exists():
        fps = float(io.read_timing(timing)["fps"])
    try:
        ev = evaluate(traj, truth, fps=fps)
    except ValueError as exc:
        raise io.DataError(str(exc)) from None
    io.write_metrics(ev, a.out)
    summary = io.write_summary(ev, io.summary_path(a.out))
    log.info("jaccard q25=%.3f median=%.3f, fraction>=0.85: %.3f, fps=%.1f",
             summary["jaccard_q25"], summary["jaccard_median"], summary["fraction_ge_085"], fps)


def _cmd_extract(a) -> None:
    traj = io.read_tracks(a.tracks)
    frames = io.read_frames(a.frames)
    io.write_intensity(io.extract_intensity(frames, traj), a.out)


COMMANDS = {"track": _cmd_track, "synth": _cmd_synth, "eval": _cmd_eval, "extract": _cmd_extract}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"roitrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.DataError, ValueError, OSError) as exc:
        print(f"roitrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
