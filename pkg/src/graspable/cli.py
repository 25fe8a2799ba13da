"""Command-line front end: score, extract, synth, bench, mask-dump.

Exit status: 0 success, 2 invalid input or configuration, 3 I/O or parse
failure, 4 computation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import uuid
from pathlib import Path

import numpy as np

from . import __version__
from . import config as configmod
from .bench import ChecksumMismatch, bench_csv, run_bench
from .cloud_io import (
    CLOUD_FORMATS,
    COLORMAPS,
    SCORED_FORMATS,
    parse_cloud,
    parse_scored_cloud,
    write_cloud,
    write_graspable_csv,
    write_scored_cloud,
)
from .exceptions import GraspableError, ValidationError, tag_stage
from .gripper_mask import create_gripper_mask
from .scoring import CANDIDATE_POLICIES, ENGINES
from .synth import generate_scene
from .terrain import FILL_MODES

log = logging.getLogger("graspable")

REPORT_SCHEMA = "graspable.run-report"
REPORT_VERSION = 1


class RunReport:
    """Append-only JSON-lines log; one record per completed stage."""

    def __init__(self, path=None, command="score"):
        self.path = path
        self.command = command
        self.run_id = uuid.uuid4().hex
        self.records = []

    def emit(self, stage, wall_time_s=None, **info):
        rec = {
            "schema": REPORT_SCHEMA,
            "schema_version": REPORT_VERSION,
            "run_id": self.run_id,
            "command": self.command,
            "stage": stage,
        }
        if wall_time_s is not None:
            rec["wall_time_s"] = round(float(wall_time_s), 9)
        rec.update(info)
        self.records.append(rec)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec


def _write_bytes(path, data: bytes):
    Path(path).write_bytes(data)


def _scored_format(path, fmt):
    if fmt:
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "ply_binary_le"


def _cloud_format(path, fmt):
    if fmt:
        return fmt
    return "xyz" if str(path).lower().endswith((".xyz", ".txt")) else "ply_binary_le"


def _timed(report, stage, fn, info=None):
    t0 = time.perf_counter()
    try:
        out = fn()
    except Exception as exc:
        raise tag_stage(exc, stage)
    report.emit(stage, time.perf_counter() - t0, **(info(out) if info else {}))
    return out


def cmd_score(cfg: configmod.RunConfig, report: RunReport | None = None) -> dict:
    """Run the whole pipeline on ``cfg.input`` and write the requested artifacts."""
    cfg.validate()
    if not cfg.input:
        raise ValidationError("no input cloud given")
    report = report or RunReport(cfg.report)
    t_start = time.perf_counter()

    def parse():
        with open(cfg.input, "rb") as fh:
            return parse_cloud(fh.read(), cfg.input_format)

    cloud = _timed(report, "parse", parse, lambda c: {"points": c.n, "dropped": c.dropped})
    est = cfg.estimator()
    est.fit(cloud, on_stage=lambda name, dt, info: report.emit(name, dt, **info))

    def write():
        written = []
        if cfg.scored:
            sc = est.scored_cloud(cfg.frame)
            fmt = _scored_format(cfg.scored, cfg.scored_format)
            _write_bytes(cfg.scored, write_scored_cloud(sc, fmt, cfg.colormap))
            written.append(cfg.scored)
        if cfg.graspable:
            pts, g = est.graspable_points(cfg.frame)
            _write_bytes(cfg.graspable, write_graspable_csv(pts, g))
            written.append(cfg.graspable)
        return written

    _timed(report, "write", write, lambda w: {"outputs": w})
    summary = est.summary()
    summary["wall_time_s"] = time.perf_counter() - t_start
    report.emit("summary", **summary)
    return summary


def cmd_extract(path, threshold, out=None) -> int:
    """Graspable set of an existing scored cloud; returns the member count."""
    threshold = float(threshold)
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"score threshold must lie in [0, 1], got {threshold}")
    with open(path, "rb") as fh:
        sc = parse_scored_cloud(fh.read())
    g32 = sc.scores.astype(np.float32).astype(np.float64)
    keep = np.flatnonzero(g32 >= threshold)
    # stable sort keeps file order (candidate order) among ties
    keep = keep[np.argsort(-g32[keep], kind="stable")]
    data = write_graspable_csv(sc.points[keep], sc.scores[keep])
    if out:
        _write_bytes(out, data)
    else:
        sys.stdout.write(data.decode("ascii"))
    return int(keep.size)


def cmd_synth(spec, out, fmt=None) -> int:
    cloud = generate_scene(spec)
    _write_bytes(out, write_cloud(cloud, _cloud_format(out, fmt)))
    return cloud.n


def cmd_bench(cfg: configmod.RunConfig, sizes, engines, voxel_sizes=(8.0, 4.0, 2.0),
              repeats=3, out=None) -> list:
    cfg.validate()
    for c in voxel_sizes:
        cfg.override(voxel_size=float(c)).validate()
    try:
        rows = run_bench(
            sizes=sizes, voxel_sizes=voxel_sizes, engines=engines,
            params=cfg.estimator().gripper_params(), fill_mode=cfg.fill_mode,
            candidates=cfg.candidates, threads=cfg.threads, repeats=repeats,
            seed=cfg.scene.seed, density=cfg.scene.density,
        )
    except ChecksumMismatch as exc:
        if out:
            _write_bytes(out, bench_csv(exc.rows).encode("ascii"))
        raise
    text = bench_csv(rows)
    if out:
        _write_bytes(out, text.encode("ascii"))
    else:
        sys.stdout.write(text)
    return rows


def mask_text(M) -> str:
    """Layer-by-layer drawing of a mask, top (pivot) layer first."""
    d = M.dense()
    lines = [f"# mask {d.shape[0]}x{d.shape[1]}x{d.shape[2]} c={M.voxel_size_mm:g}mm pivot={M.pivot}"]
    for k in range(d.shape[2] - 1, -1, -1):
        lines.append(f"# layer {k}")
        for i in range(d.shape[0]):
            lines.append("".join("#" if v else "." for v in d[i, :, k]))
    return "\n".join(lines) + "\n"


def cmd_mask_dump(cfg: configmod.RunConfig, out=None, fmt="gvox"):
    cfg.validate()
    M = create_gripper_mask(cfg.estimator().gripper_params(), cfg.voxel_size)
    if fmt == "gvox":
        if not out:
            raise ValidationError("binary mask dumps need an output path")
        _write_bytes(out, M.to_bytes())
    else:
        text = mask_text(M)
        if out:
            _write_bytes(out, text.encode("ascii"))
        else:
            sys.stdout.write(text)
    return M


def _add_pipeline_flags(p, scan=True):
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--voxel-size", type=float, metavar="MM", help="voxel edge c in mm")
    p.add_argument("--palm-diameter", type=float, metavar="MM")
    p.add_argument("--finger-length", type=float, metavar="MM")
    p.add_argument("--finger-angles", type=float, nargs=2, metavar=("MIN", "MAX"),
                   help="finger joint range in degrees")
    p.add_argument("--spine-clearance", type=float, metavar="MM")
    if scan:
        p.add_argument("--fill-mode", choices=FILL_MODES)
        p.add_argument("--candidates", choices=CANDIDATE_POLICIES)
        p.add_argument("--threads", type=int, help="scoring worker cap (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graspable", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score a point cloud end to end")
    p.add_argument("input", nargs="?", help="input cloud (PLY or xyz)")
    _add_pipeline_flags(p)
    p.add_argument("--input-format", choices=CLOUD_FORMATS)
    p.add_argument("-o", "--output", dest="scored", help="scored cloud (.ply or .csv)")
    p.add_argument("--scored-format", choices=SCORED_FORMATS)
    p.add_argument("-g", "--graspable", help="graspable-set CSV")
    p.add_argument("--report", help="JSON-lines run report (appended)")
    p.add_argument("--engine", choices=ENGINES)
    p.add_argument("--z-threshold", type=float, metavar="M")
    p.add_argument("--threshold", type=float, help="graspable score cutoff")
    p.add_argument("--colormap", choices=COLORMAPS)
    p.add_argument("--frame", choices=configmod.FRAMES, help="coordinate frame of outputs")

    p = sub.add_parser("extract", help="graspable set from a scored cloud")
    p.add_argument("scored", help="scored PLY or CSV")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("-o", "--output")

    p = sub.add_parser("synth", help="write a synthetic scene")
    p.add_argument("output")
    p.add_argument("--config")
    p.add_argument("--format", choices=CLOUD_FORMATS)
    p.add_argument("--seed", type=lambda s: int(s, 0))
    p.add_argument("--density", type=float, help="points per square meter")
    p.add_argument("--noise", type=float, help="height noise sigma in meters")
    p.add_argument("--tilt", type=float, help="base tilt in degrees")

    p = sub.add_parser("bench", help="engine/resolution benchmark on the pinned scene")
    _add_pipeline_flags(p)
    p.add_argument("--sizes", type=int, nargs="+", default=[25_600], help="input point counts")
    p.add_argument("--voxel-sizes", type=float, nargs="+", default=[8.0, 4.0, 2.0])
    p.add_argument("--engines", nargs="+", choices=ENGINES, default=list(ENGINES))
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=lambda s: int(s, 0))
    p.add_argument("-o", "--output")

    p = sub.add_parser("mask-dump", help="write the gripper mask")
    _add_pipeline_flags(p, scan=False)
    p.add_argument("-o", "--output")
    p.add_argument("--format", choices=("gvox", "text"), default="gvox")
    return parser


def _config_from_args(args) -> configmod.RunConfig:
    cfg = configmod.load(args.config) if getattr(args, "config", None) else configmod.RunConfig()
    flags = {}
    for name in ("input", "input_format", "scored", "scored_format", "graspable", "report",
                 "voxel_size", "palm_diameter", "finger_length", "spine_clearance", "fill_mode",
                 "candidates", "threads", "engine", "z_threshold", "threshold", "colormap", "frame"):
        flags[name] = getattr(args, name, None)
    if getattr(args, "finger_angles", None):
        flags["finger_angle_range"] = tuple(args.finger_angles)
    cfg = cfg.override(**flags)
    scene = {k: getattr(args, k, None) for k in ("seed", "density", "noise")}
    if getattr(args, "tilt", None) is not None:
        scene["tilt_deg"] = args.tilt
    scene = {k: v for k, v in scene.items() if v is not None}
    if scene:
        cfg = cfg.override(scene=type(cfg.scene).from_dict({**cfg.scene.to_dict(), **scene}))
    return cfg


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    report = None
    try:
        if args.command == "extract":
            n = cmd_extract(args.scored, args.threshold, args.output)
            log.info("%d graspable points", n)
            return 0
        cfg = _config_from_args(args)
        if args.command == "score":
            report = RunReport(cfg.report, "score")
            summary = cmd_score(cfg, report)
            log.info("%d candidates, %d graspable", summary["candidates"], summary["graspable"])
        elif args.command == "synth":
            n = cmd_synth(cfg.scene, args.output, args.format)
            log.info("wrote %d points to %s", n, args.output)
        elif args.command == "bench":
            if args.repeats < 1 or any(s < 1 for s in args.sizes):
                raise ValidationError("repeats and sizes must be >= 1")
            cmd_bench(cfg, args.sizes, args.engines, args.voxel_sizes, args.repeats, args.output)
        elif args.command == "mask-dump":
            cmd_mask_dump(cfg, args.output, args.format)
        return 0
    except GraspableError as exc:
        code = exc.exit_code
        msg = str(exc)
    except OSError as exc:
        code = 3
        msg = f"{exc.strerror or exc}: {exc.filename}" if exc.filename else str(exc)
    if report is not None and report.path is not None:
        try:
            report.emit("error", error=msg, exit_code=code)
        except OSError:
            pass
    print(f"graspable: error: {msg}", file=sys.stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
