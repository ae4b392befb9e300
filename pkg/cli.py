"""
Command-line interface for the procam calibration toolkit

Exit codes: 0 success (warnings allowed), 2 usage, 3 I/O, 4 schema or
invariant violation.
"""

import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Optional, Tuple

from pydantic import ValidationError

from config import Config
from procam.errors import InsufficientSupport, ProcamError, SchemaError
from procam.simulator import (
    SceneConfig,
    generate_board,
    multi_pose_configs,
    rotation_sweep,
    synthesize_graycode_stack,
    synthesize_observations,
)
from procam.structured_light import CorrespondenceSet, decode, generate_patterns, lift_corner
from utils.file_formats import (
    correspondence_document,
    load_calibration,
    load_correspondences,
    write_document,
)
from utils.image_io import ImageIO
from utils.pdf_generator import pdf_generator
from utils.procam_framework import ProcamFramework

logger = logging.getLogger("procam.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4

EVAL_COLUMNS = ["pose_id", "X", "Y", "Z", "absT", "reproj_cam", "reproj_pro", "reproj_stereo", "sigma_T"]


class UsageError(Exception):
    """Bad command-line values that argparse cannot catch"""


def _parse_range(text: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(part) for part in text.split(":"))
    except ValueError:
        raise UsageError(f"range must look like LOW:HIGH, got {text!r}")
    return lo, hi


def _parse_pair(text: str) -> Tuple[float, float]:
    try:
        a, b = (float(part) for part in text.split(","))
    except ValueError:
        raise UsageError(f"expected two comma-separated numbers, got {text!r}")
    return a, b


def _load_scene(path: Optional[str]) -> SceneConfig:
    if not path:
        return SceneConfig()
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("<config>", f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    try:
        return SceneConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise SchemaError(".".join(str(p) for p in first["loc"]), first["msg"]) from exc


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


# ==================== Commands ====================


def cmd_simulate(args) -> int:
    scene = _load_scene(args.config)
    updates = {}
    if args.seed is not None:
        updates["rng_seed"] = args.seed
    if args.noise is not None:
        updates["noise_sigma_px"] = args.noise
    if args.k1 is not None:
        updates["camera_k1"] = args.k1
    scene = scene.model_copy(update=updates)

    print("🧪 Synthesizing observations...")
    corr, truth = synthesize_observations(scene)
    write_document(args.out, correspondence_document(corr, truth))
    print(f"✓ {len(corr)} corners written to {args.out}")

    if args.poses:
        stem, ext = os.path.splitext(args.out)
        for k, pose_cfg in enumerate(multi_pose_configs(scene, args.poses)):
            pose_corr, pose_truth = synthesize_observations(pose_cfg)
            path = f"{stem}_pose{k}{ext}"
            write_document(path, correspondence_document(pose_corr, pose_truth))
            print(f"✓ pose {k} written to {path}")

    if args.stack:
        print("🎞️  Rendering Gray-code stack...")
        patterns, stack, _ = synthesize_graycode_stack(scene)
        manifest = ImageIO.write_stack(args.stack, patterns, stack)
        corners_path = os.path.join(args.stack, "corners.json")
        ImageIO.write_corners(corners_path, corr.camera, corr.rows, corr.cols, corr.spacing_mm)
        print(f"✓ {len(stack)} frames, manifest {manifest}, corners {corners_path}")
    return EXIT_OK


def cmd_patterns(args) -> int:
    patterns = generate_patterns(args.width, args.height)
    manifest = ImageIO.write_stack(args.out, patterns, patterns.patterns, prefix="pattern")
    print(f"✓ {len(patterns.patterns)} patterns written, manifest {manifest}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    framework = ProcamFramework()
    framework.load_correspondences(path=args.correspondences)
    center = _parse_pair(args.center) if args.center else None
    document = framework.calibrate(lm_max_iters=args.lm_max_iters, center_override=center)
    write_document(args.out, document)
    print(f"✓ Calibration written to {args.out}")

    errors = framework.ground_truth_errors()
    if errors:
        print(
            f"   vs ground truth: Δf_c {100 * errors['f_c_rel']:.3f}%, "
            f"Δf_p {100 * errors['f_p_rel']:.3f}%, Δ|T| {100 * errors['baseline_rel']:.3f}%"
        )

    if args.report:
        with open(args.report, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["quantity", "value"])
            for block, values in (
                ("K_c", document.K_c), ("K_p", document.K_p), ("distortion", document.distortion)
            ):
                for key, value in values.model_dump().items():
                    if isinstance(value, (list, tuple)):
                        for i, v in enumerate(value):
                            writer.writerow([f"{block}.{key}[{i}]", _fmt(v)])
                    else:
                        writer.writerow([f"{block}.{key}", _fmt(value)])
            for key, value in document.residuals.items():
                writer.writerow([key, _fmt(value)])
        print(f"✓ Report written to {args.report}")

    if args.pdf:
        with open(args.pdf, "wb") as handle:
            handle.write(pdf_generator.generate_calibration_report(document).getvalue())
        print(f"✓ PDF written to {args.pdf}")
    return EXIT_OK


def cmd_decode(args) -> int:
    if args.contrast_threshold is not None:
        Config.set_threshold("contrast", args.contrast_threshold)
    if args.span_threshold is not None:
        Config.set_threshold("span", args.span_threshold)
    if args.window_radius is not None:
        Config.set_threshold("window_radius", args.window_radius)

    print("🔍 Decoding Gray-code stack...")
    patterns, stack = ImageIO.read_stack(args.manifest)
    corners = ImageIO.read_corners(args.corners)
    board_meta = corners.board
    rows, cols, spacing = int(board_meta["rows"]), int(board_meta["cols"]), float(board_meta["spacing_mm"])
    if len(corners.corners) != rows * cols:
        raise SchemaError("corners", f"{len(corners.corners)} corners for a {cols}x{rows} board")

    cmap = decode(stack, patterns)
    print(f"✓ {100 * cmap.decoded_fraction:.1f}% of camera pixels decoded")

    board = generate_board(rows, cols, spacing)
    kept, lifted, dropped = [], [], []
    for i, corner in enumerate(corners.corners):
        try:
            lifted.append(lift_corner(cmap, corner, index=i))
            kept.append(i)
        except InsufficientSupport as exc:
            logger.warning("%s", exc)
            dropped.append(i)
    if dropped:
        print(f"⚠️  Dropped corners without support: {dropped}")

    corr = CorrespondenceSet(
        board=board[kept],
        camera=[corners.corners[i] for i in kept],
        projector=lifted,
        rows=rows,
        cols=cols,
        spacing_mm=spacing,
        camera_size=stack[0].size,
        projector_size=(patterns.projector_width, patterns.projector_height),
        corner_ids=kept if dropped else None,
    )
    write_document(args.out, correspondence_document(corr))
    print(f"✓ {len(kept)} correspondences written to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if len(args.poses) < 2:
        raise UsageError("evaluate needs at least 2 pose files")
    calibration = load_calibration(args.calibration)
    poses = [load_correspondences(path)[0] for path in args.poses]

    framework = ProcamFramework()
    metrics = framework.evaluate(poses, calibration, sources=args.poses)
    write_document(args.out, metrics)
    print(f"✓ Metrics written to {args.out}")

    if args.csv:
        with open(args.csv, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(EVAL_COLUMNS)
            for pose in metrics.poses:
                writer.writerow([
                    pose.pose_id, _fmt(pose.X), _fmt(pose.Y), _fmt(pose.Z), _fmt(pose.absT),
                    _fmt(pose.reproj_cam), _fmt(pose.reproj_pro), _fmt(pose.reproj_stereo), "",
                ])
            writer.writerow([
                "sigma", _fmt(metrics.sigma_X), _fmt(metrics.sigma_Y), _fmt(metrics.sigma_Z),
                _fmt(metrics.sigma_absT), "", "", "", _fmt(metrics.sigma_T),
            ])
        print(f"✓ CSV written to {args.csv}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scene = _load_scene(args.config)
    if args.seed is not None:
        scene = scene.model_copy(update={"rng_seed": args.seed})
    default_psi = "-45:45" if args.device == "camera" else "10:10"
    psi_range = _parse_range(args.psi_range or default_psi)
    nu_range = _parse_range(args.nu_range)
    lm_config = Config.lm_config(max_iters=args.lm_max_iters)

    print(f"🔄 Sweeping {args.device} rotations...")
    try:
        result = rotation_sweep(
            scene, args.device, psi_range, nu_range, args.step, args.trials,
            noise_sigma_px=args.noise, workers=args.workers, lm_config=lm_config,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    result.to_csv(args.out)
    failed = sum(1 for c in result.cells if c.failures)
    print(f"✓ {len(result.cells)} cells written to {args.out} ({failed} with failures)")
    return EXIT_OK


# ==================== Parser ====================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="procam-calib", description="Single-pose projector-camera calibration")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic correspondence file")
    p.add_argument("--config", help="scene JSON (defaults to the built-in scene)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float, help="Gaussian noise sigma in px")
    p.add_argument("--k1", type=float, help="camera k1")
    p.add_argument("--poses", type=int, default=0, help="also write N board poses of the same rig")
    p.add_argument("--stack", help="directory for a rendered Gray-code stack and corners file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("patterns", help="write projector Gray-code patterns as PGM")
    p.add_argument("--width", type=int, default=1920)
    p.add_argument("--height", type=int, default=1080)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("calibrate", help="calibrate from one correspondence file")
    p.add_argument("correspondences")
    p.add_argument("--out", required=True)
    p.add_argument("--lm-max-iters", type=int)
    p.add_argument("--center", help="fixed camera principal point 'u,v'")
    p.add_argument("--report", help="CSV summary")
    p.add_argument("--pdf", help="PDF report")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("decode", help="decode a Gray-code stack into correspondences")
    p.add_argument("manifest")
    p.add_argument("corners")
    p.add_argument("--out", required=True)
    p.add_argument("--contrast-threshold", type=float)
    p.add_argument("--span-threshold", type=float)
    p.add_argument("--window-radius", type=int)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="translation precision over several poses")
    p.add_argument("calibration")
    p.add_argument("poses", nargs="+")
    p.add_argument("--out", required=True, help="metrics JSON")
    p.add_argument("--csv", help="per-pose CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="rotation sweep of |delta f|")
    p.add_argument("--config")
    p.add_argument("--device", choices=["camera", "projector"], default="camera")
    p.add_argument("--psi-range")
    p.add_argument("--nu-range", default="-45:45")
    p.add_argument("--step", type=float, default=5.0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--lm-max-iters", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ProcamError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    raise SystemExit(main())
