"""Command-line front end: thin, deterministic compositions of the library.

Subcommands:
    synth   render the seeded benchmark volumes + ground truth into a directory
    slice   export mid B/C/D slice renderings of a volume as PNGs
    detect  run the rule detectors over a volume, write detections
    fuse    cross-verify detections into findings
    eval    score findings against ground truth, print the metrics table
    serve   start the HTTP gateway
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from ..detect import PipelineConfig, export_detections, import_detections, run_detectors
from ..evaluation import evaluate_findings, format_report
from ..fuse import Thresholds, cross_verify, export_findings, import_findings
from ..synth import make_benchmark, save_ground_truth, load_ground_truth
from ..volume import (VolumeError, WindowSpec, b_scan, c_scan, d_scan,
                      load_volume, save_volume)


def _add_window_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-len", type=int, default=64,
                   help="sliding window length in traces")
    p.add_argument("--window-stride", type=int, default=32,
                   help="sliding window stride in traces")


def _add_threshold_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-h", type=float, default=0.5, help="healthy veto threshold")
    p.add_argument("--tau-m", type=float, default=0.5, help="manhole score threshold")
    p.add_argument("--tau-assoc", type=float, default=0.1,
                   help="3D overlap threshold for association")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gprscan")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render the seeded synthetic benchmark")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("slice", help="export mid B/C/D slices of a volume as PNGs")
    p.add_argument("--volume", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("detect", help="run rule detectors over a volume")
    p.add_argument("--volume", required=True)
    p.add_argument("--out", required=True, help="detections file to write")
    p.add_argument("--iou-thresh", type=float, default=0.45,
                   help="per-slice NMS IoU threshold")
    _add_window_flags(p)

    p = sub.add_parser("fuse", help="cross-verify detections into findings")
    p.add_argument("--volume", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True, help="findings file to write")
    _add_threshold_flags(p)

    p = sub.add_parser("eval", help="score findings against ground truth")
    p.add_argument("--findings", required=True)
    p.add_argument("--truth", required=True, help="ground-truth file")
    p.add_argument("--iou-thresh", type=float, default=0.3,
                   help="3D overlap threshold for matching")

    p = sub.add_parser("serve", help="start the HTTP gateway")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", required=True)

    return parser


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench = make_benchmark(args.seed)
    manifest = []
    for i, (vol, gt) in enumerate(bench):
        vol_name, gt_name = f"vol_{i:03d}.gpr", f"gt_{i:03d}.jsonl"
        save_volume(vol, out / vol_name)
        save_ground_truth(gt, out / gt_name)
        manifest.append({"volume": vol_name, "truth": gt_name,
                         "kind": gt[0].kind if gt else "healthy"})
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump({"seed": args.seed, "entries": manifest}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(bench)} volumes to {out}")
    return 0


def _to_png(pixels: np.ndarray, path: Path) -> None:
    lo, hi = float(pixels.min()), float(pixels.max())
    if hi - lo <= 0:
        gray = np.zeros(pixels.shape, dtype=np.uint8)
    else:
        gray = np.round((pixels - lo) / (hi - lo) * 255.0).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(path, format="PNG")


def cmd_slice(args) -> int:
    v = load_volume(args.volume)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _to_png(b_scan(v, v.n_channels // 2).pixels, out / "b_scan.png")
    _to_png(c_scan(v, v.n_samples // 2).pixels, out / "c_scan.png")
    _to_png(d_scan(v, v.n_traces // 2).pixels, out / "d_scan.png")
    print(f"wrote b_scan.png, c_scan.png, d_scan.png to {out}")
    return 0


def cmd_detect(args) -> int:
    v = load_volume(args.volume)
    config = PipelineConfig(window=WindowSpec(args.window_len, args.window_stride),
                            nms_iou=args.iou_thresh)
    dets = run_detectors(v, config)
    export_detections(dets, args.out)
    print(f"wrote {len(dets)} detections to {args.out}")
    return 0


def cmd_fuse(args) -> int:
    v = load_volume(args.volume)
    dets = import_detections(args.detections)
    thresholds = Thresholds(tau_h=args.tau_h, tau_m=args.tau_m, tau_assoc=args.tau_assoc)
    findings = cross_verify(dets, v.shape, thresholds)
    export_findings(findings, args.out)
    print(f"wrote {len(findings)} findings to {args.out}")
    return 0


def cmd_eval(args) -> int:
    findings = import_findings(args.findings)
    truth = load_ground_truth(args.truth)
    report = evaluate_findings(findings, truth, thresh3d=args.iou_thresh)
    print(format_report(report))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "slice": cmd_slice,
    "detect": cmd_detect,
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as e:
        print(f"error: {e.filename or e}: no such file", file=sys.stderr)
        return 1
    except (VolumeError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
