"""Command line interface."""
from __future__ import annotations

import argparse
import asyncio
from collections import defaultdict
import logging
from pathlib import Path
import sys
from typing import Dict, List, Optional, Sequence

from pyisac.assoc import (
    FrameAssociation,
    build_cost_matrix,
    match_detections_to_truth,
    solve_assignment,
    write_associations,
)
from pyisac.comm import BeamReport, read_beam_reports
from pyisac.config import ExperimentSpec, load_spec
from pyisac.detect import Detection, read_detections, write_detections
from pyisac.exceptions import ConfigError, IsacError, ParseError, SchemaMismatchError
from pyisac.geometry import Pose
from pyisac.harness import (
    Pipeline,
    eval_metrics,
    simulate,
    sweep_clutter,
    sweep_matrix,
    sweep_snr,
)
from pyisac.io import provenance, read_image_dump
from pyisac.radarsim import PixelGrid, RadarImage
from pyisac.scene import GroundTruthLabel, read_labels

_LOGGER = logging.getLogger(__name__)

EXIT_RUNTIME = 1
EXIT_USAGE = 2

_USAGE_ERRORS = (ConfigError, ParseError, SchemaMismatchError)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pyisac",
        description="Radar-aided beamspace association simulator.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="hide progress bars")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument(
        "--dump-images", action="store_true", default=None, help="write image dumps"
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("simulate", parents=[common], help="run one trial end to end")
    detect = commands.add_parser("detect", parents=[common], help="detect on image dumps")
    detect.add_argument("images", type=Path, nargs="+", help="image dump files")
    associate = commands.add_parser(
        "associate", parents=[common], help="associate detections with beam reports"
    )
    associate.add_argument("--detections", type=Path, required=True)
    associate.add_argument("--reports", type=Path, required=True)
    associate.add_argument("--labels", type=Path, help="labels scoring the pairs")
    for name in ("sweep-snr", "sweep-clutter", "sweep-matrix", "eval-metrics"):
        commands.add_parser(name, parents=[common])
    return parser


def _detect_dumps(spec: ExperimentSpec, paths: Sequence[Path], out_dir: Path) -> int:
    """Run the reference detector on image dumps written by `simulate`."""
    size = (spec.experiment.matrix_array[0], spec.experiment.matrix_array[1])
    pipeline = Pipeline(spec)
    found = []
    for path in paths:
        dump = read_image_dump(path)
        meta = dump["meta"]
        try:
            origin = Pose(tuple(meta["origin"]), float(meta["yaw"]), float(meta["tilt"]))
            frame = int(meta["frame"])
        except (KeyError, TypeError, ValueError) as ex:
            raise ParseError(f"Image dump [{path}] lacks pose metadata") from ex
        grid = PixelGrid(dump["ranges"], dump["angles"], origin)
        image = RadarImage(
            dump["pixels"].astype(complex), grid, 0, float(meta.get("noise_power", 0.0))
        )
        bs_pose = Pose(origin.position, origin.yaw, 0.0)
        for detection in pipeline.detect(bs_pose, image, pipeline.range_angle(image), size):
            found.append((frame, detection))
    write_detections(
        out_dir / "detections.jsonl",
        found,
        size[0],
        size[1],
        provenance(spec.digest, spec.experiment.seed),
    )
    return len(found)


def _associate_files(
    spec: ExperimentSpec,
    detections_path: Path,
    reports_path: Path,
    labels_path: Optional[Path],
    out_dir: Path,
) -> List[FrameAssociation]:
    """Associate stored detections with stored beam reports, frame by frame."""
    dets: Dict[int, List[Detection]] = defaultdict(list)
    for frame, det in read_detections(detections_path):
        dets[frame].append(det)
    reports: Dict[int, List[BeamReport]] = defaultdict(list)
    for report in read_beam_reports(reports_path):
        reports[report.frame].append(report)
    labels: Dict[int, List[GroundTruthLabel]] = defaultdict(list)
    if labels_path is not None:
        for label in read_labels(labels_path):
            labels[label.frame].append(label)
    frames = []
    for frame in sorted(set(dets) | set(reports)):
        cost = build_cost_matrix(dets[frame], reports[frame], spec.assoc.cost)
        frames.append(
            FrameAssociation(
                frame=frame,
                cost=cost,
                assignment=solve_assignment(cost, spec.assoc.max_cost),
                truth=match_detections_to_truth(
                    dets[frame], labels[frame], spec.assoc.match_iou
                ),
            )
        )
    write_associations(
        out_dir / "associations.jsonl",
        frames,
        provenance(spec.digest, spec.experiment.seed),
        spec.assoc.count_missed,
    )
    return frames


def _run(args: argparse.Namespace) -> None:
    spec = load_spec(args.config).override(args.seed, args.threads, args.dump_images)
    out_dir: Path = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    progress = not args.quiet and sys.stderr.isatty()
    command = args.command
    if command == "simulate":
        simulate(spec, out_dir)
    elif command == "detect":
        _detect_dumps(spec, args.images, out_dir)
    elif command == "associate":
        _associate_files(spec, args.detections, args.reports, args.labels, out_dir)
    elif command == "sweep-snr":
        asyncio.run(sweep_snr(spec, out_dir / "sweep_snr.csv", progress))
    elif command == "sweep-clutter":
        asyncio.run(sweep_clutter(spec, out_dir / "sweep_clutter.csv", progress))
    elif command == "sweep-matrix":
        asyncio.run(sweep_matrix(spec, out_dir / "sweep_matrix.csv", progress))
    elif command == "eval-metrics":
        asyncio.run(eval_metrics(spec, out_dir, progress))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and return the exit code."""
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        _run(args)
    except _USAGE_ERRORS as ex:
        print(f"error: {type(ex).__name__}: {ex}", file=sys.stderr)
        return EXIT_USAGE
    except IsacError as ex:
        print(f"error: {type(ex).__name__}: {ex}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as ex:
        print(f"error: {type(ex).__name__}: {ex}", file=sys.stderr)
        return EXIT_USAGE
    return 0
