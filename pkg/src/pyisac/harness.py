"""End-to-end pipeline and seeded Monte Carlo sweeps."""
from __future__ import annotations

import asyncio
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
import sys
import threading
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from tqdm import tqdm

from pyisac.assoc import (
    Assignment,
    FrameAssociation,
    build_cost_matrix,
    correct_association_prob,
    match_detections_to_truth,
    solve_assignment,
    write_associations,
)
from pyisac.comm import (
    ArrayGeometry,
    BeamReport,
    ChannelRealization,
    CodebookPair,
    InterferenceReport,
    PathModel,
    beam_training,
    generate_channel,
    intra_cell_interference,
    measurement_noise_power,
    write_beam_reports,
)
from pyisac.config import ExperimentSpec
from pyisac.const import SCALE_LINEAR, SPEED_OF_LIGHT, TOPK_MAX
from pyisac.detect import (
    CfarConfig,
    Detection,
    detect_frame,
    threshold_classes,
    write_detections,
)
from pyisac.deteval import (
    MatchConfig,
    ScoredBox,
    TruthBox,
    beam_task_boxes,
    evaluate_map,
    topk_beam_accuracy,
    write_metrics_report,
)
from pyisac.exceptions import IsacError
from pyisac.geometry import Pose
from pyisac.io import provenance, write_csv, write_image_dump, write_pgm
from pyisac.radarsim import (
    PixelGrid,
    RadarArray,
    RadarChain,
    RadarImage,
    RadarWaveform,
    RangeAngleMap,
    noise_sigma2_for_snr,
    to_range_angle_image,
)
from pyisac.scene import (
    GroundTruthLabel,
    ScenarioConfig,
    advance_scenario,
    frame_labels,
    scenario_preset,
    write_labels,
)

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T")
ArraySize = Tuple[int, int]

# Random stream tags; each (trial, frame, tag) gets an independent generator.
STREAM_SCENE = 0
STREAM_RADAR = 1
STREAM_CHANNEL = 2
STREAM_TRAINING = 3
STREAM_LABELS = 4

CURVE_COLUMNS = ("variable", "value", "array_size", "p_correct", "stderr", "trials")


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return the generator of one (seed, keys...) stream."""
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def size_label(size: ArraySize) -> str:
    """Return an array size as "HxV"."""
    return f"{size[0]}x{size[1]}"


@dataclass(frozen=True)
class CurvePoint:
    """Mean probability of correct association at one sweep point."""

    variable: str
    value: Any
    array_size: str
    p_correct: float
    stderr: float
    trials: int

    def __post_init__(self) -> None:
        """Validate the point."""
        if not 0.0 <= self.p_correct <= 1.0 or self.stderr < 0.0:
            raise ValueError(f"Invalid curve point [{self}]")

    def row(self) -> Tuple[Any, ...]:
        """Return the CSV row."""
        value = "x".join(map(str, self.value)) if isinstance(self.value, tuple) else self.value
        return (
            self.variable,
            value,
            self.array_size,
            repr(self.p_correct),
            repr(self.stderr),
            self.trials,
        )


@dataclass
class FrameResult:
    """Everything one pipeline run produced for a frame."""

    frame: int
    image: Optional[RadarImage] = None
    rmap: Optional[RangeAngleMap] = None
    detections: List[Detection] = field(default_factory=list)
    labels: List[GroundTruthLabel] = field(default_factory=list)
    reports: List[BeamReport] = field(default_factory=list)
    association: Optional[FrameAssociation] = None
    interference: List[InterferenceReport] = field(default_factory=list)
    skipped: Optional[str] = None

    @property
    def assignment(self) -> Assignment:
        """Return the assignment, empty for a skipped frame."""
        if self.association is None:
            return Assignment((), 0.0)
        return self.association.assignment

    @property
    def diagnostics(self) -> Dict[str, Any]:
        """Return per-frame counts, per-VE interference and the skip reason."""
        return {
            "frame": self.frame,
            "detections": len(self.detections),
            "labels": len(self.labels),
            "ves": len(self.reports),
            "pairs": len(self.assignment),
            "interference": [
                {
                    "ve_id": item.ve_id,
                    "interference_db": item.interference_db,
                    "sinr_db": item.sinr_db,
                }
                for item in self.interference
            ],
            "skipped": self.skipped,
        }


class Pipeline:
    """Scene, radar, detector, beam training and association for one spec.

    Radar chains and codebooks are built once and shared by every trial.
    """

    def __init__(self, spec: ExperimentSpec) -> None:
        """Initialize the pipeline."""
        self._spec = spec
        self._lock = threading.Lock()
        self._chains: Dict[Tuple[float, ...], RadarChain] = {}
        self._codebooks: Dict[ArraySize, CodebookPair] = {}
        radar = spec.radar
        self._waveform = RadarWaveform(
            f0=radar.f0_hz,
            bs=radar.bs_hz,
            tc=radar.tc_s,
            tp=radar.tp_s,
            chirp_convention=radar.chirp_convention,
        )
        self._cfar = CfarConfig(
            guard=spec.detect.guard,
            train=spec.detect.train,
            pfa=spec.detect.pfa,
            min_pixels=spec.detect.min_pixels,
            merge_radius=spec.detect.merge_radius,
            floor_db=spec.detect.floor_db,
            max_detections=spec.detect.max_detections,
        )
        self._path_model = PathModel(spec.comm.ground_reflection, spec.comm.los_share)
        self._rx_codebook = CodebookPair.dft(*spec.comm.ve_array)

    @property
    def spec(self) -> ExperimentSpec:
        """Return the experiment spec."""
        return self._spec

    @property
    def waveform(self) -> RadarWaveform:
        """Return the radar chirp."""
        return self._waveform

    def _geometry(self, size: ArraySize) -> ArrayGeometry:
        f0 = self._spec.comm.f0_hz
        return ArrayGeometry(size[0], size[1], SPEED_OF_LIGHT / f0 / 2.0, f0)

    def codebooks(self, size: ArraySize) -> CodebookPair:
        """Return the BS codebooks of an array size."""
        with self._lock:
            if size not in self._codebooks:
                self._codebooks[size] = CodebookPair.dft(*size)
            return self._codebooks[size]

    def scenario(
        self, trial: int, n_ve: Optional[int] = None, n_clutter: Optional[int] = None
    ) -> ScenarioConfig:
        """Return the scene of a trial; its VEs do not depend on the clutter count."""
        cfg = self._spec.scenario
        n_ve = cfg.n_ve if n_ve is None else n_ve
        n_clutter = cfg.n_clutter if n_clutter is None else n_clutter
        seed = int(
            np.random.SeedSequence(
                [self._spec.experiment.seed, trial, STREAM_SCENE]
            ).generate_state(1)[0]
        )
        return scenario_preset(cfg.kind, n_ve, n_clutter, seed, cfg.frames, cfg.dt)

    def chain(self, config: ScenarioConfig) -> RadarChain:
        """Return the radar chain looking from the scene's site."""
        site = config.site
        key = (*site.position, site.yaw, site.tilt)
        with self._lock:
            if key not in self._chains:
                radar = self._spec.radar
                array = RadarArray.uniform(
                    site, radar.n_az, radar.n_el, self._waveform.wavelength
                )
                grid = PixelGrid.uniform(
                    site,
                    radar.grid_n_r,
                    radar.grid_n_a,
                    radar.r_min_m,
                    radar.r_max_m,
                    radar.half_fov_rad,
                )
                noise = 0.0
                if radar.snr_db is not None:
                    noise = noise_sigma2_for_snr(
                        self._waveform,
                        array,
                        radar.fs_hz,
                        radar.snr_db,
                        radar.snr_ref_range_m,
                    )
                self._chains[key] = RadarChain(
                    waveform=self._waveform,
                    array=array,
                    grid=grid,
                    fs=radar.fs_hz,
                    noise_sigma2=noise,
                    upsample=radar.upsample,
                    interpolation=radar.interpolation,
                    taper=radar.taper,
                )
            return self._chains[key]

    def sense(
        self, config: ScenarioConfig, trial: int, frame: int
    ) -> Tuple[RadarImage, RangeAngleMap]:
        """Image the scene at a frame and normalize it linearly."""
        scatterers = [
            point
            for target, pose in advance_scenario(config, frame)
            for point in target.world_scatterers(pose)
        ]
        image = self.chain(config).image(
            scatterers, 0, stream(self._spec.experiment.seed, trial, frame, STREAM_RADAR)
        )
        return image, self.range_angle(image)

    def range_angle(self, image: RadarImage) -> RangeAngleMap:
        """Return the linear range-angle map the detector runs on."""
        return to_range_angle_image(image, self._spec.radar.dynamic_range_db, SCALE_LINEAR)

    def detect(
        self,
        bs_pose: Pose,
        image: RadarImage,
        rmap: RangeAngleMap,
        size: ArraySize,
    ) -> List[Detection]:
        """Run the reference detector with the codebooks of an array size.

        The `simulate` pipeline and the `detect` command both go through here.
        """
        noise = None
        if rmap.peak > 0.0 and image.noise_power > 0.0:
            noise = image.noise_power / rmap.peak**2
        det = self._spec.detect
        return detect_frame(
            rmap,
            image.grid,
            bs_pose,
            self.codebooks(size),
            self._cfar,
            noise_power=noise,
            psf_margin=det.psf_margin_px,
            resolution=(self._waveform.range_resolution, 0.0),
            spacing_wavelengths=0.5,
            kappa=det.kappa,
            iou_thr=det.nms_iou,
        )

    def channels(
        self, config: ScenarioConfig, trial: int, frame: int, size: ArraySize
    ) -> Dict[int, ChannelRealization]:
        """Draw the channel of every VE for one array size."""
        rng = stream(
            self._spec.experiment.seed, trial, frame, STREAM_CHANNEL, size[0], size[1]
        )
        out = {}
        for target, pose in advance_scenario(config, frame):
            if target.is_ve:
                out[target.id] = generate_channel(
                    config.bs_pose,
                    target.antenna_pose(pose),
                    rng,
                    self._path_model,
                    self._geometry(size),
                    self._geometry(tuple(self._spec.comm.ve_array)),
                )
        return out

    def labels(
        self,
        config: ScenarioConfig,
        trial: int,
        frame: int,
        size: ArraySize,
        channels: Dict[int, ChannelRealization],
    ) -> List[GroundTruthLabel]:
        """Label every visible vehicle of a frame."""
        return frame_labels(
            config,
            frame,
            self.chain(config).grid,
            self.codebooks(size),
            channels,
            self._rx_codebook,
            self._spec.comm.label_snr_db,
            stream(self._spec.experiment.seed, trial, frame, STREAM_LABELS, *size),
        )

    def train(
        self,
        trial: int,
        frame: int,
        size: ArraySize,
        snr_index: int,
        snr_db: float,
        channels: Dict[int, ChannelRealization],
    ) -> List[BeamReport]:
        """Run beam training for every VE at one SNR."""
        codebooks = self.codebooks(size)
        rng = stream(
            self._spec.experiment.seed, trial, frame, STREAM_TRAINING, *size, snr_index
        )
        return [
            beam_training(
                channels[ve_id],
                codebooks.horizontal,
                codebooks.vertical,
                self._rx_codebook,
                snr_db,
                rng,
                ve_id=ve_id,
                frame=frame,
                n_pilots=self._spec.comm.n_pilots,
            )
            for ve_id in sorted(channels)
        ]

    def interference(
        self,
        size: ArraySize,
        snr_db: float,
        channels: Dict[int, ChannelRealization],
        reports: Sequence[BeamReport],
    ) -> List[InterferenceReport]:
        """Return the intra-cell interference of the selected beams at one SNR."""
        codebooks = self.codebooks(size)
        return intra_cell_interference(
            channels,
            {report.ve_id: report for report in reports},
            codebooks.horizontal,
            codebooks.vertical,
            self._rx_codebook,
            {
                ve_id: measurement_noise_power(channel.matrix, snr_db)
                for ve_id, channel in channels.items()
            },
        )

    def associate(
        self,
        frame: int,
        detections: Sequence[Detection],
        labels: Sequence[GroundTruthLabel],
        reports: Sequence[BeamReport],
    ) -> FrameAssociation:
        """Associate detections with VEs and attach the radar truth."""
        assoc = self._spec.assoc
        cost = build_cost_matrix(detections, reports, assoc.cost)
        return FrameAssociation(
            frame=frame,
            cost=cost,
            assignment=solve_assignment(cost, assoc.max_cost),
            truth=match_detections_to_truth(detections, labels, assoc.match_iou),
        )


def _dump_frame(result: FrameResult, out_dir: Path, meta: Dict[str, Any]) -> None:
    """Write the image dump and PGM of a frame."""
    image, rmap = result.image, result.rmap
    if image is None or rmap is None:
        return
    origin = image.grid.origin
    info = {
        **meta,
        "frame": result.frame,
        "origin": [float(v) for v in origin.position],
        "yaw": origin.yaw,
        "tilt": origin.tilt,
        "noise_power": image.noise_power,
    }
    write_image_dump(
        out_dir / f"image_{result.frame:04d}.bin",
        image.pixels,
        image.grid.ranges,
        image.grid.angles,
        meta.get("f0", 0.0),
        meta.get("bs", 0.0),
        info,
    )
    write_pgm(out_dir / f"image_{result.frame:04d}.pgm", rmap.values, info)


def run_pipeline(
    spec: ExperimentSpec,
    frame: int,
    trial: int = 0,
    array_size: Optional[ArraySize] = None,
    snr_db: Optional[float] = None,
    pipeline: Optional[Pipeline] = None,
    out_dir: Optional[Path] = None,
) -> FrameResult:
    """Run scene, radar, detector, beam training and association for one frame.

    Any pipeline error skips the frame and is recorded as the skip reason.
    """
    pipeline = pipeline or Pipeline(spec)
    size = tuple(array_size or spec.experiment.matrix_array)
    snr = spec.experiment.sweep_snr_db if snr_db is None else snr_db
    result = FrameResult(frame=frame)
    try:
        config = pipeline.scenario(trial)
        result.image, result.rmap = pipeline.sense(config, trial, frame)
        result.detections = pipeline.detect(config.bs_pose, result.image, result.rmap, size)
        channels = pipeline.channels(config, trial, frame, size)
        result.labels = pipeline.labels(config, trial, frame, size, channels)
        result.reports = pipeline.train(trial, frame, size, 0, snr, channels)
        result.interference = pipeline.interference(size, snr, channels, result.reports)
        result.association = pipeline.associate(
            frame, result.detections, result.labels, result.reports
        )
    except IsacError as ex:
        result.skipped = f"{type(ex).__name__}: {ex}"
        _LOGGER.warning("Frame %s skipped: %s", frame, result.skipped)
    if out_dir is not None and spec.experiment.dump_images:
        meta = {
            **provenance(spec.digest, spec.experiment.seed),
            "f0": pipeline.waveform.f0,
            "bs": pipeline.waveform.bs,
        }
        _dump_frame(result, out_dir, meta)
    return result


def simulate(spec: ExperimentSpec, out_dir: Path, trial: int = 0) -> List[FrameResult]:
    """Run every frame of one trial and write labels, detections, reports and pairs."""
    out_dir.mkdir(parents=True, exist_ok=True)
    pipeline = Pipeline(spec)
    size = tuple(spec.experiment.matrix_array)
    results = [
        run_pipeline(spec, frame, trial, size, pipeline=pipeline, out_dir=out_dir)
        for frame in range(spec.scenario.frames)
    ]
    meta = provenance(spec.digest, spec.experiment.seed)
    write_labels(out_dir / "labels.jsonl", [label for r in results for label in r.labels], meta)
    write_detections(
        out_dir / "detections.jsonl",
        [(r.frame, det) for r in results for det in r.detections],
        size[0],
        size[1],
        meta,
    )
    write_beam_reports(
        out_dir / "beam_reports.jsonl",
        [rep for r in results for rep in r.reports],
        meta,
        [item for r in results for item in r.interference],
    )
    write_associations(
        out_dir / "associations.jsonl",
        [r.association for r in results if r.association is not None],
        meta,
        spec.assoc.count_missed,
    )
    skipped = sum(1 for r in results if r.skipped)
    if skipped:
        _LOGGER.warning("%d of %d frames skipped", skipped, len(results))
    return results


def _trial_points(
    pipeline: Pipeline,
    trial: int,
    config: ScenarioConfig,
    sizes: Sequence[ArraySize],
    snrs: Sequence[float],
) -> Dict[Tuple[ArraySize, float], float]:
    """Return P(correct association) of one trial at every (size, SNR).

    The radar image and detections of a frame are shared by all SNRs.
    """
    frames: Dict[Tuple[ArraySize, float], List[FrameAssociation]] = defaultdict(list)
    for frame in range(pipeline.spec.scenario.frames):
        try:
            image, rmap = pipeline.sense(config, trial, frame)
        except IsacError as ex:
            _LOGGER.warning("Trial %s frame %s skipped: %s", trial, frame, ex)
            continue
        for size in sizes:
            try:
                dets = pipeline.detect(config.bs_pose, image, rmap, size)
                channels = pipeline.channels(config, trial, frame, size)
                labels = pipeline.labels(config, trial, frame, size, channels)
                for index, snr in enumerate(snrs):
                    reports = pipeline.train(trial, frame, size, index, snr, channels)
                    frames[(size, snr)].append(
                        pipeline.associate(frame, dets, labels, reports)
                    )
            except IsacError as ex:
                _LOGGER.warning(
                    "Trial %s frame %s size %s skipped: %s",
                    trial,
                    frame,
                    size_label(size),
                    ex,
                )
    count_missed = pipeline.spec.assoc.count_missed
    return {
        (size, snr): correct_association_prob(frames[(size, snr)], count_missed)
        for size in sizes
        for snr in snrs
    }


def _summarize(values: Sequence[float]) -> Tuple[float, float]:
    """Return mean and standard error."""
    data = np.asarray(values, dtype=float)
    if len(data) < 2:
        return float(data.mean()), 0.0
    return float(data.mean()), float(data.std(ddof=1) / math.sqrt(len(data)))


class ExperimentRunner:
    """Schedule trials over a bounded worker pool; results keep trial order."""

    def __init__(self, spec: ExperimentSpec, progress: bool = False) -> None:
        """Initialize the runner."""
        self._spec = spec
        self._progress = progress
        self.pipeline = Pipeline(spec)

    async def run(self, job: Callable[[int], T], label: str = "") -> List[T]:
        """Run job(trial) for every trial."""
        threads = self._spec.experiment.threads
        trials = self._spec.experiment.trials
        loop = asyncio.get_running_loop()
        semaphore = asyncio.Semaphore(threads)
        with ThreadPoolExecutor(max_workers=threads) as executor, tqdm(
            total=trials,
            desc=label,
            disable=not self._progress,
            file=sys.stderr,
            leave=False,
        ) as bar:

            async def one(trial: int) -> T:
                async with semaphore:
                    result = await loop.run_in_executor(executor, job, trial)
                bar.update(1)
                return result

            results = await asyncio.gather(*(one(trial) for trial in range(trials)))
        _LOGGER.debug("Finished %d trials of %s", trials, label or "job")
        return list(results)


def _write_curve(path: Optional[Path], spec: ExperimentSpec, points: List[CurvePoint]) -> None:
    if path is None:
        return
    write_csv(
        path,
        CURVE_COLUMNS,
        (point.row() for point in points),
        provenance(spec.digest, spec.experiment.seed),
    )


async def sweep_snr(
    spec: ExperimentSpec, out_path: Optional[Path] = None, progress: bool = False
) -> List[CurvePoint]:
    """Sweep SNR per antenna for every array size."""
    runner = ExperimentRunner(spec, progress)
    pipeline = runner.pipeline
    sizes = [tuple(s) for s in spec.comm.array_sizes]
    snrs = [float(s) for s in spec.comm.snr_grid_db]
    per_trial = await runner.run(
        lambda trial: _trial_points(pipeline, trial, pipeline.scenario(trial), sizes, snrs),
        "sweep-snr",
    )
    points = []
    for size in sizes:
        for snr in snrs:
            mean, stderr = _summarize([result[(size, snr)] for result in per_trial])
            points.append(
                CurvePoint("snr_db", snr, size_label(size), mean, stderr, len(per_trial))
            )
    _write_curve(out_path, spec, points)
    return points


async def sweep_clutter(
    spec: ExperimentSpec, out_path: Optional[Path] = None, progress: bool = False
) -> List[CurvePoint]:
    """Sweep the clutter count with two VEs at the fixed sweep SNR."""
    runner = ExperimentRunner(spec, progress)
    pipeline = runner.pipeline
    sizes = [tuple(s) for s in spec.comm.array_sizes]
    snr = spec.experiment.sweep_snr_db
    clutter = list(spec.experiment.clutter_grid)

    def job(trial: int) -> Dict[int, Dict[Tuple[ArraySize, float], float]]:
        return {
            n: _trial_points(pipeline, trial, pipeline.scenario(trial, 2, n), sizes, [snr])
            for n in clutter
        }

    per_trial = await runner.run(job, "sweep-clutter")
    points = []
    for size in sizes:
        for n in clutter:
            mean, stderr = _summarize([result[n][(size, snr)] for result in per_trial])
            points.append(
                CurvePoint("n_clutter", n, size_label(size), mean, stderr, len(per_trial))
            )
    _write_curve(out_path, spec, points)
    return points


async def sweep_matrix(
    spec: ExperimentSpec, out_path: Optional[Path] = None, progress: bool = False
) -> List[CurvePoint]:
    """Sweep VE count against clutter count for one array size at the sweep SNR.

    The CSV has one row per VE count with a mean and a stderr column per
    clutter count.
    """
    runner = ExperimentRunner(spec, progress)
    pipeline = runner.pipeline
    size = tuple(spec.experiment.matrix_array)
    snr = spec.experiment.sweep_snr_db
    grid = [(v, c) for v in spec.experiment.ve_grid for c in spec.experiment.clutter_grid]

    def job(trial: int) -> Dict[Tuple[int, int], float]:
        return {
            (v, c): _trial_points(
                pipeline, trial, pipeline.scenario(trial, v, c), [size], [snr]
            )[(size, snr)]
            for v, c in grid
        }

    per_trial = await runner.run(job, "sweep-matrix")
    points = []
    for key in grid:
        mean, stderr = _summarize([result[key] for result in per_trial])
        points.append(
            CurvePoint("n_ve_x_clutter", key, size_label(size), mean, stderr, len(per_trial))
        )
    if out_path is not None:
        clutter = list(spec.experiment.clutter_grid)
        lookup = {point.value: point for point in points}
        write_csv(
            out_path,
            ["n_ve"] + [f"p_c{c}" for c in clutter] + [f"se_c{c}" for c in clutter],
            (
                [v]
                + [repr(lookup[(v, c)].p_correct) for c in clutter]
                + [repr(lookup[(v, c)].stderr) for c in clutter]
                for v in spec.experiment.ve_grid
            ),
            provenance(spec.digest, spec.experiment.seed),
        )
    return points


@dataclass
class _EvalTrial:
    dets: Dict[int, List[Detection]] = field(default_factory=dict)
    labels: Dict[int, List[GroundTruthLabel]] = field(default_factory=dict)


def _eval_trial(pipeline: Pipeline, trial: int, size: ArraySize) -> _EvalTrial:
    config = pipeline.scenario(trial)
    out = _EvalTrial()
    frames = pipeline.spec.scenario.frames
    for frame in range(frames):
        key = trial * frames + frame
        try:
            image, rmap = pipeline.sense(config, trial, frame)
            channels = pipeline.channels(config, trial, frame, size)
            out.dets[key] = pipeline.detect(config.bs_pose, image, rmap, size)
            out.labels[key] = pipeline.labels(config, trial, frame, size, channels)
        except IsacError as ex:
            _LOGGER.warning("Trial %s frame %s skipped: %s", trial, frame, ex)
    return out


async def eval_metrics(
    spec: ExperimentSpec, out_dir: Path, progress: bool = False
) -> Dict[str, Dict[str, Any]]:
    """Evaluate reference detections against labels for every array size.

    Writes one class-task and one beam-task report per array size.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = ExperimentRunner(spec, progress)
    pipeline = runner.pipeline
    gamma = spec.detect.gamma_class
    meta = provenance(spec.digest, spec.experiment.seed)
    summary: Dict[str, Dict[str, Any]] = {}
    for size in (tuple(s) for s in spec.comm.array_sizes):
        trials = await runner.run(
            lambda trial, size=size: _eval_trial(pipeline, trial, size),
            f"eval-metrics {size_label(size)}",
        )
        dets: Dict[int, List[Detection]] = {}
        labels: Dict[int, List[GroundTruthLabel]] = {}
        for result in trials:
            dets.update(result.dets)
            labels.update(result.labels)
        scored: Dict[int, List[ScoredBox]] = {}
        for key, frame_dets in dets.items():
            scored[key] = []
            for det in frame_dets:
                label, _ = threshold_classes(det, gamma)
                if label is not None:
                    scored[key].append(ScoredBox(label, det.bbox, det.confidence))
        truth = {
            key: [TruthBox(label.vehicle_class, label.bbox) for label in frame_labels_]
            for key, frame_labels_ in labels.items()
        }
        class_metrics = evaluate_map(scored, truth, MatchConfig())
        beam_metrics = evaluate_map(*beam_task_boxes(dets, labels), MatchConfig())

        logits_h, logits_v, true_h, true_v = [], [], [], []
        for key, frame_dets in dets.items():
            frame_truth = labels.get(key, [])
            by_id = {label.target_id: label for label in frame_truth}
            for index, target_id in match_detections_to_truth(frame_dets, frame_truth).items():
                label = by_id[target_id]
                if not label.is_ve:
                    continue
                logits_h.append(frame_dets[index].beam_logits_h)
                logits_v.append(frame_dets[index].beam_logits_v)
                true_h.append(label.beam_h)
                true_v.append(label.beam_v)
        topk = [
            topk_beam_accuracy(
                np.asarray(logits_h).reshape(len(true_h), -1) if true_h else np.zeros((0, size[0])),
                np.asarray(logits_v).reshape(len(true_v), -1) if true_v else np.zeros((0, size[1])),
                true_h,
                true_v,
                k,
            )
            for k in range(1, TOPK_MAX + 1)
        ]
        name = size_label(size)
        write_metrics_report(out_dir / f"metrics_{name}.json", name, class_metrics, topk, meta)
        write_metrics_report(
            out_dir / f"metrics_beam_{name}.json", name, beam_metrics, topk, meta
        )
        summary[name] = {**class_metrics.as_dict(), "topk": topk}
    return summary
