"""Command-line entry point: ``fisheyeloc <subcommand> ...``.

Exit codes: 0 success, 1 validation or precondition failure, 2 numerical
failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import io
from .camera import ImagePoint, calibrate
from .errors import FisheyeLocError, NumericalError, OutOfRangeError, ValidationError
from .evaluation import DistanceBucket, evaluate, pr_curve
from .geometry import RadiusAlignedBox, rotate_radius_aligned
from .localization import AnchorStrategy, compare_strategies, localize
from .matching import (
    DEFAULT_LAMBDA,
    Detection,
    FileDetector,
    GroundTruthBox,
    LossWeights,
    equivariant_objective,
)
from .sim import (
    ALTITUDE_RANGE,
    NoiseConfig,
    SceneConfig,
    default_model,
    generate_scene,
    perturb_detections,
    render_annotations,
)

CONFIG_ENV = "FISHEYELOC_CONFIG"
GLOBAL_KEYS = ("seed", "threads", "format")
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation failures (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    threads: int
    format: str
    options: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> "RunConfig":
        opts = {k: v for k, v in vars(ns).items() if k not in ("command", "handler", "config", *GLOBAL_KEYS)}
        threads = (os.cpu_count() or 1) if ns.threads is None else ns.threads
        if not isinstance(ns.seed, int) or isinstance(ns.seed, bool) or ns.seed < 0:
            raise ValidationError(f"--seed must be a non-negative integer, got {ns.seed!r}")
        if not isinstance(threads, int) or threads < 1:
            raise ValidationError(f"--threads must be a positive integer, got {threads!r}")
        if ns.format not in ("text", "csv"):
            raise ValidationError(f"--format must be text or csv, got {ns.format!r}")
        return cls(ns.command, ns.seed, threads, ns.format, opts)

    def __getattr__(self, name):
        try:
            return self.options[name]
        except KeyError:
            raise AttributeError(name) from None

    def map(self, fn: Callable, items: Iterable) -> list:
        """Ordered parallel map; results come back in input order."""
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


# ---- output -----------------------------------------------------------------


def _cell(v: Any, fmt: str) -> str:
    if v is None:
        return "" if fmt == "csv" else "-"
    if isinstance(v, float):
        return format(v, ".17g" if fmt == "csv" else ".6g")
    return str(v)


def render_table(rows: Sequence[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "csv":
        buf = _stdio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c), "csv") for c in columns])
        return buf.getvalue()
    cells = [list(columns)] + [[_cell(r.get(c), "text") for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n" for row in cells)


def _target(path: str | Path) -> Path:
    """Output path with its parent directory created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_table(path: str | Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    Path(path).write_text(render_table(rows, columns, "csv"), encoding="utf-8")


def _emit(cfg: RunConfig, rows: Sequence[dict], columns: Sequence[str]) -> None:
    sys.stdout.write(render_table(rows, columns, cfg.format))


# ---- shared loading ---------------------------------------------------------


def _require(value, flag: str, why: str):
    if value is None:
        raise ValidationError(f"missing input: {flag} is required {why}")
    return value


def _predictions_by_image(path) -> tuple[float | None, dict[str, list[io.PredictionRecord]]]:
    side, records = io.read_predictions(path)
    out: dict[str, list[io.PredictionRecord]] = {}
    for r in records:
        group = out.setdefault(r.image_id, [])
        if any(abs(math.remainder(g.angle - r.angle, 2 * math.pi)) <= 1e-12 for g in group):
            raise ValidationError(f"image {r.image_id!r} has two prediction records at angle {r.angle!r}")
        group.append(r)
    return side, out


def _unrotated(group: Sequence[io.PredictionRecord]) -> io.PredictionRecord | None:
    for r in group:
        if r.angle == 0.0:
            return r
    return None


def _to_unit(box: RadiusAlignedBox, side: float) -> RadiusAlignedBox:
    # simulator jitter can push a rim box a hair past the frame; normalized
    # boxes are confined to [0, 1]^4 so clamp after scaling
    b = box.scaled(1.0 / side)
    clip = lambda x: min(max(x, 0.0), 1.0)  # noqa: E731
    return RadiusAlignedBox(clip(b.cx), clip(b.cy), clip(b.w), clip(b.h))


# ---- calibrate --------------------------------------------------------------


def cmd_calibrate(cfg: RunConfig) -> int:
    pairs = io.read_correspondences(cfg.correspondences)
    principal = ImagePoint(*cfg.principal) if cfg.principal is not None else None
    res = calibrate(
        pairs,
        cfg.initial_focal,
        principal=principal,
        fix_principal=cfg.fix_principal,
        altitude=cfg.altitude,
    )
    if cfg.out:
        io.write_calibration(res.model, _target(cfg.out), res.rms_px)
    m = res.model
    row = {"rms_px": res.rms_px, "iterations": res.iterations, "points": len(pairs),
           "f": m.f, "u0": m.u0, "v0": m.v0, "Z_meters": m.Z}
    row.update({f"k{i + 1}": c for i, c in enumerate(m.k)})
    _emit(cfg, [row], list(row))
    return 0


# ---- localize ---------------------------------------------------------------


def localize_records(
    records: Sequence[io.PredictionRecord],
    model,
    side: float,
    strategy: AnchorStrategy,
    score_cutoff: float = 0.0,
    run: Callable[[Callable, Iterable], list] | None = None,
) -> list[io.LocalizationRecord]:
    strategy = AnchorStrategy(strategy)
    if strategy is AnchorStrategy.HEAD_CENTER:
        raise ValidationError("head-center needs annotated head points; predictions carry none")
    if model.Z is None:
        raise ValidationError("calibration lacks the camera altitude Z_meters")

    def one(rec: io.PredictionRecord) -> list[io.LocalizationRecord]:
        out = []
        for n, d in enumerate(rec.detections):
            if d.score < score_cutoff:
                continue
            try:
                res = localize(d.box.scaled(side), model, strategy)
            except (NumericalError, OutOfRangeError) as exc:
                out.append(io.LocalizationRecord(rec.image_id, n, strategy.value, "unlocalizable", reason=str(exc)))
                continue
            out.append(io.LocalizationRecord(
                rec.image_id, n, strategy.value, "ok", (res.anchor.u, res.anchor.v), res.X, res.Y, res.theta, res.phi
            ))
        return out

    run = run or (lambda fn, xs: [fn(x) for x in xs])
    return [r for chunk in run(one, [r for r in records if r.angle == 0.0]) for r in chunk]


def cmd_localize(cfg: RunConfig) -> int:
    model, _ = io.read_calibration(cfg.calibration)
    side, records = io.read_predictions(cfg.predictions)
    locs = localize_records(records, model, side or 1.0, cfg.strategy, cfg.score_cutoff, cfg.map)
    if cfg.out:
        io.write_localizations(locs, _target(cfg.out))
    _emit(cfg, [r.as_dict() for r in locs], ("image_id", "index", "status", "X", "Y", "reason"))
    return 0


# ---- evaluate ---------------------------------------------------------------

SUMMARY_COLUMNS = ("metric", "value")
ROW_COLUMNS = ("split", "bucket", "AP", "PE", "num_gt", "num_pe")


def evaluation_inputs(predictions_path, annotations_path, model=None):
    """Pixel-space detections, GTs, splits and the principal point, in annotation order."""
    side, by_image = _predictions_by_image(predictions_path)
    anns = io.read_annotations(annotations_path)
    known = {a.image_id for a in anns}
    unknown = sorted(set(by_image) - known)
    if unknown:
        raise ValidationError(f"predictions reference unknown image {unknown[0]!r}")
    dets = []
    for a in anns:
        rec = _unrotated(by_image.get(a.image_id, ()))
        dets.append([io.denormalize(d, side) for d in rec.detections] if rec else [])
    gts = [list(a.boxes) for a in anns]
    if model is not None:
        principal = model.principal
    elif side is not None:
        principal = ImagePoint(0.5 * side, 0.5 * side)
    else:
        principal = ImagePoint(0.0, 0.0)
    return dets, gts, [a.split for a in anns], principal


def cmd_evaluate(cfg: RunConfig) -> int:
    model = None
    if not cfg.no_pe:
        _require(cfg.calibration, "--calibration", "for positional error (pass --no-pe to skip PE)")
    if cfg.calibration:
        model, _ = io.read_calibration(cfg.calibration)
    dets, gts, splits, principal = evaluation_inputs(cfg.predictions, cfg.annotations, model)
    report = evaluate(
        dets, gts,
        principal=principal,
        model=None if cfg.no_pe else model,
        strategy=AnchorStrategy(cfg.strategy),
        splits=splits,
        score_cutoff=cfg.score_cutoff,
    )
    if cfg.out:
        io.write_document(report.as_dict(), _target(cfg.out))
    if cfg.csv:
        write_table(_target(cfg.csv), report.rows, ROW_COLUMNS)
    if cfg.figures:
        from . import plotting

        fig_dir = Path(cfg.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        curves = {f"IoU {t:.2f}": pr_curve(dets, gts, t, principal) for t in (0.5, 0.75)}
        plotting.plot_pr_curves(curves, fig_dir / "pr_curve.png")
        by_bucket = {b.value: getattr(report, f"AP_{b.value[0]}") for b in DistanceBucket}
        plotting.plot_bucket_bars(by_bucket, fig_dir / "ap_by_bucket.png", "AP (IoU .50:.95)")
        if report.mPE is not None:
            pe = {b.value: getattr(report, f"PE_{b.value[0]}") for b in DistanceBucket}
            plotting.plot_bucket_bars(pe, fig_dir / "pe_by_bucket.png", "mean PE [m]")
    _emit(cfg, [{"metric": k, "value": getattr(report, k)} for k in report.SUMMARY_FIELDS], SUMMARY_COLUMNS)
    return 0


# ---- simulate ---------------------------------------------------------------

STRATEGY_COLUMNS = ("scene", "persons", *[s.value for s in AnchorStrategy])


def _scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def cmd_simulate(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.scenes < 0:
        raise ValidationError("--scenes must be non-negative")
    if cfg.random_altitude:
        # one altitude per run so a single calibration file covers every scene
        altitude = float(np.random.default_rng(cfg.seed).uniform(*ALTITUDE_RANGE))
    else:
        altitude = cfg.altitude
    if not ALTITUDE_RANGE[0] <= altitude <= ALTITUDE_RANGE[1]:
        raise ValidationError(f"altitude {altitude} m outside {ALTITUDE_RANGE} m")
    model = default_model(altitude)
    scene_cfg = SceneConfig(
        num_persons=cfg.persons,
        altitude=altitude,
        placement=cfg.placement,
        min_distance=cfg.min_distance,
        max_distance=cfg.max_distance,
        height_range=tuple(cfg.height_range),
        radius_range=tuple(cfg.radius_range),
        allow_overlap=cfg.allow_overlap,
        model=model,
    )
    attrs = frozenset(cfg.attributes or ())
    problem = io.annotation_problem(cfg.split, attrs)
    if problem:
        raise ValidationError(f"{problem[0]}: {problem[1]}")

    def build(i: int):
        scene = generate_scene(scene_cfg, _scene_seed(cfg.seed, i))
        return scene, render_annotations(scene)

    built = cfg.map(build, range(cfg.scenes))
    ids = [f"sim-{i:05d}" for i in range(len(built))]
    io.write_scenes([s for s, _ in built], out / "scenes.jsonl")
    io.write_calibration(model, out / "calibration.json")
    io.write_annotations(
        (
            io.AnnotationRecord(
                image_id, image_id, cfg.split, attrs,
                tuple(GroundTruthBox(a.box, a.world, a.head) for a in anns if a.box is not None),
            )
            for image_id, (_, anns) in zip(ids, built)
        ),
        out / "annotations.jsonl",
    )

    rows = []
    for image_id, (_, anns) in zip(ids, built):
        pe = compare_strategies(anns, model)
        rows.append({"scene": image_id, "persons": len(anns), **{s.value: v for s, v in pe.items()}})
    flat = [a for _, anns in built for a in anns]
    overall = compare_strategies(flat, model)
    summary = {"scene": "all", "persons": len(flat), **{s.value: v for s, v in overall.items()}}
    write_table(out / "strategies.csv", rows + [summary], STRATEGY_COLUMNS)

    if cfg.predictions:
        noise = NoiseConfig(
            center_sigma=cfg.center_sigma,
            size_sigma=cfg.size_sigma,
            score_range=tuple(cfg.score_range),
            miss_rate=cfg.miss_rate,
            fp_rate=cfg.fp_rate,
        )
        boxes = [[a.box for a in anns if a.box is not None] for _, anns in built]
        radius = model.f * model.r_max
        per_image = perturb_detections(boxes, noise, cfg.seed, model.principal, radius)
        side = 2.0 * model.u0
        records = []
        for image_id, dets in zip(ids, per_image):
            records.append(io.PredictionRecord(image_id, tuple(Detection(_to_unit(d.box, side), d.score) for d in dets)))
            for angle in cfg.equi_angles or ():
                turn = 0.0 if cfg.ignore_rotation else angle
                rotated = tuple(
                    Detection(_to_unit(rotate_radius_aligned(d.box, turn, model.principal), side), d.score)
                    for d in dets
                )
                records.append(io.PredictionRecord(image_id, rotated, angle))
        io.write_predictions(records, out / "predictions.jsonl", side)

    if cfg.figures:
        from . import plotting

        fig_dir = Path(cfg.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        if built:
            scene, anns = built[0]
            estimates = {}
            for s in (AnchorStrategy.RADIAL_NEAR_MIDPOINT, AnchorStrategy.BOX_CENTER):
                estimates[s.value] = [
                    (lambda r: (r.X, r.Y))(localize(a.box, model, s)) for a in anns if a.box is not None
                ]
            plotting.plot_scene(scene, [a for a in anns if a.box is not None], fig_dir / "scene_00000.png", estimates)
        plotting.plot_bucket_bars(
            {s.value: overall[s] for s in AnchorStrategy}, fig_dir / "strategies.png", "mean PE [m]"
        )
    _emit(cfg, [summary], STRATEGY_COLUMNS)
    return 0


# ---- equi-check -------------------------------------------------------------

EQUI_COLUMNS = ("image_id", "angle", "cls", "l1", "giou", "det", "rotat_equi", "total")


def _pad(dets: Sequence[Detection], n: int | None, principal: ImagePoint, image_id: str) -> tuple[Detection, ...]:
    if n is None:
        return tuple(dets)
    if len(dets) > n:
        raise ValidationError(f"image {image_id!r} has {len(dets)} detections, more than --num-queries {n}")
    filler = Detection(RadiusAlignedBox(principal.u, principal.v, 0.01, 0.01), 0.0)
    return tuple(dets) + (filler,) * (n - len(dets))


def equi_rows(
    by_image: dict[str, list[io.PredictionRecord]],
    annotations: Sequence[io.AnnotationRecord],
    side: float,
    principal: ImagePoint,
    weights: LossWeights,
    lam: float,
    num_queries: int | None = None,
    run: Callable[[Callable, Iterable], list] | None = None,
) -> list[dict]:
    """One LossBreakdown row per (image, non-zero angle), plus a mean row."""
    tasks = []
    for ann in annotations:
        group = by_image.get(ann.image_id, [])
        base = _unrotated(group)
        if base is None:
            if group:
                raise ValidationError(f"image {ann.image_id!r} has rotated predictions but no angle-0 record")
            continue
        n = num_queries if num_queries is not None else len(base.detections)
        replay = [(r.angle, _pad(r.detections, num_queries, principal, ann.image_id)) for r in group]
        gts = [GroundTruthBox(g.box.scaled(1.0 / side), g.world, g.head) for g in ann.boxes]
        detector = FileDetector({ann.image_id: replay}, n)
        tasks.extend((ann.image_id, r.angle, detector, gts) for r in group if r.angle != 0.0)

    def one(task):
        image_id, angle, detector, gts = task
        b = equivariant_objective(detector, image_id, gts, angle, principal, weights, lam)
        return {"image_id": image_id, "angle": angle, **b.as_dict()}

    run = run or (lambda fn, xs: [fn(x) for x in xs])
    rows = run(one, tasks)
    if rows:
        mean = {"image_id": "mean", "angle": None}
        for k in EQUI_COLUMNS[2:]:
            mean[k] = math.fsum(r[k] for r in rows) / len(rows)
        rows.append(mean)
    return rows


def cmd_equi_check(cfg: RunConfig) -> int:
    side, by_image = _predictions_by_image(cfg.predictions)
    anns = io.read_annotations(cfg.annotations)
    if cfg.calibration:
        model, _ = io.read_calibration(cfg.calibration)
        principal = ImagePoint(model.u0 / side, model.v0 / side) if side else ImagePoint(0.5, 0.5)
    else:
        principal = ImagePoint(0.5, 0.5)
    if cfg.lam < 0:
        raise ValidationError("--lam must be non-negative")
    weights = LossWeights(*cfg.weights)
    rows = equi_rows(by_image, anns, side or 1.0, principal, weights, cfg.lam, cfg.num_queries, cfg.map)
    if cfg.out:
        write_table(_target(cfg.out), rows, EQUI_COLUMNS)
    _emit(cfg, rows, EQUI_COLUMNS)
    return 0


# ---- parser -----------------------------------------------------------------


def _strategy(value: str) -> str:
    try:
        return AnchorStrategy(value).value
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown strategy {value!r}; choose from {', '.join(s.value for s in AnchorStrategy)}"
        ) from None


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    p = _Parser(prog="fisheyeloc", description="Overhead-fisheye person localization toolkit.")
    p.add_argument("--config", help=f"JSON file of option defaults (default: ${CONFIG_ENV})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: CPU count)")
    p.add_argument("--format", choices=("text", "csv"), default="text", help="stdout report format")
    sub = p.add_subparsers(dest="command", required=True)
    subs = {}

    c = subs["calibrate"] = sub.add_parser("calibrate", help="fit the fisheye model to floor/pixel pairs")
    c.add_argument("correspondences", help="CSV with columns X,Y,Z,u,v")
    c.add_argument("--initial-focal", type=float, required=True)
    c.add_argument("--principal", type=float, nargs=2, metavar=("U0", "V0"))
    c.add_argument("--fix-principal", action="store_true")
    c.add_argument("--altitude", type=float, help="camera height in meters (default: the points' common Z)")
    c.add_argument("--out", help="calibration JSON to write")
    c.set_defaults(handler=cmd_calibrate)

    lo = subs["localize"] = sub.add_parser("localize", help="floor positions for predicted boxes")
    lo.add_argument("predictions")
    lo.add_argument("--calibration", required=True)
    lo.add_argument("--strategy", type=_strategy, default=AnchorStrategy.RADIAL_NEAR_MIDPOINT.value)
    lo.add_argument("--score-cutoff", type=float, default=0.0)
    lo.add_argument("--out", help="localization JSONL to write")
    lo.set_defaults(handler=cmd_localize)

    e = subs["evaluate"] = sub.add_parser("evaluate", help="AP, P/R/F and positional error")
    e.add_argument("predictions")
    e.add_argument("annotations")
    e.add_argument("--calibration")
    e.add_argument("--no-pe", action="store_true", help="skip positional error")
    e.add_argument("--strategy", type=_strategy, default=AnchorStrategy.RADIAL_NEAR_MIDPOINT.value)
    e.add_argument("--score-cutoff", type=float, default=0.5)
    e.add_argument("--out", help="report JSON to write")
    e.add_argument("--csv", help="per split/bucket rows as CSV")
    e.add_argument("--figures", help="directory for PR and per-bucket figures")
    e.set_defaults(handler=cmd_evaluate)

    s = subs["simulate"] = sub.add_parser("simulate", help="synthetic scenes with exact ground truth")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--scenes", type=int, default=10)
    s.add_argument("--persons", type=int, default=10)
    s.add_argument("--altitude", type=float, default=3.0)
    s.add_argument("--random-altitude", action="store_true")
    s.add_argument("--placement", choices=("disc", "radial"), default="disc")
    s.add_argument("--min-distance", type=float, default=SceneConfig.min_distance)
    s.add_argument("--max-distance", type=float, default=SceneConfig.max_distance)
    s.add_argument("--height-range", type=float, nargs=2, default=SceneConfig.height_range)
    s.add_argument("--radius-range", type=float, nargs=2, default=SceneConfig.radius_range)
    s.add_argument("--allow-overlap", action="store_true")
    s.add_argument("--split", default="test-seen", choices=io.SPLITS)
    s.add_argument("--attributes", nargs="*", default=())
    s.add_argument("--predictions", action="store_true", help="also write perturbed predictions")
    s.add_argument("--center-sigma", type=float, default=0.0)
    s.add_argument("--size-sigma", type=float, default=0.0)
    s.add_argument("--score-range", type=float, nargs=2, default=(1.0, 1.0))
    s.add_argument("--miss-rate", type=float, default=0.0)
    s.add_argument("--fp-rate", type=float, default=0.0)
    s.add_argument("--equi-angles", type=float, nargs="*", default=(), help="rotated replica angles [rad]")
    s.add_argument("--ignore-rotation", action="store_true", help="replicas repeat the unrotated boxes")
    s.add_argument("--figures", help="directory for the scene and strategy figures")
    s.set_defaults(handler=cmd_simulate)

    q = subs["equi-check"] = sub.add_parser("equi-check", help="rotation-equivariance residuals")
    q.add_argument("predictions", help="predictions with rotated replicas")
    q.add_argument("annotations")
    q.add_argument("--calibration", help="principal point source (default: image center)")
    q.add_argument("--lam", type=float, default=DEFAULT_LAMBDA)
    q.add_argument("--weights", type=float, nargs=3, default=(2.0, 5.0, 2.0), metavar=("CLS", "L1", "GIOU"))
    q.add_argument("--num-queries", type=int, help="pad every replica to this many queries")
    q.add_argument("--out", help="residual CSV to write")
    q.set_defaults(handler=cmd_equi_check)
    return p, subs


def _apply_config(parser, subs, path: str) -> None:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError(f"config {path}: expected a JSON object")
    for key, value in cfg.items():
        if key in GLOBAL_KEYS:
            parser.set_defaults(**{key: value})
        elif key in subs:
            if not isinstance(value, dict):
                raise ValidationError(f"config {path}: {key!r} must map option names to values")
            dests = {a.dest for a in subs[key]._actions}
            for opt, v in value.items():
                dest = opt.replace("-", "_")
                if dest not in dests or dest == "help":
                    raise ValidationError(f"config {path}: unknown option {opt!r} for {key}")
                subs[key].set_defaults(**{dest: v})
                # a configured value satisfies a required flag
                for a in subs[key]._actions:
                    if a.dest == dest:
                        a.required = False
        else:
            raise ValidationError(f"config {path}: unknown key {key!r}")


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser, subs = build_parser()
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        config = known.config or os.environ.get(CONFIG_ENV)
        if config:
            _apply_config(parser, subs, config)
        cfg = RunConfig.from_namespace(parser.parse_args(argv))
        return subs[cfg.command].get_default("handler")(cfg)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    except FisheyeLocError as exc:
        print(f"fisheyeloc: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fisheyeloc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
