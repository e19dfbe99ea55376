"""File formats: annotations, predictions, calibration, scenes, localizations.

Line-oriented files (annotations, predictions, localizations) are JSON Lines
whose first line is a header object carrying ``format`` and ``version``.
Floats are always written with 17 significant digits so that every double
survives a write/read cycle exactly. See ``docs/formats.md`` for the layouts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

from .camera import FisheyeModel, ImagePoint, WorldPoint
from .errors import ParseError, RecordError, ValidationError
from .geometry import RadiusAlignedBox
from .matching import Detection, GroundTruthBox

VERSION = 1
ANNOTATIONS_FORMAT = "fisheyeloc.annotations"
PREDICTIONS_FORMAT = "fisheyeloc.predictions"
LOCALIZATIONS_FORMAT = "fisheyeloc.localizations"
CALIBRATION_FORMAT = "fisheyeloc.calibration"
SCENE_FORMAT = "fisheyeloc.scene"
WORLD_FRAME = "origin at nadir; +X along image +u, +Y along image +v; meters"

SPLITS = ("train", "val-seen", "val-unseen", "test-seen", "test-unseen")
ATTRIBUTES = ("day", "night", "outdoor", "indoor", "sunny", "rain", "foggy", "snow")
EXCLUSIVE = (("day", "night"), ("outdoor", "indoor"))


# ---- serialization ----------------------------------------------------------


def dumps(obj: Any) -> str:
    """Compact JSON with every float at 17 significant digits."""
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValidationError(f"cannot serialize non-finite value {obj!r}")
        return format(obj, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if hasattr(obj, "item"):
        return dumps(obj.item())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _reject_constant(name):
    raise ValueError(f"non-finite constant {name}")


def loads(text: str, line: int | None = None) -> Any:
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except (ValueError, RecursionError) as exc:
        raise ParseError(f"invalid JSON ({exc.__class__.__name__}: {exc})", line) from None


# ---- field validation -------------------------------------------------------


class _Fields:
    """Typed accessors over one decoded object; every failure names its field."""

    def __init__(self, obj: Any, line: int | None, what: str):
        if not isinstance(obj, dict):
            raise RecordError(f"expected an object, got {type(obj).__name__}", line, what or "record")
        self.obj, self.line, self.what = obj, line, what

    def fail(self, name: str, msg: str):
        raise RecordError(msg, self.line, f"{self.what}.{name}" if self.what else name)

    def only(self, *allowed: str):
        extra = sorted(set(self.obj) - set(allowed))
        if extra:
            self.fail(extra[0], "unknown field")

    def has(self, name: str) -> bool:
        return name in self.obj

    def raw(self, name: str, required: bool = True, default: Any = None) -> Any:
        if name not in self.obj:
            if required:
                self.fail(name, "missing field")
            return default
        return self.obj[name]

    def str(self, name: str) -> str:
        v = self.raw(name)
        if not isinstance(v, str):
            self.fail(name, "expected a string")
        return v

    def num(self, name: str, required: bool = True, default: float | None = None) -> float | None:
        v = self.raw(name, required, default)
        if v is None and not required:
            return default
        return _number(v, lambda msg: self.fail(name, msg))

    def nums(self, name: str, n: int, required: bool = True) -> list[float] | None:
        v = self.raw(name, required)
        if v is None and not required:
            return None
        if not isinstance(v, list) or len(v) != n:
            self.fail(name, f"expected a list of {n} numbers")
        return [_number(x, lambda msg: self.fail(name, msg)) for x in v]

    def list(self, name: str) -> list:
        v = self.raw(name)
        if not isinstance(v, list):
            self.fail(name, "expected a list")
        return v


def _number(v: Any, fail) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        fail("expected a number")
    try:
        x = float(v)
    except OverflowError:
        fail("number out of range")
    if not math.isfinite(x):
        fail("expected a finite number")
    return x


def _header(obj: Any, fmt: str, line: int) -> dict:
    h = _Fields(obj, line, "header")
    if h.raw("format") != fmt:
        h.fail("format", f"expected {fmt!r}")
    if h.raw("version") != VERSION:
        h.fail("version", f"unsupported version (expected {VERSION})")
    return obj


def _lines(path: str | Path) -> Iterator[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        for i, text in enumerate(fh, start=1):
            if text.strip():
                yield i, text


def _read_jsonl(path, fmt: str) -> Iterator[tuple[dict | None, int, Any]]:
    """Yields (header, line, decoded object) for every record line."""
    header = None
    for i, text in _lines(path):
        obj = loads(text, i)
        if header is None:
            header = _header(obj, fmt, i)
            continue
        yield header, i, obj


def _write_lines(path, header: dict, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(header) + "\n")
        for rec in records:
            fh.write(dumps(rec) + "\n")


# ---- annotations ------------------------------------------------------------


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    scene_id: str
    split: str
    attributes: frozenset[str] = frozenset()
    boxes: tuple[GroundTruthBox, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attributes", frozenset(self.attributes))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        problem = annotation_problem(self.split, self.attributes)
        if problem:
            raise ValidationError(problem[1])


def annotation_problem(split: str, attributes: Iterable[str]) -> tuple[str, str] | None:
    """(field, message) for the first invariant violation, else None."""
    if split not in SPLITS:
        return "split", f"{split!r} not one of {', '.join(SPLITS)}"
    attrs = set(attributes)
    unknown = sorted(attrs - set(ATTRIBUTES))
    if unknown:
        return "attributes", f"unknown attribute {unknown[0]!r}"
    for a, b in EXCLUSIVE:
        if a in attrs and b in attrs:
            return "attributes", f"{a!r} and {b!r} are mutually exclusive"
    return None


def _annotation_to_dict(rec: AnnotationRecord) -> dict:
    return {
        "image_id": rec.image_id,
        "scene_id": rec.scene_id,
        "split": rec.split,
        "attributes": sorted(rec.attributes, key=ATTRIBUTES.index),
        "boxes": [
            {
                "box": g.box.as_list(),
                "world": list(g.world) if g.world is not None else None,
                "head": [g.head.u, g.head.v] if g.head is not None else None,
            }
            for g in rec.boxes
        ],
    }


def _box(values: list[float], fail) -> RadiusAlignedBox:
    try:
        return RadiusAlignedBox(*values)
    except ValidationError as exc:
        fail(str(exc))


def _annotation_from_obj(obj: Any, line: int) -> AnnotationRecord:
    r = _Fields(obj, line, "")
    r.only("image_id", "scene_id", "split", "attributes", "boxes")
    image_id, scene_id, split = r.str("image_id"), r.str("scene_id"), r.str("split")
    attrs = r.list("attributes")
    if not all(isinstance(a, str) for a in attrs):
        r.fail("attributes", "expected a list of strings")
    if len(set(attrs)) != len(attrs):
        r.fail("attributes", "duplicate attribute")
    problem = annotation_problem(split, attrs)
    if problem:
        r.fail(*problem)
    boxes = []
    for n, item in enumerate(r.list("boxes")):
        b = _Fields(item, line, f"boxes[{n}]")
        b.only("box", "world", "head")
        box = _box(b.nums("box", 4), lambda msg: b.fail("box", msg))
        world = b.nums("world", 2, required=False)
        head = b.nums("head", 2, required=False)
        boxes.append(
            GroundTruthBox(box, tuple(world) if world else None, ImagePoint(*head) if head else None)
        )
    return AnnotationRecord(image_id, scene_id, split, frozenset(attrs), tuple(boxes))


def iter_annotations(path: str | Path) -> Iterator[AnnotationRecord]:
    for _, line, obj in _read_jsonl(path, ANNOTATIONS_FORMAT):
        yield _annotation_from_obj(obj, line)


def read_annotations(path: str | Path) -> list[AnnotationRecord]:
    return list(iter_annotations(path))


def parse_annotation_line(text: str, line: int = 1) -> AnnotationRecord:
    return _annotation_from_obj(loads(text, line), line)


def write_annotations(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    _write_lines(
        path,
        {"format": ANNOTATIONS_FORMAT, "version": VERSION},
        (_annotation_to_dict(r) for r in records),
    )


# ---- predictions ------------------------------------------------------------


@dataclass(frozen=True)
class PredictionRecord:
    """Detections for one image (optionally one rotated replica) in [0, 1] units."""

    image_id: str
    detections: tuple[Detection, ...] = ()
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        for d in self.detections:
            if not all(0.0 <= x <= 1.0 for x in d.box.as_list()):
                raise ValidationError(f"normalized box {d.box.as_list()} outside [0, 1]")


def normalize(det: Detection, side: float) -> Detection:
    return Detection(det.box.scaled(1.0 / side), det.score)


def denormalize(det: Detection, side: float) -> Detection:
    return Detection(det.box.scaled(side), det.score)


def _prediction_from_obj(obj: Any, line: int) -> PredictionRecord:
    r = _Fields(obj, line, "")
    r.only("image_id", "angle", "detections")
    image_id = r.str("image_id")
    angle = r.num("angle", required=False, default=0.0)
    dets = []
    for n, item in enumerate(r.list("detections")):
        d = _Fields(item, line, f"detections[{n}]")
        d.only("box", "score")
        values = d.nums("box", 4)
        if not all(0.0 <= x <= 1.0 for x in values):
            d.fail("box", "normalized box values must lie in [0, 1]")
        box = _box(values, lambda msg: d.fail("box", msg))
        score = d.num("score")
        if not 0.0 <= score <= 1.0:
            d.fail("score", f"{score!r} outside [0, 1]")
        dets.append(Detection(box, score))
    return PredictionRecord(image_id, tuple(dets), angle)


def _prediction_to_dict(rec: PredictionRecord) -> dict:
    out: dict = {"image_id": rec.image_id}
    if rec.angle != 0.0:
        out["angle"] = rec.angle
    out["detections"] = [{"box": d.box.as_list(), "score": d.score} for d in rec.detections]
    return out


def _side(header: dict, line: int) -> float:
    h = _Fields(header, line, "header")
    side = h.num("image_side")
    if side <= 0:
        h.fail("image_side", "must be positive")
    return side


def iter_predictions(path: str | Path) -> Iterator[tuple[float, PredictionRecord]]:
    """Yields (image_side, record)."""
    for header, line, obj in _read_jsonl(path, PREDICTIONS_FORMAT):
        yield _side(header, 1), _prediction_from_obj(obj, line)


def read_predictions(path: str | Path) -> tuple[float | None, list[PredictionRecord]]:
    side, records = None, []
    for header, line, obj in _read_jsonl(path, PREDICTIONS_FORMAT):
        if side is None:
            side = _side(header, 1)
        records.append(_prediction_from_obj(obj, line))
    if side is None and Path(path).stat().st_size:
        # header-only file: still validate it
        for i, text in _lines(path):
            side = _side(_header(loads(text, i), PREDICTIONS_FORMAT, i), i)
            break
    return side, records


def parse_prediction_line(text: str, line: int = 1) -> PredictionRecord:
    return _prediction_from_obj(loads(text, line), line)


def write_predictions(records: Iterable[PredictionRecord], path: str | Path, image_side: float) -> None:
    _write_lines(
        path,
        {"format": PREDICTIONS_FORMAT, "version": VERSION, "image_side": float(image_side)},
        (_prediction_to_dict(r) for r in records),
    )


# ---- calibration ------------------------------------------------------------


def calibration_to_dict(model: FisheyeModel, rms_px: float | None = None) -> dict:
    return {
        "format": CALIBRATION_FORMAT,
        "version": VERSION,
        "f": model.f,
        "u0": model.u0,
        "v0": model.v0,
        "k": list(model.k),
        "Z_meters": model.Z,
        "rms_px": rms_px,
        "world_frame": WORLD_FRAME,
    }


def calibration_from_dict(obj: Any, line: int | None = None) -> tuple[FisheyeModel, float | None]:
    c = _Fields(obj, line, "")
    c.only("format", "version", "f", "u0", "v0", "k", "Z_meters", "rms_px", "world_frame")
    if c.raw("format") != CALIBRATION_FORMAT:
        c.fail("format", f"expected {CALIBRATION_FORMAT!r}")
    if c.raw("version") != VERSION:
        c.fail("version", f"unsupported version (expected {VERSION})")
    k = c.nums("k", 5)
    Z = c.num("Z_meters", required=False)
    rms = c.num("rms_px", required=False)
    try:
        model = FisheyeModel(c.num("f"), c.num("u0"), c.num("v0"), tuple(k), Z)
    except ValidationError as exc:
        raise RecordError(str(exc), line, "model") from None
    return model, rms


def write_calibration(model: FisheyeModel, path: str | Path, rms_px: float | None = None) -> None:
    d = calibration_to_dict(model, rms_px)
    body = ",\n".join(f"  {json.dumps(k)}: {dumps(v)}" for k, v in d.items())
    Path(path).write_text("{\n" + body + "\n}\n", encoding="utf-8")


def read_calibration(path: str | Path) -> tuple[FisheyeModel, float | None]:
    return calibration_from_dict(loads(Path(path).read_text(encoding="utf-8")))


# ---- calibration correspondences --------------------------------------------

CORRESPONDENCE_COLUMNS = ("X", "Y", "Z", "u", "v")


def read_correspondences(path: str | Path) -> list[tuple[WorldPoint, ImagePoint]]:
    """CSV with header X,Y,Z,u,v: floor point in meters and its pixel."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if tuple(h.strip() for h in header) != CORRESPONDENCE_COLUMNS:
            raise ParseError(f"header must be {','.join(CORRESPONDENCE_COLUMNS)}", 1)
        for row in reader:
            line = reader.line_num
            if not row or not "".join(row).strip():
                continue
            if len(row) != 5:
                raise ParseError(f"expected 5 columns, got {len(row)}", line)
            try:
                vals = [float(x) for x in row]
            except ValueError:
                raise ParseError("non-numeric value", line) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", line)
            out.append((WorldPoint(*vals[:3]), ImagePoint(*vals[3:])))
    return out


def write_correspondences(pairs: Iterable[tuple[WorldPoint, ImagePoint]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CORRESPONDENCE_COLUMNS)
        for wp, ip in pairs:
            w.writerow([format(x, ".17g") for x in (wp.X, wp.Y, wp.Z, ip.u, ip.v)])


# ---- localization output ----------------------------------------------------


@dataclass(frozen=True)
class LocalizationRecord:
    image_id: str
    index: int
    strategy: str
    status: str = "ok"
    anchor: tuple[float, float] | None = None
    X: float | None = None
    Y: float | None = None
    theta: float | None = None
    phi: float | None = None
    reason: str | None = None

    def as_dict(self) -> dict:
        d = {"image_id": self.image_id, "index": self.index, "strategy": self.strategy, "status": self.status}
        if self.status == "ok":
            d.update(anchor=list(self.anchor), X=self.X, Y=self.Y, theta=self.theta, phi=self.phi)
        else:
            d["reason"] = self.reason
        return d


def write_localizations(records: Iterable[LocalizationRecord], path: str | Path) -> None:
    _write_lines(path, {"format": LOCALIZATIONS_FORMAT, "version": VERSION}, (r.as_dict() for r in records))


def read_localizations(path: str | Path) -> list[LocalizationRecord]:
    out = []
    for _, line, obj in _read_jsonl(path, LOCALIZATIONS_FORMAT):
        r = _Fields(obj, line, "")
        status = r.str("status")
        index = r.raw("index")
        if isinstance(index, bool) or not isinstance(index, int):
            r.fail("index", "expected an integer")
        if status == "ok":
            r.only("image_id", "index", "strategy", "status", "anchor", "X", "Y", "theta", "phi")
            out.append(LocalizationRecord(
                r.str("image_id"), index, r.str("strategy"), status, tuple(r.nums("anchor", 2)),
                r.num("X"), r.num("Y"), r.num("theta"), r.num("phi"),
            ))
        else:
            r.only("image_id", "index", "strategy", "status", "reason")
            out.append(LocalizationRecord(r.str("image_id"), index, r.str("strategy"), status, reason=r.str("reason")))
    return out


# ---- scenes -----------------------------------------------------------------


def scene_to_dict(scene) -> dict:
    cal = calibration_to_dict(scene.model)
    return {
        "format": SCENE_FORMAT,
        "version": VERSION,
        "seed": scene.seed,
        "model": {k: cal[k] for k in ("f", "u0", "v0", "k", "Z_meters")},
        "persons": [[p.X, p.Y, p.height, p.radius] for p in scene.persons],
    }


def scene_from_dict(obj: Any):
    from .sim import Person, Scene

    s = _Fields(obj, None, "")
    s.only("format", "version", "seed", "model", "persons")
    if s.raw("format") != SCENE_FORMAT:
        s.fail("format", f"expected {SCENE_FORMAT!r}")
    seed = s.raw("seed")
    if isinstance(seed, bool) or not isinstance(seed, int):
        s.fail("seed", "expected an integer")
    m = dict(s.raw("model")) if isinstance(s.raw("model"), dict) else s.fail("model", "expected an object")
    model, _ = calibration_from_dict({"format": CALIBRATION_FORMAT, "version": VERSION, **m})
    persons = []
    for n, item in enumerate(s.list("persons")):
        if not isinstance(item, list) or len(item) != 4:
            s.fail(f"persons[{n}]", "expected [X, Y, height, radius]")
        persons.append(Person(*[_number(v, lambda msg: s.fail(f"persons[{n}]", msg)) for v in item]))
    return Scene(model, tuple(persons), seed)


def write_scenes(scenes: Sequence, path: str | Path) -> None:
    _write_lines(path, {"format": SCENE_FORMAT + "s", "version": VERSION}, (scene_to_dict(s) for s in scenes))


def read_scenes(path: str | Path) -> list:
    out = []
    for _, line, obj in _read_jsonl(path, SCENE_FORMAT + "s"):
        try:
            out.append(scene_from_dict(obj))
        except ParseError as exc:
            raise ParseError(str(exc), line) from None
    return out


def write_document(obj: Any, path: str | Path) -> None:
    """One JSON object, one key per line."""
    body = ",\n".join(f"  {json.dumps(k)}: {dumps(v)}" for k, v in obj.items())
    Path(path).write_text("{\n" + body + "\n}\n", encoding="utf-8")


# ---- external datasets ------------------------------------------------------

def from_loaf_record(obj: Any) -> AnnotationRecord:
    """Convert one record of the released LOAF annotations.

    Placeholder: the released schema is not mirrored here, so this raises
    until it is filled in against the actual files. The target is the
    ``fisheyeloc.annotations`` record above.
    """
    raise NotImplementedError("LOAF conversion is not implemented; map the released schema onto AnnotationRecord")
