"""Detection and localization metrics.

AP follows the COCO recipe: per-image greedy matching in descending score
order, one global ranked list, and 101-point interpolated precision. IoU is
the rotated IoU of radius-aligned boxes around a shared principal point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .camera import FisheyeModel, ImagePoint
from .errors import NumericalError, ValidationError
from .geometry import rotated_iou
from .localization import AnchorStrategy, localize, positional_error as _pe
from .matching import Detection, GroundTruthBox

COCO_THRESHOLDS = tuple(float(t) for t in np.linspace(0.5, 0.95, 10))
# i/100 rather than linspace: both this and recall = tp/n_gt are correctly
# rounded quotients, so recall >= point holds exactly when it does in rationals
RECALL_POINTS = np.arange(101) / 100.0
# IoU values that equal a threshold up to roundoff still count as passing
_IOU_SLACK = 1e-12


class DistanceBucket(str, enum.Enum):
    NEAR = "near"
    MIDDLE = "middle"
    FAR = "far"

    @classmethod
    def of(cls, world: Sequence[float]) -> "DistanceBucket":
        d = math.hypot(world[0], world[1])
        if d < 10.0:
            return cls.NEAR
        if d < 20.0:
            return cls.MIDDLE
        return cls.FAR


def _iou_matrix(dets: Sequence[Detection], gts: Sequence[GroundTruthBox], principal: ImagePoint) -> np.ndarray:
    out = np.zeros((len(dets), len(gts)))
    gt_boxes = [g.box.to_rotated(principal) for g in gts]
    for i, d in enumerate(dets):
        db = d.box.to_rotated(principal)
        for j, gb in enumerate(gt_boxes):
            out[i, j] = rotated_iou(db, gb)
    return out


def _greedy(iou: np.ndarray, scores: np.ndarray, thr: float) -> np.ndarray:
    """Matched GT index per detection (-1 for none)."""
    matched = np.full(len(scores), -1)
    if iou.shape[1] == 0:
        return matched
    taken = np.zeros(iou.shape[1], dtype=bool)
    for i in np.argsort(-scores, kind="stable"):
        best, best_j = thr - _IOU_SLACK, -1
        for j in range(iou.shape[1]):
            if not taken[j] and iou[i, j] >= best:
                best, best_j = iou[i, j], j
        if best_j >= 0:
            taken[best_j] = True
            matched[i] = best_j
    return matched


def _interpolated_ap(scores: np.ndarray, tp: np.ndarray, n_gt: int) -> float | None:
    if n_gt == 0:
        return None if len(scores) == 0 else 0.0
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = tp[order].astype(float)
    tps, fps = np.cumsum(tp), np.cumsum(1.0 - tp)
    recall = tps / n_gt
    precision = tps / (tps + fps)
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    # exactly rounded sum, so hand-countable cases come out bit-exact
    return math.fsum(q.tolist()) / len(RECALL_POINTS)


class _Matcher:
    """Caches per-image IoU matrices so several thresholds reuse them."""

    def __init__(self, dets, gts, principal: ImagePoint):
        if len(dets) != len(gts):
            raise ValidationError("detections and ground truths must list the same images")
        self.dets = [list(d) for d in dets]
        self.gts = [list(g) for g in gts]
        self.scores = [np.array([d.score for d in ds], dtype=float) for ds in self.dets]
        self.ious = [_iou_matrix(d, g, principal) for d, g in zip(self.dets, self.gts)]
        self._matches: dict[float, list[np.ndarray]] = {}

    def matches(self, thr: float) -> list[np.ndarray]:
        if thr not in self._matches:
            self._matches[thr] = [_greedy(iou, s, thr) for iou, s in zip(self.ious, self.scores)]
        return self._matches[thr]

    def ap(self, thr: float, images: Iterable[int] | None = None) -> float | None:
        images = range(len(self.dets)) if images is None else list(images)
        scores, tp, n_gt = [], [], 0
        all_matches = self.matches(thr)
        for k in images:
            scores.append(self.scores[k])
            tp.append(all_matches[k] >= 0)
            n_gt += len(self.gts[k])
        return _interpolated_ap(_cat(scores), _cat(tp, bool), n_gt)

    def mean_ap(self, images=None, thresholds=COCO_THRESHOLDS) -> float | None:
        return _mean_defined([self.ap(t, images) for t in thresholds])

    def bucket_ap(self, bucket: DistanceBucket, thr: float, images=None) -> float | None:
        images = range(len(self.dets)) if images is None else list(images)
        all_matches = self.matches(thr)
        scores, tp, n_gt = [], [], 0
        for k in images:
            gb = [DistanceBucket.of(_world(g)) for g in self.gts[k]]
            n_gt += sum(b is bucket for b in gb)
            iou = self.ious[k]
            for i, m in enumerate(all_matches[k]):
                if m >= 0:
                    if gb[m] is bucket:
                        scores.append(self.scores[k][i])
                        tp.append(True)
                    continue
                if iou.shape[1] and iou[i].max() > 0.0:
                    if gb[int(np.argmax(iou[i]))] is not bucket:
                        continue
                # unmatched: charged to its nearest GT's bucket, or to every bucket
                scores.append(self.scores[k][i])
                tp.append(False)
        if n_gt == 0:
            # a bucket without ground truth has no defined AP
            return None
        return _interpolated_ap(np.array(scores, dtype=float), np.array(tp, dtype=bool), n_gt)


def _cat(parts, dtype=float):
    return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)


def _mean_defined(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _world(g: GroundTruthBox) -> tuple[float, float]:
    if g.world is None:
        raise ValidationError("ground truth lacks a world position")
    return g.world


def average_precision(dets, gts, iou_threshold: float = 0.5, principal: ImagePoint = ImagePoint(0.5, 0.5)) -> float | None:
    """AP at one IoU threshold; None when there is nothing to evaluate."""
    return _Matcher(dets, gts, principal).ap(iou_threshold)


def mean_ap(dets, gts, principal: ImagePoint = ImagePoint(0.5, 0.5)) -> float | None:
    return _Matcher(dets, gts, principal).mean_ap()


def bucketed_ap(
    dets, gts, principal: ImagePoint = ImagePoint(0.5, 0.5), thresholds: Sequence[float] = COCO_THRESHOLDS
) -> dict[DistanceBucket, float | None]:
    """Per distance bucket AP, averaged over ``thresholds``; None for empty buckets."""
    m = _Matcher(dets, gts, principal)
    return {b: _mean_defined([m.bucket_ap(b, t) for t in thresholds]) for b in DistanceBucket}


def pr_curve(dets, gts, iou_threshold: float = 0.5, principal: ImagePoint = ImagePoint(0.5, 0.5)):
    """Raw (recall, precision) along the global ranking."""
    m = _Matcher(dets, gts, principal)
    matches = m.matches(iou_threshold)
    scores, tp = _cat(m.scores), _cat([x >= 0 for x in matches], bool)
    n_gt = sum(len(g) for g in m.gts)
    order = np.argsort(-scores, kind="stable")
    tps = np.cumsum(tp[order])
    fps = np.cumsum(~tp[order])
    recall = tps / n_gt if n_gt else np.zeros(len(tps))
    precision = tps / np.maximum(tps + fps, 1)
    return recall, precision


def precision_recall_f1(dets, gts, score_cutoff: float = 0.5, iou_threshold: float = 0.5,
                        principal: ImagePoint = ImagePoint(0.5, 0.5)) -> tuple[float, float, float]:
    kept = [[d for d in ds if d.score >= score_cutoff] for ds in dets]
    m = _Matcher(kept, gts, principal)
    tp = sum(int(np.sum(x >= 0)) for x in m.matches(iou_threshold))
    n_det = sum(len(d) for d in kept)
    n_gt = sum(len(g) for g in m.gts)
    p = tp / n_det if n_det else 0.0
    r = tp / n_gt if n_gt else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


# ---- positional error -------------------------------------------------------


@dataclass(frozen=True)
class PEStats:
    mean: float | None
    per_bucket: dict[DistanceBucket, float | None]
    counts: dict[DistanceBucket, int]
    total: int
    sum: float

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Sequence[float], Sequence[float]]]) -> "PEStats":
        sums = {b: 0.0 for b in DistanceBucket}
        counts = {b: 0 for b in DistanceBucket}
        for est, truth in pairs:
            b = DistanceBucket.of(truth)
            sums[b] += _pe(est, truth)
            counts[b] += 1
        total = sum(counts.values())
        s = math.fsum(sums.values())
        return cls(
            s / total if total else None,
            {b: (sums[b] / counts[b] if counts[b] else None) for b in DistanceBucket},
            counts,
            total,
            s,
        )


def positional_error(localizations: Sequence[Sequence[float]], truths: Sequence[Sequence[float]]) -> PEStats:
    """Mean Euclidean error overall and per bucket for already-paired positions."""
    if len(localizations) != len(truths):
        raise ValidationError("localizations and ground truths must pair up")
    return PEStats.from_pairs(zip(localizations, truths))


@dataclass
class LocalizationPairs:
    pairs: list[tuple[tuple[float, float], tuple[float, float]]] = field(default_factory=list)
    unmatched_gt: int = 0
    unlocalizable: int = 0


def localization_pairs(dets, gts, model: FisheyeModel, strategy=AnchorStrategy.RADIAL_NEAR_MIDPOINT,
                       iou_threshold: float = 0.5, images=None) -> LocalizationPairs:
    """True-positive detections at ``iou_threshold`` localized and paired to their GT."""
    m = _Matcher(dets, gts, model.principal)
    out = LocalizationPairs()
    matches = m.matches(iou_threshold)
    for k in range(len(m.dets)) if images is None else images:
        hit = set()
        for i, g in enumerate(matches[k]):
            if g < 0:
                continue
            hit.add(int(g))
            gt = m.gts[k][g]
            try:
                res = localize(m.dets[k][i].box, model, strategy, gt.head)
            except NumericalError:
                out.unlocalizable += 1
                continue
            out.pairs.append(((res.X, res.Y), _world(gt)))
        out.unmatched_gt += len(m.gts[k]) - len(hit)
    return out


# ---- full report ------------------------------------------------------------

SPLIT_GROUPS = ("all", "seen", "unseen")


@dataclass
class EvalReport:
    mAP: float | None = None
    AP50: float | None = None
    AP75: float | None = None
    AP_n: float | None = None
    AP_m: float | None = None
    AP_f: float | None = None
    AP_seen: float | None = None
    AP_unseen: float | None = None
    mPE: float | None = None
    PE_n: float | None = None
    PE_m: float | None = None
    PE_f: float | None = None
    PE_seen: float | None = None
    PE_unseen: float | None = None
    precision: float | None = None
    recall: float | None = None
    f_score: float | None = None
    score_cutoff: float = 0.5
    strategy: str | None = None
    num_images: int = 0
    num_gt: int = 0
    num_detections: int = 0
    gt_counts: dict[str, int] = field(default_factory=dict)
    pe_counts: dict[str, int] = field(default_factory=dict)
    unmatched_gt: int = 0
    unlocalizable: int = 0
    rows: list[dict] = field(default_factory=list)

    SUMMARY_FIELDS = (
        "mAP", "AP50", "AP75", "AP_n", "AP_m", "AP_f", "AP_seen", "AP_unseen",
        "mPE", "PE_n", "PE_m", "PE_f", "PE_seen", "PE_unseen",
        "precision", "recall", "f_score",
    )

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.SUMMARY_FIELDS}
        d.update(
            score_cutoff=self.score_cutoff,
            strategy=self.strategy,
            num_images=self.num_images,
            num_gt=self.num_gt,
            num_detections=self.num_detections,
            gt_counts=dict(self.gt_counts),
            pe_counts=dict(self.pe_counts),
            unmatched_gt=self.unmatched_gt,
            unlocalizable=self.unlocalizable,
            rows=[dict(r) for r in self.rows],
        )
        return d


def _group_of(split: str | None) -> str | None:
    if split is None:
        return None
    if split.endswith("unseen"):
        return "unseen"
    if split.endswith("seen"):
        return "seen"
    return None


def evaluate(
    dets: Sequence[Sequence[Detection]],
    gts: Sequence[Sequence[GroundTruthBox]],
    *,
    principal: ImagePoint,
    model: FisheyeModel | None = None,
    strategy: AnchorStrategy = AnchorStrategy.RADIAL_NEAR_MIDPOINT,
    splits: Sequence[str | None] | None = None,
    score_cutoff: float = 0.5,
) -> EvalReport:
    """All detection metrics, plus positional error when ``model`` is given.

    ``splits`` carries one split tag per image; ``*-seen`` and ``*-unseen``
    tags feed the seen/unseen aggregates.
    """
    m = _Matcher(dets, gts, principal)
    n = len(m.dets)
    groups = [_group_of(s) for s in (splits or [None] * n)]
    members = {
        "all": list(range(n)),
        "seen": [k for k in range(n) if groups[k] == "seen"],
        "unseen": [k for k in range(n) if groups[k] == "unseen"],
    }
    has_world = all(g.world is not None for gs in m.gts for g in gs)

    rep = EvalReport(score_cutoff=score_cutoff, num_images=n)
    rep.num_gt = sum(len(g) for g in m.gts)
    rep.num_detections = sum(len(d) for d in m.dets)
    rep.mAP = m.mean_ap()
    rep.AP50 = m.ap(0.5)
    rep.AP75 = m.ap(0.75)
    rep.AP_seen = m.mean_ap(members["seen"]) if members["seen"] else None
    rep.AP_unseen = m.mean_ap(members["unseen"]) if members["unseen"] else None
    rep.precision, rep.recall, rep.f_score = precision_recall_f1(m.dets, m.gts, score_cutoff, 0.5, principal)

    pe_by_group: dict[str, PEStats] = {}
    if model is not None:
        if model.principal != principal:
            raise ValidationError("principal point differs from the calibration")
        rep.strategy = AnchorStrategy(strategy).value
        for grp, idx in members.items():
            lp = localization_pairs(m.dets, m.gts, model, strategy, images=idx)
            pe_by_group[grp] = PEStats.from_pairs(lp.pairs)
            if grp == "all":
                rep.unmatched_gt, rep.unlocalizable = lp.unmatched_gt, lp.unlocalizable
        allpe = pe_by_group["all"]
        rep.mPE = allpe.mean
        rep.PE_n, rep.PE_m, rep.PE_f = (allpe.per_bucket[b] for b in DistanceBucket)
        rep.PE_seen = pe_by_group["seen"].mean
        rep.PE_unseen = pe_by_group["unseen"].mean
        rep.pe_counts = {b.value: allpe.counts[b] for b in DistanceBucket}

    bucket_ap: dict[tuple[str, DistanceBucket], float | None] = {}
    if has_world:
        for grp, idx in members.items():
            if not idx:
                continue
            for b in DistanceBucket:
                bucket_ap[grp, b] = _mean_defined([m.bucket_ap(b, t, idx) for t in COCO_THRESHOLDS])
        rep.AP_n, rep.AP_m, rep.AP_f = (bucket_ap["all", b] for b in DistanceBucket)
        rep.gt_counts = {
            b.value: sum(DistanceBucket.of(g.world) is b for gs in m.gts for g in gs) for b in DistanceBucket
        }

    for grp in SPLIT_GROUPS:
        idx = members[grp]
        if not idx:
            continue
        pe = pe_by_group.get(grp)
        rep.rows.append({
            "split": grp, "bucket": "all",
            "AP": m.mean_ap(idx),
            "PE": pe.mean if pe else None,
            "num_gt": sum(len(m.gts[k]) for k in idx),
            "num_pe": pe.total if pe else 0,
        })
        if not has_world:
            continue
        for b in DistanceBucket:
            rep.rows.append({
                "split": grp, "bucket": b.value,
                "AP": bucket_ap[grp, b],
                "PE": pe.per_bucket[b] if pe else None,
                "num_gt": sum(DistanceBucket.of(g.world) is b for k in idx for g in m.gts[k]),
                "num_pe": pe.counts[b] if pe else 0,
            })
    return rep
