"""IoU matching, FROC curves, TPR@FPPI / AUC readouts and bootstrap CIs.

Greedy matching processes predictions in descending score order, so the
matching at any score threshold is a prefix of the full matching. The
whole curve therefore comes from one matching pass per image.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateResample, NoGroundTruth
from .manifest import BoundingBox, DomainManifest, Prediction

CONVENTIONS = {
    "matching": "greedy by descending score (stable ties); each prediction takes the unmatched "
    "ground truth with highest IoU >= threshold (lowest index on IoU ties); duplicates are FP",
    "tpr_at_fppi": "step function: TPR of the operating point with the largest FPPI <= target",
    "auc": "integral of the step function over [0, f_max], last TPR held to f_max",
    "fppi_denominator": "all images in the manifest, with or without masses",
    "ci": "percentile bootstrap over images (with their ground truths and predictions)",
}


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.10
    fppi_operating_point: float = 0.75
    fppi_auc_max: float = 1.0
    bootstrap_samples: int = 2000
    bootstrap_seed: int = 0
    ci_level: float = 0.95

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.fppi_operating_point < 0:
            raise ValueError("fppi_operating_point must be >= 0")
        if not self.fppi_auc_max > 0:
            raise ValueError("fppi_auc_max must be > 0")
        if self.bootstrap_samples < 0:
            raise ValueError("bootstrap_samples must be >= 0")
        if not 0 < self.ci_level < 1:
            raise ValueError(f"ci_level must be in (0, 1), got {self.ci_level}")

    def to_dict(self):
        return asdict(self)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(gts: Sequence[BoundingBox], preds: Sequence[BoundingBox]) -> np.ndarray:
    """``(len(preds), len(gts))`` IoU matrix."""
    if not gts or not preds:
        return np.zeros((len(preds), len(gts)))
    g = np.array([[b.x, b.y, b.x2, b.y2] for b in gts], dtype=np.float64)
    p = np.array([[b.x, b.y, b.x2, b.y2] for b in preds], dtype=np.float64)
    iw = np.minimum(p[:, None, 2], g[None, :, 2]) - np.maximum(p[:, None, 0], g[None, :, 0])
    ih = np.minimum(p[:, None, 3], g[None, :, 3]) - np.maximum(p[:, None, 1], g[None, :, 1])
    overlap = (iw > 0) & (ih > 0)
    inter = np.where(overlap, iw * ih, 0.0)
    area_g = (g[:, 2] - g[:, 0]) * (g[:, 3] - g[:, 1])
    area_p = (p[:, 2] - p[:, 0]) * (p[:, 3] - p[:, 1])
    union = area_p[:, None] + area_g[None, :] - inter
    return np.where(overlap, inter / union, 0.0)


@dataclass
class MatchResult:
    """Matching of one image.

    ``entries`` follows processing order (descending score); each entry is
    ``(prediction index, "TP" | "FP", matched gt index or None, IoU)``.
    ``gt_match_score`` holds, per ground truth, the score of the prediction
    that matched it (``nan`` when unmatched).
    """

    entries: list = field(default_factory=list)
    unmatched_gt: list = field(default_factory=list)
    gt_match_score: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_tp(self):
        return sum(1 for e in self.entries if e[1] == "TP")

    @property
    def n_fp(self):
        return sum(1 for e in self.entries if e[1] == "FP")


def _scored(preds):
    boxes, scores = [], []
    for p in preds:
        if isinstance(p, Prediction):
            boxes.append(p.box)
            scores.append(p.score)
        else:
            box, score = p
            boxes.append(box)
            scores.append(float(score))
    return boxes, scores


def match_image(gts: Sequence[BoundingBox], preds, iou_threshold=0.10) -> MatchResult:
    """Greedy TP/FP assignment for one image.

    ``preds`` holds :class:`Prediction` objects or ``(box, score)`` pairs.
    """
    boxes, scores = _scored(preds)
    order = sorted(range(len(boxes)), key=lambda i: -scores[i])
    ious = iou_matrix(list(gts), boxes)
    matched = np.zeros(len(gts), dtype=bool)
    gt_score = np.full(len(gts), np.nan)
    entries = []
    for i in order:
        best, best_iou = None, -1.0
        for j in range(len(gts)):
            v = ious[i, j]
            if not matched[j] and v >= iou_threshold and v > best_iou:
                best, best_iou = j, v
        if best is None:
            row = ious[i]
            entries.append((i, "FP", None, float(row.max()) if row.size else 0.0))
        else:
            matched[best] = True
            gt_score[best] = scores[i]
            entries.append((i, "TP", best, float(best_iou)))
    unmatched = [j for j in range(len(gts)) if not matched[j]]
    return MatchResult(entries=entries, unmatched_gt=unmatched, gt_match_score=gt_score)


def group_predictions(manifest: DomainManifest, predictions: Sequence[Prediction]) -> dict[str, list[Prediction]]:
    grouped = {rec.image_id: [] for rec in manifest.images}
    for p in predictions:
        grouped[p.image_id].append(p)
    return grouped


def match_manifest(manifest: DomainManifest, predictions, iou_threshold=0.10) -> dict[str, MatchResult]:
    grouped = group_predictions(manifest, predictions)
    return {
        rec.image_id: match_image([a.box for a in rec.annotations], grouped[rec.image_id], iou_threshold)
        for rec in manifest.images
    }


@dataclass(frozen=True, eq=False)
class FrocCurve:
    """Operating points sorted by descending threshold.

    The first point is the sentinel above every score (threshold ``inf``).
    """

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    n_images: int
    n_ground_truth: int

    @property
    def fppi(self) -> np.ndarray:
        return self.fp / self.n_images

    @property
    def tpr(self) -> np.ndarray:
        return self.tp / self.n_ground_truth

    def __len__(self):
        return len(self.thresholds)

    def points(self):
        return list(zip(self.thresholds.tolist(), self.fppi.tolist(), self.tpr.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("threshold,fppi,tpr\n")
            for t, f, r in self.points():
                fh.write(f"{t!r},{f!r},{r!r}\n")


@dataclass(frozen=True)
class _PerPrediction:
    """Flattened full-matching outcome used to build curves."""

    image_index: np.ndarray  # per prediction
    scores: np.ndarray
    is_tp: np.ndarray
    gt_per_image: np.ndarray  # per image
    # grouping of predictions sorted by score, descending
    order: np.ndarray
    group_ends: np.ndarray
    group_scores: np.ndarray


def _flatten(manifest: DomainManifest, predictions, iou_threshold) -> _PerPrediction:
    matches = match_manifest(manifest, predictions, iou_threshold)
    grouped = group_predictions(manifest, predictions)
    img_idx, scores, tps = [], [], []
    for i, rec in enumerate(manifest.images):
        preds = grouped[rec.image_id]
        for pi, disp, _, _ in matches[rec.image_id].entries:
            img_idx.append(i)
            scores.append(preds[pi].score)
            tps.append(disp == "TP")
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    if sorted_scores.size:
        ends = np.flatnonzero(np.r_[sorted_scores[1:] != sorted_scores[:-1], True])
    else:
        ends = np.zeros(0, dtype=np.intp)
    return _PerPrediction(
        image_index=np.asarray(img_idx, dtype=np.intp),
        scores=scores,
        is_tp=np.asarray(tps, dtype=bool),
        gt_per_image=np.array([len(rec.annotations) for rec in manifest.images], dtype=np.int64),
        order=order,
        group_ends=ends,
        group_scores=sorted_scores[ends],
    )


def _curve_from_flat(flat: _PerPrediction, weights=None) -> FrocCurve:
    n_images = len(flat.gt_per_image) if weights is None else int(weights.sum())
    if weights is None:
        w = np.ones(flat.scores.size, dtype=np.int64)
        n_gt = int(flat.gt_per_image.sum())
    else:
        w = weights[flat.image_index]
        n_gt = int((weights * flat.gt_per_image).sum())
    tp_w = np.where(flat.is_tp, w, 0)[flat.order]
    fp_w = np.where(flat.is_tp, 0, w)[flat.order]
    tp = np.r_[0, np.cumsum(tp_w)[flat.group_ends]].astype(np.int64)
    fp = np.r_[0, np.cumsum(fp_w)[flat.group_ends]].astype(np.int64)
    thresholds = np.r_[np.inf, flat.group_scores]
    return FrocCurve(thresholds, tp, fp, n_images, n_gt)


def froc_curve(manifest: DomainManifest, predictions, config: EvalConfig = EvalConfig()) -> FrocCurve:
    """FROC operating points swept over every distinct prediction score."""
    if manifest.n_ground_truth == 0:
        raise NoGroundTruth(f"manifest {manifest.name!r} has no ground-truth masses; TPR is undefined")
    return _curve_from_flat(_flatten(manifest, predictions, config.iou_threshold))


def tpr_at_fppi(curve: FrocCurve, fppi: float = 0.75) -> float:
    i = int(np.searchsorted(curve.fppi, fppi, side="right")) - 1
    if i < 0:
        return 0.0
    return float(curve.tpr[i])


def auc_fppi(curve: FrocCurve, f_max: float = 1.0) -> float:
    """Area under the TPR step function for FPPI in ``[0, f_max]``.

    Evaluated in exact rational arithmetic from the integer counts.
    """
    fmax = Fraction(f_max)
    total = Fraction(0)
    # best TP at each distinct FP count; fp is non-decreasing along the curve
    steps: dict[int, int] = {}
    for fp, tp in zip(curve.fp.tolist(), curve.tp.tolist()):
        steps[fp] = max(tp, steps.get(fp, 0))
    fps = sorted(steps)
    for idx, fp in enumerate(fps):
        start = Fraction(fp, curve.n_images)
        if start >= fmax:
            break
        end = Fraction(fps[idx + 1], curve.n_images) if idx + 1 < len(fps) else fmax
        end = min(end, fmax)
        total += Fraction(steps[fp], curve.n_ground_truth) * (end - start)
    return float(total)


def _statistic(name_or_fn, config: EvalConfig) -> Callable[[FrocCurve], float]:
    if callable(name_or_fn):
        return name_or_fn
    if name_or_fn in ("tpr", "tpr_at_fppi"):
        return lambda c: tpr_at_fppi(c, config.fppi_operating_point)
    if name_or_fn == "auc":
        return lambda c: auc_fppi(c, config.fppi_auc_max)
    raise ValueError(f"unknown statistic {name_or_fn!r}")


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


@dataclass(frozen=True)
class BootstrapResult:
    lower: float
    upper: float
    n_replicates: int
    n_skipped: int

    def __iter__(self):
        return iter((self.lower, self.upper))


def bootstrap_replicates(manifest, predictions, config: EvalConfig, statistic="tpr", threads: int = 1) -> tuple[np.ndarray, int]:
    """Statistic values over resampled image sets, plus the number of skipped replicates.

    Replicate ``r`` draws from a stream keyed by ``(bootstrap_seed, r)``, so
    the result is identical for any ``threads``.
    """
    if config.bootstrap_samples < 1:
        raise ValueError("bootstrap_samples must be >= 1")
    flat = _flatten(manifest, predictions, config.iou_threshold)
    n = len(flat.gt_per_image)
    fast = statistic in ("tpr", "tpr_at_fppi")
    fn = _statistic(statistic, config)

    def one(r):
        rng = replicate_rng(config.bootstrap_seed, r)
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n)
        n_gt = int((weights * flat.gt_per_image).sum())
        if n_gt == 0:
            return None
        if not fast:
            return fn(_curve_from_flat(flat, weights))
        w = weights[flat.image_index]
        tp_c = np.cumsum(np.where(flat.is_tp, w, 0)[flat.order])[flat.group_ends]
        fp_c = np.cumsum(np.where(flat.is_tp, 0, w)[flat.order])[flat.group_ends]
        k = int(np.searchsorted(fp_c / n, config.fppi_operating_point, side="right"))
        return tp_c[k - 1] / n_gt if k > 0 else 0.0

    indices = range(config.bootstrap_samples)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, indices, chunksize=64))
    else:
        results = [one(r) for r in indices]
    values = [v for v in results if v is not None]
    skipped = len(results) - len(values)
    if skipped * 2 > config.bootstrap_samples:
        raise DegenerateResample(
            f"{skipped} of {config.bootstrap_samples} bootstrap replicates had no ground truth"
        )
    return np.asarray(values, dtype=np.float64), skipped


def bootstrap_ci(manifest, predictions, config: EvalConfig = EvalConfig(), statistic="tpr", threads: int = 1) -> BootstrapResult:
    """Percentile bootstrap interval over images, deterministic in ``bootstrap_seed``."""
    values, skipped = bootstrap_replicates(manifest, predictions, config, statistic, threads)
    tail = (1.0 - config.ci_level) / 2.0
    lo, hi = np.quantile(values, [tail, 1.0 - tail])
    return BootstrapResult(float(lo), float(hi), len(values), skipped)


def evaluate(manifest: DomainManifest, predictions, config: EvalConfig = EvalConfig(), threads: int = 1):
    """Curve plus the report dictionary written by the ``evaluate`` command."""
    curve = froc_curve(manifest, predictions, config)
    report = {
        "tpr_at_fppi": tpr_at_fppi(curve, config.fppi_operating_point),
        "fppi_operating_point": config.fppi_operating_point,
        "auc": auc_fppi(curve, config.fppi_auc_max),
        "ci": None,
        "n_images": curve.n_images,
        "n_gt": curve.n_ground_truth,
        "n_predictions": len(predictions),
        "config": config.to_dict(),
        "conventions": dict(CONVENTIONS),
    }
    if config.bootstrap_samples > 0:
        boot = bootstrap_ci(manifest, predictions, config, threads=threads)
        report["ci"] = [boot.lower, boot.upper]
        report["bootstrap_skipped"] = boot.n_skipped
    return curve, report


def operating_threshold(curve: FrocCurve, fppi: float) -> float:
    """Score threshold of the point with the largest FPPI <= ``fppi`` (``inf`` if only the sentinel)."""
    i = int(np.searchsorted(curve.fppi, fppi, side="right")) - 1
    return float(curve.thresholds[max(i, 0)])


def read_curve_csv(path):
    """Parse a ``threshold,fppi,tpr`` CSV into three float arrays."""
    import csv

    from .errors import MalformedCurveFile

    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise MalformedCurveFile(f"{path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["threshold", "fppi", "tpr"]:
        raise MalformedCurveFile(f"{path}: header must be 'threshold,fppi,tpr'")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise MalformedCurveFile(f"{path}:{n}: expected 3 columns, got {len(row)}")
        try:
            t, f, r = (float(v) for v in row)
        except ValueError:
            raise MalformedCurveFile(f"{path}:{n}: non-numeric value in {row}") from None
        if math.isnan(f) or math.isnan(r) or f < 0 or not 0 <= r <= 1:
            raise MalformedCurveFile(f"{path}:{n}: fppi must be >= 0 and tpr in [0, 1]")
        out.append((t, f, r))
    if not out:
        raise MalformedCurveFile(f"{path}: no operating points")
    arr = np.array(out)
    return arr[:, 0], arr[:, 1], arr[:, 2]
