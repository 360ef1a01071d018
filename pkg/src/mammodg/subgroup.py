"""Per-attribute sensitivity at a single operating threshold, and box-size scatter data.

The operating threshold is chosen once per domain: the point of the FROC
curve with the largest FPPI not exceeding the target. Each ground-truth
mass is then detected or missed, and the masses are binned by status,
diameter, patient age and breast density.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NegativeValue, NoGroundTruth
from .froc import EvalConfig, froc_curve, match_manifest, operating_threshold
from .manifest import DENSITY_LEVELS, STATUS_LEVELS, BoundingBox, DomainManifest, box_to_mm

INF = math.inf
ATTRIBUTES = ("status", "size", "age", "density")


def bin_labels(edges: Sequence[float], unit: str = "") -> list[str]:
    """Labels in the style ``< 5 mm``, ``5–10 mm``, ``> 30 mm``."""
    suffix = f" {unit}" if unit else ""
    labels = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == 0 and len(labels) == 0 and hi != INF:
            labels.append(f"< {_fmt(hi)}{suffix}")
        elif hi == INF:
            labels.append(f"> {_fmt(lo)}{suffix}")
        else:
            labels.append(f"{_fmt(lo)}–{_fmt(hi)}{suffix}")
    return labels


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


@dataclass(frozen=True)
class SubgroupSpec:
    size_bins_mm: tuple[float, ...] = (0, 5, 10, 15, 20, 30, INF)
    age_bins: tuple[float, ...] = (0, 50, 60, 70, INF)
    density_levels: tuple[str, ...] = DENSITY_LEVELS
    status_levels: tuple[str, ...] = STATUS_LEVELS
    diameter: str = "max"

    def __post_init__(self):
        for name in ("size_bins_mm", "age_bins"):
            edges = getattr(self, name)
            if len(edges) < 2 or any(b <= a for a, b in zip(edges[:-1], edges[1:])):
                raise ValueError(f"{name} must be strictly increasing with at least two edges")
        if self.diameter not in ("max", "geometric_mean"):
            raise ValueError(f"diameter must be 'max' or 'geometric_mean', got {self.diameter!r}")

    @property
    def size_labels(self):
        return bin_labels(self.size_bins_mm, "mm")

    @property
    def age_labels(self):
        return bin_labels(self.age_bins)

    def levels(self, attribute):
        if attribute == "status":
            return list(self.status_levels)
        if attribute == "size":
            return self.size_labels
        if attribute == "age":
            return self.age_labels + ["unknown"]
        if attribute == "density":
            return list(self.density_levels)
        raise KeyError(attribute)


def mass_diameter_mm(box: BoundingBox, spacing, rule: str = "max") -> float:
    width_mm, height_mm = box_to_mm(box, spacing)
    if rule == "geometric_mean":
        return math.sqrt(width_mm * height_mm)
    return max(width_mm, height_mm)


def assign_bin(value: float, edges: Sequence[float], labels: Sequence[str] | None = None):
    """Left-closed, right-open bin ``[e_i, e_{i+1})`` containing ``value``.

    Returns the label when ``labels`` is given, otherwise the bin index.
    """
    if math.isnan(value):
        raise ValueError("cannot bin NaN")
    if value < 0:
        raise NegativeValue(f"value {value} is negative")
    if value < edges[0] or value >= edges[-1]:
        raise ValueError(f"value {value} outside bin range [{edges[0]}, {edges[-1]})")
    lo, hi = 0, len(edges) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if value >= edges[mid]:
            lo = mid
        else:
            hi = mid
    return labels[lo] if labels is not None else lo


class MassOutcome(NamedTuple):
    image_id: str
    gt_index: int
    box: BoundingBox
    width_mm: float
    height_mm: float
    diameter_mm: float
    status: str
    age: float | None
    density: str
    detected: bool


@dataclass
class SubgroupReport:
    rows: list  # (attribute, bin, n_masses, n_detected, sensitivity or None)
    threshold: float
    operating_fppi: float
    n_masses: int
    n_detected: int
    metadata: dict = field(default_factory=dict)

    @property
    def sensitivity(self) -> float:
        return self.n_detected / self.n_masses

    def table(self, attribute):
        return {r[1]: r for r in self.rows if r[0] == attribute}

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["attribute", "bin", "n", "detected", "sensitivity"])
            for attr, label, n, det, sens in self.rows:
                w.writerow([attr, label, n, det, "" if sens is None else repr(sens)])


def mass_outcomes(manifest: DomainManifest, predictions, config: EvalConfig = EvalConfig(), spec: SubgroupSpec = SubgroupSpec()):
    """Detected/missed status of every ground-truth mass at the operating threshold."""
    if manifest.n_ground_truth == 0:
        raise NoGroundTruth(f"manifest {manifest.name!r} has no ground-truth masses")
    curve = froc_curve(manifest, predictions, config)
    threshold = operating_threshold(curve, config.fppi_operating_point)
    i = int(np.searchsorted(curve.fppi, config.fppi_operating_point, side="right")) - 1
    operating_fppi = float(curve.fppi[max(i, 0)])
    matches = match_manifest(manifest, predictions, config.iou_threshold)
    outcomes = []
    for rec in manifest.images:
        match_scores = matches[rec.image_id].gt_match_score
        for j, ann in enumerate(rec.annotations):
            width_mm, height_mm = box_to_mm(ann.box, rec.pixel_spacing_mm)
            score = match_scores[j]
            outcomes.append(
                MassOutcome(
                    image_id=rec.image_id,
                    gt_index=j,
                    box=ann.box,
                    width_mm=width_mm,
                    height_mm=height_mm,
                    diameter_mm=mass_diameter_mm(ann.box, rec.pixel_spacing_mm, spec.diameter),
                    status=ann.attributes.status or "unknown",
                    age=ann.attributes.age,
                    density=ann.attributes.breast_density or "unknown",
                    detected=bool(not np.isnan(score) and score >= threshold),
                )
            )
    return outcomes, threshold, operating_fppi


def _bin_of(outcome: MassOutcome, attribute: str, spec: SubgroupSpec) -> str:
    if attribute == "status":
        return outcome.status if outcome.status in spec.status_levels else "unknown"
    if attribute == "size":
        return assign_bin(outcome.diameter_mm, spec.size_bins_mm, spec.size_labels)
    if attribute == "age":
        if outcome.age is None:
            return "unknown"
        return assign_bin(float(outcome.age), spec.age_bins, spec.age_labels)
    return outcome.density if outcome.density in spec.density_levels else "unknown"


def subgroup_sensitivity(manifest: DomainManifest, predictions, config: EvalConfig = EvalConfig(), spec: SubgroupSpec = SubgroupSpec()) -> SubgroupReport:
    outcomes, threshold, operating_fppi = mass_outcomes(manifest, predictions, config, spec)
    rows = []
    for attribute in ATTRIBUTES:
        counts = {level: [0, 0] for level in spec.levels(attribute)}
        for o in outcomes:
            c = counts.setdefault(_bin_of(o, attribute, spec), [0, 0])
            c[0] += 1
            c[1] += int(o.detected)
        for level, (n, det) in counts.items():
            rows.append((attribute, level, n, det, det / n if n else None))
    n_det = sum(o.detected for o in outcomes)
    return SubgroupReport(
        rows=rows,
        threshold=threshold,
        operating_fppi=operating_fppi,
        n_masses=len(outcomes),
        n_detected=n_det,
        metadata={
            "diameter_rule": spec.diameter,
            "bins": "left-closed, right-open",
            "threshold_rule": f"single global threshold at the largest FPPI <= {config.fppi_operating_point}",
        },
    )


class ScatterRecord(NamedTuple):
    image_id: str
    width_mm: float
    height_mm: float
    detected: bool


def scatter_data(manifest: DomainManifest, predictions, config: EvalConfig = EvalConfig()) -> list[ScatterRecord]:
    outcomes, _, _ = mass_outcomes(manifest, predictions, config)
    return [ScatterRecord(o.image_id, o.width_mm, o.height_mm, o.detected) for o in outcomes]


def write_scatter_csv(records: Sequence[ScatterRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "width_mm", "height_mm", "detected"])
        for r in records:
            w.writerow([r.image_id, repr(r.width_mm), repr(r.height_mm), "true" if r.detected else "false"])
