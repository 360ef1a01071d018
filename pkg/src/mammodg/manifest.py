"""Dataset manifests, prediction files, case-level splits and mm geometry.

A manifest is a JSON document describing one domain: every image with its
case id, pixel spacing, clinical attributes and ground-truth mass boxes.
Boxes are stored in pixels; :func:`box_to_mm` converts them.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import jsonschema
import numpy as np

from .errors import (
    BoxOutOfBounds,
    DegenerateStratum,
    DuplicateImageId,
    EmptyManifest,
    MalformedManifest,
    MalformedPredictions,
    MissingImageFile,
    ScoreOutOfRange,
    UnknownImageId,
)

STATUS_LEVELS = ("benign", "malignant", "unknown")
DENSITY_LEVELS = ("A", "B", "C", "D", "unknown")
VIEW_LEVELS = ("CC", "MLO", "unknown")
STRATIFIABLE = ("status", "conspicuity")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixels; ``(x, y)`` is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate in {self.as_list()}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box width and height must be positive, got w={self.w}, h={self.h}")

    @property
    def x2(self):
        return self.x + self.w

    @property
    def y2(self):
        return self.y + self.h

    @property
    def area(self):
        return self.w * self.h

    def as_list(self):
        return [self.x, self.y, self.w, self.h]

    def within(self, width, height, tol=1e-9):
        return (
            self.x >= -tol
            and self.y >= -tol
            and self.x2 <= width + tol
            and self.y2 <= height + tol
        )


@dataclass(frozen=True)
class MassAttributes:
    status: str = "unknown"
    conspicuity: str | None = None
    age: float | None = None
    breast_density: str = "unknown"


class Annotation(NamedTuple):
    box: BoundingBox
    attributes: MassAttributes


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    case_id: str
    domain: str
    path: str
    pixel_spacing_mm: tuple[float, float]
    view: str = "unknown"
    age: float | None = None
    breast_density: str = "unknown"
    annotations: tuple[Annotation, ...] = ()
    width: int | None = None
    height: int | None = None
    # unrecognised keys are carried through so rewritten manifests lose nothing
    extra: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class DomainManifest:
    name: str
    images: tuple[ImageRecord, ...]
    base_dir: Path = field(default=Path("."), compare=False)

    def __len__(self):
        return len(self.images)

    def __iter__(self):
        return iter(self.images)

    def by_id(self):
        return {rec.image_id: rec for rec in self.images}

    def image_path(self, rec: ImageRecord) -> Path:
        p = Path(rec.path)
        return p if p.is_absolute() else self.base_dir / p

    def case_ids(self):
        return sorted({rec.case_id for rec in self.images})

    @property
    def n_ground_truth(self):
        return sum(len(rec.annotations) for rec in self.images)


class Prediction(NamedTuple):
    image_id: str
    box: BoundingBox
    score: float


_BBOX = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["name", "images"],
    "properties": {
        "name": {"type": "string"},
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["image_id", "case_id", "path", "pixel_spacing_mm"],
                "properties": {
                    "image_id": {"type": "string", "minLength": 1},
                    "case_id": {"type": "string", "minLength": 1},
                    "domain": {"type": "string"},
                    "path": {"type": "string", "minLength": 1},
                    "pixel_spacing_mm": {
                        "type": "array",
                        "items": {"type": "number", "exclusiveMinimum": 0},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                    "view": {"enum": list(VIEW_LEVELS)},
                    "age": {"type": ["number", "null"], "exclusiveMinimum": 0, "exclusiveMaximum": 130},
                    "breast_density": {"enum": list(DENSITY_LEVELS) + [None]},
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                    "annotations": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["bbox"],
                            "properties": {
                                "bbox": _BBOX,
                                "status": {"enum": list(STATUS_LEVELS) + [None]},
                                "conspicuity": {"type": ["string", "null"]},
                            },
                        },
                    },
                },
            },
        },
    },
}

PREDICTIONS_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["image_id", "bbox", "score"],
        "properties": {
            "image_id": {"type": "string"},
            "bbox": _BBOX,
            "score": {"type": "number"},
        },
    },
}

_KNOWN_IMAGE_KEYS = set(MANIFEST_SCHEMA["properties"]["images"]["items"]["properties"])


def _pointer(error) -> str:
    return "/" + "/".join(str(p) for p in error.absolute_path)


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})") from exc


def manifest_from_dict(doc, base_dir=Path("."), validate_images=False) -> DomainManifest:
    """Build a :class:`DomainManifest` from an already-decoded JSON document."""
    validator = jsonschema.Draft202012Validator(MANIFEST_SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if err is not None:
        raise MalformedManifest(err.message, _pointer(err))

    name = doc["name"]
    seen = set()
    images = []
    for i, item in enumerate(doc["images"]):
        image_id = item["image_id"]
        if image_id in seen:
            raise DuplicateImageId(f"image_id {image_id!r} appears more than once")
        seen.add(image_id)
        age = item.get("age")
        density = item.get("breast_density") or "unknown"
        annotations = []
        for j, ann in enumerate(item.get("annotations", [])):
            try:
                box = BoundingBox(*(float(v) for v in ann["bbox"]))
            except ValueError as exc:
                raise MalformedManifest(
                    f"image {image_id!r}: {exc}", f"/images/{i}/annotations/{j}/bbox"
                ) from exc
            attrs = MassAttributes(
                status=ann.get("status") or "unknown",
                conspicuity=ann.get("conspicuity"),
                age=age,
                breast_density=density,
            )
            annotations.append(Annotation(box, attrs))
        rec = ImageRecord(
            image_id=image_id,
            case_id=item["case_id"],
            domain=item.get("domain", name),
            path=item["path"],
            pixel_spacing_mm=(float(item["pixel_spacing_mm"][0]), float(item["pixel_spacing_mm"][1])),
            view=item.get("view", "unknown"),
            age=age,
            breast_density=density,
            annotations=tuple(annotations),
            width=item.get("width"),
            height=item.get("height"),
            extra={k: v for k, v in item.items() if k not in _KNOWN_IMAGE_KEYS},
        )
        images.append(rec)

    manifest = DomainManifest(name=name, images=tuple(images), base_dir=Path(base_dir))
    if validate_images:
        manifest = validate_image_files(manifest)
    return manifest


def parse_manifest(path, validate_images=False) -> DomainManifest:
    """Parse and validate a manifest file.

    With ``validate_images`` every referenced image is opened to read its
    dimensions, and every annotation box is checked against them.
    """
    path = Path(path)
    doc = _load_json(path)
    return manifest_from_dict(doc, base_dir=path.parent, validate_images=validate_images)


def validate_image_files(manifest: DomainManifest) -> DomainManifest:
    from .imagecore.codecs import read_dimensions

    images = []
    for i, rec in enumerate(manifest.images):
        p = manifest.image_path(rec)
        if not p.is_file():
            raise MissingImageFile(f"image {rec.image_id!r}: file not found: {p}")
        width, height = read_dimensions(p)
        for j, ann in enumerate(rec.annotations):
            if not ann.box.within(width, height):
                raise MalformedManifest(
                    f"image {rec.image_id!r}: bbox {ann.box.as_list()} exceeds image bounds {width}x{height}",
                    f"/images/{i}/annotations/{j}/bbox",
                )
        images.append(replace(rec, width=width, height=height))
    return replace(manifest, images=tuple(images))


def record_dimensions(manifest: DomainManifest, rec: ImageRecord) -> tuple[int, int]:
    """Width and height of an image, read from the file when not recorded."""
    if rec.width is not None and rec.height is not None:
        return rec.width, rec.height
    from .imagecore.codecs import read_dimensions

    return read_dimensions(manifest.image_path(rec))


def _number(v):
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def manifest_to_dict(manifest: DomainManifest) -> dict:
    images = []
    for rec in manifest.images:
        item = {
            "image_id": rec.image_id,
            "case_id": rec.case_id,
            "path": rec.path,
            "pixel_spacing_mm": [rec.pixel_spacing_mm[0], rec.pixel_spacing_mm[1]],
        }
        if rec.domain != manifest.name:
            item["domain"] = rec.domain
        if rec.view != "unknown":
            item["view"] = rec.view
        if rec.age is not None:
            item["age"] = rec.age
        if rec.breast_density != "unknown":
            item["breast_density"] = rec.breast_density
        if rec.width is not None:
            item["width"] = rec.width
            item["height"] = rec.height
        anns = []
        for ann in rec.annotations:
            a = {"bbox": [_number(v) for v in ann.box.as_list()]}
            if ann.attributes.status != "unknown":
                a["status"] = ann.attributes.status
            if ann.attributes.conspicuity is not None:
                a["conspicuity"] = ann.attributes.conspicuity
            anns.append(a)
        item["annotations"] = anns
        item.update(rec.extra)
        images.append(item)
    return {"name": manifest.name, "images": images}


def write_manifest(manifest: DomainManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2)
        fh.write("\n")


def parse_predictions(path, manifest: DomainManifest) -> list[Prediction]:
    """Read a predictions file; order is preserved, unknown ids are an error."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedPredictions(f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})") from exc
    return predictions_from_list(doc, manifest)


def predictions_from_list(doc, manifest: DomainManifest) -> list[Prediction]:
    validator = jsonschema.Draft202012Validator(PREDICTIONS_SCHEMA)
    for err in validator.iter_errors(doc):
        raise MalformedPredictions(f"{_pointer(err)}: {err.message}")
    known = {rec.image_id for rec in manifest.images}
    preds = []
    for i, item in enumerate(doc):
        if item["image_id"] not in known:
            raise UnknownImageId(f"prediction {i}: image_id {item['image_id']!r} is not in manifest {manifest.name!r}")
        score = float(item["score"])
        if not 0.0 <= score <= 1.0:
            raise ScoreOutOfRange(f"prediction {i}: score {score} outside [0, 1]")
        try:
            box = BoundingBox(*(float(v) for v in item["bbox"]))
        except ValueError as exc:
            raise MalformedPredictions(f"prediction {i}: {exc}") from exc
        preds.append(Prediction(item["image_id"], box, score))
    return preds


def predictions_to_list(preds: Sequence[Prediction]) -> list[dict]:
    return [
        {"image_id": p.image_id, "bbox": [_number(v) for v in p.box.as_list()], "score": p.score}
        for p in preds
    ]


def box_to_mm(box: BoundingBox, spacing) -> tuple[float, float]:
    """Box width and height in millimetres.

    ``spacing`` is ``(row, column)`` spacing in mm/pixel, so the width scales
    with the column spacing and the height with the row spacing.
    """
    row, col = spacing
    return box.w * col, box.h * row


def check_box_in_image(box: BoundingBox, width, height):
    if not box.within(width, height):
        raise BoxOutOfBounds(f"box {box.as_list()} outside image {width}x{height}")


# -- case-level splitting -------------------------------------------------


def _case_stratum(records: Sequence[ImageRecord], stratify_on) -> tuple:
    anns = [a.attributes for rec in records for a in rec.annotations]
    key = []
    for attr in stratify_on:
        if attr == "status":
            statuses = {a.status for a in anns}
            if "malignant" in statuses:
                key.append("malignant")
            elif "benign" in statuses:
                key.append("benign")
            else:
                key.append("unknown")
        else:
            counts = Counter(a.conspicuity for a in anns if a.conspicuity is not None)
            if counts:
                # most common label; ties go to the lexicographically first
                key.append(min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0])
            else:
                key.append("unknown")
    return tuple(key)


def largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    """Integer allocation of ``n`` items that sums to ``n`` and stays within 1 of each target."""
    targets = [n * f for f in fractions]
    counts = [math.floor(t + 1e-9) for t in targets]
    remainders = [t - c for t, c in zip(targets, counts)]
    short = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-remainders[i], i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def split_cases(
    manifest: DomainManifest,
    fractions=(0.7, 0.1, 0.2),
    stratify_on: Sequence[str] = (),
    seed: int = 0,
) -> tuple[DomainManifest, DomainManifest, DomainManifest]:
    """Partition a manifest into train/val/test by case id.

    Case ids are sorted, grouped by stratum, shuffled per stratum with a
    generator seeded from ``seed``, and allocated to the splits by largest
    remainder, so every stratum is within one case of its target.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    bad = [a for a in stratify_on if a not in STRATIFIABLE]
    if bad:
        raise ValueError(f"cannot stratify on {bad}; choose from {STRATIFIABLE}")
    if not manifest.images:
        raise EmptyManifest(f"manifest {manifest.name!r} has no images")

    by_case: dict[str, list[ImageRecord]] = {}
    for rec in manifest.images:
        by_case.setdefault(rec.case_id, []).append(rec)

    strata: dict[tuple, list[str]] = {}
    for case_id in sorted(by_case):
        strata.setdefault(_case_stratum(by_case[case_id], stratify_on), []).append(case_id)

    rng = np.random.Generator(np.random.PCG64(seed))
    assignment: dict[str, int] = {}
    for key in sorted(strata):
        cases = strata[key]
        if len(cases) < len(fractions):
            warnings.warn(
                f"stratum {key} has {len(cases)} case(s), fewer than {len(fractions)} splits",
                DegenerateStratum,
                stacklevel=2,
            )
        order = rng.permutation(len(cases))
        counts = largest_remainder(len(cases), fractions)
        start = 0
        for split, count in enumerate(counts):
            for idx in order[start:start + count]:
                assignment[cases[idx]] = split
            start += count

    suffixes = ("train", "val", "test")
    return tuple(
        replace(
            manifest,
            name=f"{manifest.name}-{suffixes[s]}",
            images=tuple(rec for rec in manifest.images if assignment[rec.case_id] == s),
        )
        for s in range(3)
    )
