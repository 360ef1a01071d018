import csv
import math

import pytest

from mammodg.errors import NegativeValue
from mammodg.froc import EvalConfig
from mammodg.manifest import BoundingBox, Prediction, manifest_from_dict
from mammodg.subgroup import (
    SubgroupSpec,
    assign_bin,
    bin_labels,
    mass_diameter_mm,
    mass_outcomes,
    scatter_data,
    subgroup_sensitivity,
    write_scatter_csv,
)


def random_domain(rng, n_images=12):
    images, preds = [], []
    for i in range(n_images):
        spacing = float(rng.choice([0.05, 0.07, 0.1]))
        anns = []
        for _ in range(int(rng.integers(0, 4))):
            w, h = float(rng.integers(10, 400)), float(rng.integers(10, 400))
            anns.append({"bbox": [float(rng.integers(0, 100)), float(rng.integers(0, 100)), w, h], "status": str(rng.choice(["benign", "malignant", "unknown"]))})
        age = None if rng.random() < 0.2 else int(rng.integers(30, 90))
        images.append(
            {
                "image_id": f"i{i}",
                "case_id": f"c{i // 2}",
                "path": f"i{i}.png",
                "pixel_spacing_mm": [spacing, spacing],
                "age": age,
                "breast_density": str(rng.choice(["A", "B", "C", "D", "unknown"])),
                "annotations": anns,
            }
        )
        for a in anns:
            if rng.random() < 0.7:
                x, y, w, h = a["bbox"]
                preds.append(Prediction(f"i{i}", BoundingBox(x + 1, y, w, h), float(rng.random())))
        for _ in range(int(rng.integers(0, 3))):
            preds.append(Prediction(f"i{i}", BoundingBox(500, 500, 20, 20), float(rng.random())))
    if not any(img["annotations"] for img in images):
        images[0]["annotations"] = [{"bbox": [0, 0, 50, 50]}]
    return manifest_from_dict({"name": "r", "images": images}), preds


def test_bin_labels():
    assert bin_labels((0, 5, 10, 15, 20, 30, math.inf), "mm") == ["< 5 mm", "5–10 mm", "10–15 mm", "15–20 mm", "20–30 mm", "> 30 mm"]
    assert bin_labels((0, 50, 60, 70, math.inf)) == ["< 50", "50–60", "60–70", "> 70"]


def test_assign_bin_left_closed():
    edges = (0, 50, 60, 70, math.inf)
    assert assign_bin(49.999, edges) == 0
    assert assign_bin(50, edges) == 1
    assert assign_bin(60, edges) == 2
    assert assign_bin(1e9, edges) == 3
    assert assign_bin(0, edges) == 0
    with pytest.raises(NegativeValue):
        assign_bin(-1, edges)


def test_mass_diameter_rules():
    box = BoundingBox(0, 0, 100, 50)
    assert mass_diameter_mm(box, (0.1, 0.1)) == pytest.approx(10.0)
    assert mass_diameter_mm(box, (0.1, 0.1), "geometric_mean") == pytest.approx(math.sqrt(50))
    with pytest.raises(ValueError):
        SubgroupSpec(diameter="mean")


def test_hand_built_table():
    doc = {
        "name": "h",
        "images": [
            {"image_id": "a", "case_id": "a", "path": "a.png", "pixel_spacing_mm": [0.1, 0.1], "age": 45, "breast_density": "A",
             "annotations": [{"bbox": [0, 0, 40, 40], "status": "benign"}, {"bbox": [100, 100, 120, 120], "status": "malignant"}]},
            {"image_id": "b", "case_id": "b", "path": "b.png", "pixel_spacing_mm": [0.1, 0.1], "age": 65, "breast_density": "C",
             "annotations": [{"bbox": [0, 0, 250, 250], "status": "malignant"}]},
        ],
    }
    m = manifest_from_dict(doc)
    preds = [Prediction("a", BoundingBox(0, 0, 40, 40), 0.9), Prediction("b", BoundingBox(0, 0, 250, 250), 0.8)]
    rep = subgroup_sensitivity(m, preds)
    size = rep.table("size")
    assert size["< 5 mm"][2:4] == (1, 1)
    assert size["10–15 mm"][2:4] == (1, 0)
    assert size["20–30 mm"][2:4] == (1, 1)
    assert rep.table("status")["malignant"][2:4] == (2, 1)
    assert rep.table("age")["60–70"][2:4] == (1, 1)
    assert rep.table("density")["B"][4] is None
    assert rep.sensitivity == pytest.approx(2 / 3)


def test_single_global_threshold(rng):
    m, p = random_domain(rng)
    outcomes, thr, _ = mass_outcomes(m, p)
    rep = subgroup_sensitivity(m, p)
    assert rep.threshold == thr
    assert rep.n_detected == sum(o.detected for o in outcomes)


def test_conservation_randomized(rng):
    for _ in range(30):
        m, p = random_domain(rng)
        rep = subgroup_sensitivity(m, p, EvalConfig(fppi_operating_point=float(rng.choice([0.25, 0.75, 2.0]))))
        for attr in ("status", "size", "age", "density"):
            rows = [r for r in rep.rows if r[0] == attr]
            assert sum(r[2] for r in rows) == rep.n_masses == m.n_ground_truth
            weighted = sum(r[2] * r[4] for r in rows if r[4] is not None) / rep.n_masses
            assert abs(weighted - rep.sensitivity) <= 1e-12
        assert len(scatter_data(m, p)) == m.n_ground_truth


def test_csv_outputs(tmp_path, rng):
    m, p = random_domain(rng)
    rep = subgroup_sensitivity(m, p)
    rep.to_csv(tmp_path / "t.csv")
    with open(tmp_path / "t.csv", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["attribute", "bin", "n", "detected", "sensitivity"]
    assert len(rows) == 1 + len(rep.rows)
    write_scatter_csv(scatter_data(m, p), tmp_path / "s.csv")
    with open(tmp_path / "s.csv", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["image_id", "width_mm", "height_mm", "detected"]
    assert len(rows) - 1 == m.n_ground_truth
    assert {r[3] for r in rows[1:]} <= {"true", "false"}
