import json

import numpy as np
import pytest

from mammodg.synthetic import write_fixture


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240601))


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """The 8-image synthetic domain (4 cases x CC/MLO), written once per session."""
    out = tmp_path_factory.mktemp("fixture")
    write_fixture(out, seed=0)
    return out


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def simple_manifest_doc(n_images=2, boxes_per_image=1):
    images = []
    for i in range(n_images):
        images.append(
            {
                "image_id": f"img{i}",
                "case_id": f"case{i // 2}",
                "path": f"img{i}.png",
                "pixel_spacing_mm": [0.1, 0.07],
                "age": 55,
                "breast_density": "B",
                "annotations": [
                    {"bbox": [10 + 20 * j, 10, 8, 6], "status": "malignant" if j % 2 else "benign"}
                    for j in range(boxes_per_image)
                ],
            }
        )
    return {"name": "toy", "images": images}
