import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mammodg import __version__
from mammodg.cli import run, safe_name
from mammodg.imagecore import GrayImage, load_image, save_image

from oracles import auc_exact, froc_sweep, tpr_at_exact


def _tree(d: Path):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file() and p.name != "run_config.json"}


@pytest.fixture
def fx(tmp_path, fixture_dir):
    d = tmp_path / "fx"
    shutil.copytree(fixture_dir, d)
    return d


def test_version(capsys):
    assert run(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert run(["evaluate", "--help"]) == 0


def test_missing_predictions_is_usage_error(fx, tmp_path, capsys):
    rc = run(["evaluate", "--manifest", str(fx / "manifest.json"), "--out", str(tmp_path / "r.json")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "--predictions" in err and len(err.strip().splitlines()) == 1
    assert not (tmp_path / "r.json").exists()


def test_unknown_command_and_bad_values(fx, tmp_path):
    assert run(["frobnicate"]) == 1
    assert run(["evaluate", "--manifest", "m", "--predictions", "p", "--out", "o", "--iou", "1.5", "--bootstrap", "0"]) == 1
    assert run(["augment", "--manifest", str(fx / "manifest.json"), "--out-dir", str(tmp_path / "a")]) == 1  # no --seed
    assert run(["preprocess", "--manifest", str(fx / "manifest.json"), "--out-dir", str(tmp_path / "p"), "--threads", "0"]) == 1
    assert not (tmp_path / "a").exists() and not (tmp_path / "p").exists()


def test_bootstrap_requires_seed(fx, tmp_path, capsys):
    rc = run(["evaluate", "--manifest", str(fx / "manifest.json"), "--predictions", str(fx / "predictions.json"), "--out", str(tmp_path / "r.json")])
    assert rc == 1
    assert "--seed" in capsys.readouterr().err


def test_data_errors_exit_2(fx, tmp_path, capsys):
    assert run(["evaluate", "--manifest", str(tmp_path / "none.json"), "--predictions", "p", "--out", str(tmp_path / "r.json"), "--bootstrap", "0"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[{\"image_id\": \"nope\", \"bbox\": [0, 0, 1, 1], \"score\": 0.5}]")
    assert run(["evaluate", "--manifest", str(fx / "manifest.json"), "--predictions", str(bad), "--out", str(tmp_path / "r.json"), "--bootstrap", "0"]) == 2
    assert "UnknownImageId" in capsys.readouterr().err
    assert not (tmp_path / "r.json").exists()


def test_evaluate_golden_against_oracle(fx, tmp_path):
    out = tmp_path / "r.json"
    rc = run([
        "evaluate", "--manifest", str(fx / "manifest.json"), "--predictions", str(fx / "predictions.json"),
        "--out", str(out), "--curve", str(tmp_path / "c.csv"), "--plot", str(tmp_path / "f.svg"), "--seed", "0", "--bootstrap", "300",
    ])
    assert rc == 0
    rep = json.loads(out.read_text())
    man = json.loads((fx / "manifest.json").read_text())
    preds = json.loads((fx / "predictions.json").read_text())
    inst = [
        ([tuple(a["bbox"]) for a in img["annotations"]], [(tuple(p["bbox"]), p["score"]) for p in preds if p["image_id"] == img["image_id"]])
        for img in man["images"]
    ]
    n_gt = sum(len(g) for g, _ in inst)
    oracle = froc_sweep(inst)
    assert rep["tpr_at_fppi"] == float(tpr_at_exact(oracle, len(inst), n_gt, 0.75))
    assert rep["auc"] == float(auc_exact(oracle, len(inst), n_gt, 1.0))
    lo, hi = rep["ci"]
    assert 0 <= lo <= hi <= 1
    assert rep["n_images"] == 8 and rep["n_gt"] == n_gt
    assert (tmp_path / "c.csv").read_text().startswith("threshold,fppi,tpr\n")
    assert (tmp_path / "f.svg").exists()
    echo = json.loads((tmp_path / "r.json.config.json").read_text())
    assert echo["command"] == "evaluate" and echo["options"]["seed"] == 0


def test_evaluate_threads_bit_identical(fx, tmp_path):
    args = ["evaluate", "--manifest", str(fx / "manifest.json"), "--predictions", str(fx / "predictions.json"), "--seed", "5", "--bootstrap", "400"]
    assert run(args + ["--out", str(tmp_path / "a.json"), "--threads", "1"]) == 0
    assert run(args + ["--out", str(tmp_path / "b.json"), "--threads", "8"]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_preprocess_rewrites_manifest(fx, tmp_path):
    out = tmp_path / "pre"
    assert run(["preprocess", "--manifest", str(fx / "manifest.json"), "--out-dir", str(out), "--max-long", "300", "--max-short", "200"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    src = json.loads((fx / "manifest.json").read_text())
    for rec, orig in zip(man["images"], src["images"]):
        img = load_image(out / rec["path"])
        assert (img.width, img.height) == (rec["width"], rec["height"])
        assert max(img.width, img.height) <= 300 and min(img.width, img.height) <= 200
        crop_t, resize_t = rec["transforms"]
        s = resize_t["scale"]
        assert rec["pixel_spacing_mm"][0] == pytest.approx(orig["pixel_spacing_mm"][0] / s)
        for a, b in zip(rec["annotations"], orig["annotations"]):
            # mm size survives crop + resize
            assert a["bbox"][2] * rec["pixel_spacing_mm"][1] == pytest.approx(b["bbox"][2] * orig["pixel_spacing_mm"][1], abs=0.01)
            assert a["bbox"] == [round(v, 3) for v in a["bbox"]]
    assert (out / "run_config.json").exists()


def test_full_pipeline_and_reproducibility(fx, tmp_path):
    def pipeline(root, threads):
        root.mkdir()
        steps = [
            ["split", "--manifest", str(fx / "manifest.json"), "--out-dir", str(root / "split"), "--seed", "1", "--fractions", "0.5", "0.25", "0.25"],
            ["preprocess", "--manifest", str(fx / "manifest.json"), "--out-dir", str(root / "pre"), "--max-long", "400", "--max-short", "250"],
            ["harmonize", "learn", "--manifest", str(root / "split" / "train.json"), "--out", str(root / "model.json")],
            ["harmonize", "apply", "--model", str(root / "model.json"), "--manifest", str(root / "pre" / "manifest.json"), "--out-dir", str(root / "iss")],
            ["augment", "--manifest", str(root / "iss" / "manifest.json"), "--out-dir", str(root / "aug"), "--seed", "9", "--cutout", "--randconv"],
        ]
        for argv in steps:
            extra = ["--threads", str(threads)] if argv[0] in ("preprocess", "harmonize", "augment") else []
            assert run(argv + extra) == 0, argv
        return root

    a = pipeline(tmp_path / "a", 1)
    b = pipeline(tmp_path / "b", 8)
    for sub in ("pre", "iss", "aug"):
        ta, tb = _tree(a / sub), _tree(b / sub)
        assert ta.keys() == tb.keys()
        for k in ta:
            if k.endswith(".json"):
                assert json.loads(ta[k].decode().replace(str(a), "X").replace("/b/", "/a/")) == json.loads(tb[k].decode().replace(str(b), "X").replace("/b/", "/a/"))
            else:
                assert ta[k] == tb[k], k
    model = json.loads((a / "model.json").read_text())
    assert model["standard_landmarks"][0] == 0 and model["standard_landmarks"][-1] == 4095
    split = json.loads((a / "split" / "train.json").read_text())
    assert all((a / "split" / img["path"]).resolve().is_file() for img in split["images"])


def test_config_echo_rerun_reproduces(fx, tmp_path):
    out = tmp_path / "aug"
    assert run(["augment", "--manifest", str(fx / "manifest.json"), "--out-dir", str(out), "--seed", "4", "--cutout", "--flip-h-prob", "1"]) == 0
    first = _tree(out)
    for p in out.rglob("*.png"):
        p.unlink()
    assert run(["rerun", str(out / "run_config.json")]) == 0
    assert _tree(out) == first


def test_augment_seed_changes_output(fx, tmp_path):
    base = ["augment", "--manifest", str(fx / "manifest.json"), "--cutout", "--randconv", "--cutout-prob", "1", "--randconv-prob", "1"]
    assert run(base + ["--out-dir", str(tmp_path / "s1"), "--seed", "1"]) == 0
    assert run(base + ["--out-dir", str(tmp_path / "s2"), "--seed", "2"]) == 0
    assert _tree(tmp_path / "s1") != _tree(tmp_path / "s2")


def test_env_thread_default(fx, tmp_path, monkeypatch):
    monkeypatch.setenv("MAMMODG_THREADS", "3")
    assert run(["preprocess", "--manifest", str(fx / "manifest.json"), "--out-dir", str(tmp_path / "p")]) == 0
    echo = json.loads((tmp_path / "p" / "run_config.json").read_text())
    assert echo["options"]["threads"] == 3
    monkeypatch.setenv("MAMMODG_THREADS", "zero")
    assert run(["preprocess", "--manifest", str(fx / "manifest.json"), "--out-dir", str(tmp_path / "q")]) == 1


def test_failure_mid_stream_leaves_nothing(fx, tmp_path):
    # the last image is constant, so standardization fails after others were written
    man = json.loads((fx / "manifest.json").read_text())
    rec = man["images"][-1]
    save_image(GrayImage(np.full((320, 256), 1000, dtype=np.uint16)), fx / rec["path"])
    assert run(["harmonize", "learn", "--manifest", str(fx / "manifest.json"), "--out", str(tmp_path / "m.json")]) == 0
    out = tmp_path / "iss"
    assert run(["harmonize", "apply", "--model", str(tmp_path / "m.json"), "--manifest", str(fx / "manifest.json"), "--out-dir", str(out)]) == 2
    assert not out.exists()
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".partial")]


def test_compare_bundled(tmp_path):
    out = tmp_path / "s.json"
    assert run(["compare", "--scores", "bundled:detector_auc", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["df"] == 7 and "critical_difference" in rep["nemenyi"]
    assert run(["compare", "--scores", "bundled:nope", "--out", str(out)]) == 1
    assert run(["compare", "--scores", "bundled:detector_auc", "--alpha", "0.01", "--out", str(tmp_path / "t.json")]) == 1


def test_subgroups_and_plot(fx, tmp_path):
    rc = run([
        "subgroups", "--manifest", str(fx / "manifest.json"), "--predictions", str(fx / "predictions.json"),
        "--out", str(tmp_path / "t.csv"), "--scatter", str(tmp_path / "s.csv"), "--scatter-plot", str(tmp_path / "s.svg"),
    ])
    assert rc == 0
    n_gt = sum(len(i["annotations"]) for i in json.loads((fx / "manifest.json").read_text())["images"])
    assert len((tmp_path / "s.csv").read_text().splitlines()) == n_gt + 1
    (tmp_path / "c.csv").write_text("threshold,fppi,tpr\ninf,0.0,0.0\n0.5,0.25,0.5\n")
    assert run(["plot", "--curves", str(tmp_path / "c.csv"), str(tmp_path / "c.csv"), "--labels", "a", "b", "--out", str(tmp_path / "p.svg")]) == 0
    first = (tmp_path / "p.svg").read_bytes()
    assert run(["plot", "--curves", str(tmp_path / "c.csv"), str(tmp_path / "c.csv"), "--labels", "a", "b", "--out", str(tmp_path / "p.svg")]) == 0
    assert (tmp_path / "p.svg").read_bytes() == first
    (tmp_path / "bad.csv").write_text("nope\n")
    assert run(["plot", "--curves", str(tmp_path / "bad.csv"), "--out", str(tmp_path / "q.svg")]) == 2
    assert not (tmp_path / "q.svg").exists()


def test_safe_names():
    assert safe_name("../../etc/passwd") == "etc_passwd"
    assert safe_name("a b/c") == "a_b_c"
    assert safe_name("...") == "image"


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "mammodg", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and __version__ in r.stdout
