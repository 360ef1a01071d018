"""``mammodg`` command line: split, preprocess, harmonize, augment, evaluate,
subgroups, compare and plot.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Outputs are
staged in a temporary directory next to their destination and moved into
place only after the whole command succeeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import __version__
from .errors import AllBackground, DataError
from .manifest import (
    Annotation,
    BoundingBox,
    DomainManifest,
    parse_manifest,
    parse_predictions,
    split_cases,
    write_manifest,
)

log = logging.getLogger("mammodg")

THREADS_ENV = "MAMMODG_THREADS"
BUNDLED_MATRICES = ("detector_auc", "generalization_auc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# -- staging ---------------------------------------------------------------


class Staging:
    """Collects output files in a scratch directory; ``commit`` moves them into place."""

    def __init__(self, anchor: Path):
        anchor = Path(anchor).resolve()
        parent = anchor.parent
        parent.mkdir(parents=True, exist_ok=True)
        self.root = Path(tempfile.mkdtemp(prefix=f".{anchor.name}.", suffix=".partial", dir=parent))
        self.targets: list[tuple[Path, Path]] = []

    def file(self, final) -> Path:
        tmp = self.root / f"{len(self.targets):06d}_{Path(final).name}"
        self.targets.append((tmp, Path(final)))
        return tmp

    def commit(self):
        for tmp, final in self.targets:
            final.parent.mkdir(parents=True, exist_ok=True)
            try:
                os.replace(tmp, final)
            except OSError:
                shutil.move(str(tmp), str(final))
        self.discard()

    def discard(self):
        shutil.rmtree(self.root, ignore_errors=True)


def _echo(args, argv, stage: Staging, target: Path):
    options = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "options": json.loads(json.dumps(options, default=str)),
    }
    with open(stage.file(target), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _dir_echo(out_dir):
    return Path(out_dir) / "run_config.json"


def _file_echo(out):
    out = Path(out)
    return out.with_name(out.name + ".config.json")


# -- helpers ---------------------------------------------------------------


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


def safe_name(image_id: str) -> str:
    name = _UNSAFE.sub("_", image_id).strip("._") or "image"
    return name


def _unique_names(manifest: DomainManifest, ext: str) -> list[str]:
    seen: dict[str, int] = {}
    names = []
    for rec in manifest.images:
        base = safe_name(rec.image_id)
        n = seen.get(base.lower(), 0)
        seen[base.lower()] = n + 1
        names.append(f"{base}{ext}" if n == 0 else f"{base}-{n}{ext}")
    return names


def _pmap(fn, items, threads):
    """Ordered map; at most ``threads`` images are in flight."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def _round_box(box: BoundingBox, places=3) -> BoundingBox:
    return BoundingBox(round(box.x, places), round(box.y, places), round(box.w, places), round(box.h, places))


def _rebased(manifest: DomainManifest, out_dir: Path) -> DomainManifest:
    """Same records with image paths made relative to ``out_dir``."""
    out_dir = Path(out_dir).resolve()
    images = []
    for rec in manifest.images:
        src = manifest.image_path(rec).resolve()
        images.append(replace(rec, path=os.path.relpath(src, out_dir)))
    return replace(manifest, images=tuple(images), base_dir=out_dir)


def _with_transforms(rec, transforms, **changes):
    extra = dict(rec.extra)
    extra["transforms"] = list(extra.get("transforms", [])) + [t.to_dict() for t in transforms]
    return replace(rec, extra=extra, **changes)


def _threads(value):
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"invalid thread count {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("thread count must be >= 1")
    return n


def _default_threads():
    env = os.environ.get(THREADS_ENV)
    if not env:
        return 1
    try:
        return _threads(env)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"mammodg: error: {THREADS_ENV}: {exc}") from None


def _build(fn, *a, **kw):
    """Construct a config object, turning bad option values into usage errors."""
    try:
        return fn(*a, **kw)
    except ValueError as exc:
        raise UsageError(f"mammodg: error: {exc}") from None


def _eval_config(args):
    from .froc import EvalConfig

    return _build(
        EvalConfig,
        iou_threshold=args.iou,
        fppi_operating_point=args.fppi,
        fppi_auc_max=getattr(args, "fppi_max", 1.0),
        bootstrap_samples=getattr(args, "bootstrap", 0),
        bootstrap_seed=args.seed if getattr(args, "seed", None) is not None else 0,
        ci_level=getattr(args, "ci", 0.95),
    )


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


# -- commands --------------------------------------------------------------


def cmd_synth(args, argv):
    from .synthetic import write_fixture

    out = Path(args.out_dir)
    stage = Staging(out)
    try:
        scratch = stage.root / "fixture"
        write_fixture(scratch, seed=args.seed, n_cases=args.cases, fmt=args.format)
        for p in sorted(scratch.iterdir()):
            shutil.move(str(p), str(stage.file(out / p.name)))
        _echo(args, argv, stage, _dir_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(out / "manifest.json")


def cmd_split(args, argv):
    manifest = parse_manifest(args.manifest)
    fractions = tuple(args.fractions)
    parts = _build(split_cases, manifest, fractions, tuple(args.stratify), args.seed)
    out = Path(args.out_dir)
    stage = Staging(out)
    try:
        for part, name in zip(parts, ("train", "val", "test")):
            write_manifest(_rebased(part, out), stage.file(out / f"{name}.json"))
        _echo(args, argv, stage, _dir_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    for part in parts:
        print(f"{part.name}: {len(part.case_ids())} cases, {len(part)} images")


def cmd_preprocess(args, argv):
    import warnings

    from .imagecore import crop, full_box, load_image, resize_keep_aspect, save_image, segment_breast
    from .imagecore.geometry import resize_scale

    _build(resize_scale, 1, 1, args.max_long, args.max_short)
    manifest = parse_manifest(args.manifest, validate_images=True)
    out = Path(args.out_dir)
    names = _unique_names(manifest, ".png")
    stage = Staging(out)

    def one(item):
        rec, name = item
        img = load_image(manifest.image_path(rec))
        anns = rec.annotations
        chain = []
        if args.crop:
            try:
                box = segment_breast(img)
            except AllBackground:
                warnings.warn(f"{rec.image_id}: no foreground found; kept the full image", stacklevel=2)
                box = full_box(img)
            img, anns, t = crop(img, box, anns)
            chain.append(t)
        img, anns, t = resize_keep_aspect(img, args.max_long, args.max_short, anns)
        chain.append(t)
        save_image(img, stage.file(out / "images" / name))
        anns = tuple(Annotation(_round_box(a.box), a.attributes) for a in anns)
        spacing = t.apply_spacing(rec.pixel_spacing_mm)
        return _with_transforms(
            rec,
            chain,
            path=f"images/{name}",
            annotations=anns,
            width=img.width,
            height=img.height,
            pixel_spacing_mm=spacing,
        )

    try:
        records = _pmap(one, list(zip(manifest.images, names)), args.threads)
        write_manifest(replace(manifest, images=tuple(records)), stage.file(out / "manifest.json"))
        _echo(args, argv, stage, _dir_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(out / "manifest.json")


def cmd_harmonize_learn(args, argv):
    from .harmonize import FOREGROUND_RULES, image_landmarks, model_from_landmarks
    from .imagecore import load_image

    if args.foreground not in FOREGROUND_RULES:
        raise UsageError(f"mammodg: error: --foreground must be one of {FOREGROUND_RULES}")
    percentiles = tuple(args.percentiles)
    manifest = parse_manifest(args.manifest, validate_images=True)

    def one(rec):
        return image_landmarks(load_image(manifest.image_path(rec)), percentiles, args.foreground)

    per_image = _pmap(one, manifest.images, args.threads)
    model = model_from_landmarks(
        per_image, percentiles, tuple(args.scale), args.foreground, [r.image_id for r in manifest.images]
    )
    out = Path(args.out)
    stage = Staging(out)
    try:
        model.save(stage.file(out))
        _echo(args, argv, stage, _file_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(out)


def cmd_harmonize_apply(args, argv):
    from .harmonize import LandmarkModel, apply_standardization
    from .imagecore import load_image, save_image

    try:
        model = LandmarkModel.load(args.model)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.model}: not a landmark model ({exc})") from None
    manifest = parse_manifest(args.manifest, validate_images=True)
    out = Path(args.out_dir)
    names = _unique_names(manifest, ".png")
    stage = Staging(out)

    def one(item):
        rec, name = item
        img = apply_standardization(load_image(manifest.image_path(rec)), model)
        save_image(img, stage.file(out / "images" / name))
        extra = dict(rec.extra)
        extra["harmonization"] = {"model": str(args.model), "training_hash": model.training_hash}
        return replace(rec, path=f"images/{name}", width=img.width, height=img.height, extra=extra)

    try:
        records = _pmap(one, list(zip(manifest.images, names)), args.threads)
        write_manifest(replace(manifest, images=tuple(records)), stage.file(out / "manifest.json"))
        _echo(args, argv, stage, _dir_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(out / "manifest.json")


def cmd_augment(args, argv):
    from .augment import CutoutConfig, RandConvConfig, augment_image, image_rng
    from .imagecore import load_image, save_image

    cut = None
    if args.cutout:
        cut = _build(
            CutoutConfig,
            patch_sizes=tuple(args.patch_sizes),
            pixel_fraction=args.pixel_fraction,
            apply_probability=args.cutout_prob,
        )
    rc = None
    if args.randconv:
        rc = _build(
            RandConvConfig,
            kernel_sizes=tuple(args.kernel_sizes),
            alpha=args.alpha,
            mix=args.mix,
            apply_probability=args.randconv_prob,
        )
    for name in ("flip_h_prob", "flip_v_prob"):
        if not 0.0 <= getattr(args, name) <= 1.0:
            raise UsageError(f"mammodg: error: --{name.replace('_', '-')} must be in [0, 1]")

    manifest = parse_manifest(args.manifest, validate_images=True)
    out = Path(args.out_dir)
    names = _unique_names(manifest, ".png")
    stage = Staging(out)

    def one(item):
        rec, name = item
        rng = image_rng(args.seed, rec.image_id)
        img = load_image(manifest.image_path(rec))
        img, anns, t = augment_image(img, rec.annotations, rng, cut, rc, args.flip_h_prob, args.flip_v_prob)
        save_image(img, stage.file(out / "images" / name))
        anns = tuple(Annotation(_round_box(a.box), a.attributes) for a in anns)
        chain = [] if t.is_identity else [t]
        return _with_transforms(rec, chain, path=f"images/{name}", annotations=anns, width=img.width, height=img.height)

    try:
        records = _pmap(one, list(zip(manifest.images, names)), args.threads)
        write_manifest(replace(manifest, images=tuple(records)), stage.file(out / "manifest.json"))
        _echo(args, argv, stage, _dir_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(out / "manifest.json")


def cmd_evaluate(args, argv):
    from .froc import evaluate

    if args.bootstrap > 0 and args.seed is None:
        raise UsageError("mammodg evaluate: error: --seed is required when --bootstrap > 0")
    config = _eval_config(args)
    manifest = parse_manifest(args.manifest)
    predictions = parse_predictions(args.predictions, manifest)
    curve, report = evaluate(manifest, predictions, config, threads=args.threads)
    out = Path(args.out)
    stage = Staging(out)
    try:
        _write_json(stage.file(out), report)
        if args.curve:
            curve.to_csv(stage.file(Path(args.curve)))
        if args.plot:
            from .plotting import plot_froc

            csv_tmp = stage.root / "_curve.csv"
            curve.to_csv(csv_tmp)
            plot_froc([csv_tmp], stage.file(Path(args.plot)), labels=[manifest.name], f_max=config.fppi_auc_max)
        _echo(args, argv, stage, _file_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    ci = report["ci"]
    ci_text = f" ({ci[0]:.3f}, {ci[1]:.3f})" if ci else ""
    print(f"TPR@{config.fppi_operating_point:g} FPPI = {report['tpr_at_fppi']:.3f}{ci_text}, AUC = {report['auc']:.3f}")


def cmd_subgroups(args, argv):
    from .subgroup import SubgroupSpec, scatter_data, subgroup_sensitivity, write_scatter_csv

    config = _eval_config(args)
    spec = _build(SubgroupSpec, diameter=args.diameter)
    manifest = parse_manifest(args.manifest)
    predictions = parse_predictions(args.predictions, manifest)
    report = subgroup_sensitivity(manifest, predictions, config, spec)
    records = scatter_data(manifest, predictions, config)
    out = Path(args.out)
    stage = Staging(out)
    try:
        report.to_csv(stage.file(out))
        if args.scatter:
            write_scatter_csv(records, stage.file(Path(args.scatter)))
        if args.scatter_plot:
            from .plotting import plot_scatter

            plot_scatter(records, stage.file(Path(args.scatter_plot)), title=manifest.name)
        _echo(args, argv, stage, _file_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(f"threshold {report.threshold!r}: {report.n_detected}/{report.n_masses} masses detected")


def _score_source(value):
    if value.startswith("bundled:"):
        name = value.split(":", 1)[1]
        if name not in BUNDLED_MATRICES:
            raise UsageError(f"mammodg compare: error: unknown bundled matrix {name!r}; choose from {BUNDLED_MATRICES}")
        return resources.files("mammodg") / "data" / f"{name}.csv"
    return Path(value)


def cmd_compare(args, argv):
    from .errors import UnsupportedAlpha
    from .rankstats import compare_report, nemenyi_q, read_score_matrix

    try:
        nemenyi_q(2, args.alpha)
    except UnsupportedAlpha as exc:
        raise UsageError(f"mammodg compare: error: {exc}") from None
    source = _score_source(args.scores)
    with resources.as_file(source) as path:
        matrix = read_score_matrix(path)
    report = compare_report(matrix, alpha=args.alpha, places=args.places)
    out = Path(args.out)
    stage = Staging(out)
    try:
        _write_json(stage.file(out), report)
        _echo(args, argv, stage, _file_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(f"Friedman chi2 = {report['chi_square']:.4f}, df = {report['df']}, p = {report['p_value']:.4g}")


def cmd_plot(args, argv):
    from .froc import read_curve_csv
    from .plotting import plot_froc

    if args.labels and len(args.labels) != len(args.curves):
        raise UsageError("mammodg plot: error: --labels needs one label per curve")
    if not args.fppi_max > 0:
        raise UsageError("mammodg plot: error: --fppi-max must be > 0")
    for path in args.curves:
        read_curve_csv(path)
    out = Path(args.out)
    stage = Staging(out)
    try:
        plot_froc(args.curves, stage.file(out), labels=args.labels, f_max=args.fppi_max)
        _echo(args, argv, stage, _file_echo(out))
        stage.commit()
    except BaseException:
        stage.discard()
        raise
    print(out)


def cmd_rerun(args, argv):
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
        echoed = doc["argv"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.config}: not a run config ({exc})") from None
    if not echoed or echoed[0] == "rerun":
        raise DataError(f"{args.config}: config does not describe a runnable command")
    return run(echoed)


# -- parser ----------------------------------------------------------------


def _common(p, threads=False):
    if threads:
        p.add_argument("--threads", type=_threads, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")


def _eval_flags(p):
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--iou", type=float, default=0.10, help="IoU threshold for a true positive")
    p.add_argument("--fppi", type=float, default=0.75, help="operating point in false positives per image")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mammodg", description="Mammography mass-detection preprocessing and evaluation.")
    parser.add_argument("--version", action="version", version=f"mammodg {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a small synthetic domain")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--cases", type=int, default=4)
    p.add_argument("--format", choices=["png", "pgm"], default="png")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="case-level train/val/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--fractions", type=float, nargs=3, default=[0.7, 0.1, 0.2], metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--stratify", nargs="*", default=[], choices=["status", "conspicuity"])
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("preprocess", help="crop to the breast and resize")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--max-long", type=int, default=1333)
    p.add_argument("--max-short", type=int, default=800)
    p.add_argument("--no-crop", dest="crop", action="store_false", help="skip breast segmentation and cropping")
    _common(p, threads=True)
    p.set_defaults(func=cmd_preprocess)

    ph = sub.add_parser("harmonize", help="intensity scale standardization")
    hsub = ph.add_subparsers(dest="action", metavar="ACTION", parser_class=_Parser)
    hsub.required = True
    p = hsub.add_parser("learn", help="learn standard landmarks from a training manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--percentiles", type=float, nargs="+", default=[1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 99])
    p.add_argument("--scale", type=float, nargs=2, default=[0.0, 4095.0], metavar=("MIN", "MAX"))
    p.add_argument("--foreground", default="breast_mask", help="breast_mask or full_image")
    _common(p, threads=True)
    p.set_defaults(func=cmd_harmonize_learn)
    p = hsub.add_parser("apply", help="standardize every image of a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    _common(p, threads=True)
    p.set_defaults(func=cmd_harmonize_apply)

    p = sub.add_parser("augment", help="flips, RandConv and Cutout with per-image seeds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--cutout", action="store_true")
    p.add_argument("--patch-sizes", type=int, nargs="+", default=[1, 2])
    p.add_argument("--pixel-fraction", type=float, default=0.10)
    p.add_argument("--cutout-prob", type=float, default=0.5)
    p.add_argument("--randconv", action="store_true")
    p.add_argument("--kernel-sizes", type=int, nargs="+", default=[1, 3, 5])
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--mix", type=float, default=0.0)
    p.add_argument("--randconv-prob", type=float, default=0.5)
    p.add_argument("--flip-h-prob", type=float, default=0.5)
    p.add_argument("--flip-v-prob", type=float, default=0.5)
    _common(p, threads=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="FROC curve, TPR@FPPI, AUC and bootstrap CI")
    _eval_flags(p)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--curve", help="curve CSV (threshold,fppi,tpr)")
    p.add_argument("--plot", help="FROC figure (.svg, .png or .pdf)")
    p.add_argument("--fppi-max", type=float, default=1.0, help="upper FPPI limit of the AUC")
    p.add_argument("--bootstrap", type=int, default=2000, help="bootstrap replicates (0 disables the CI)")
    p.add_argument("--ci", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=None, help="bootstrap seed (required when --bootstrap > 0)")
    _common(p, threads=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("subgroups", help="per-attribute sensitivity at the operating point")
    _eval_flags(p)
    p.add_argument("--out", required=True, help="table CSV")
    p.add_argument("--scatter", help="box-size scatter CSV")
    p.add_argument("--scatter-plot", help="box-size scatter figure")
    p.add_argument("--diameter", default="max", choices=["max", "geometric_mean"])
    p.set_defaults(func=cmd_subgroups)

    p = sub.add_parser("compare", help="Friedman test and Nemenyi critical difference")
    p.add_argument("--scores", required=True, help="score matrix CSV, or bundled:NAME")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--places", type=int, default=2, help="decimals for rounded average scores")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="overlay FROC curve CSVs")
    p.add_argument("--curves", nargs="+", required=True)
    p.add_argument("--labels", nargs="+")
    p.add_argument("--fppi-max", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("rerun", help="repeat a run from its config echo")
    p.add_argument("config")
    p.set_defaults(func=cmd_rerun)
    return parser


def _setup_logging(level):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("mammodg: %(levelname)s: %(message)s"))
    for name in ("mammodg", "py.warnings"):
        lg = logging.getLogger(name)
        lg.handlers[:] = [handler]
        lg.setLevel(level)
        lg.propagate = False
    logging.captureWarnings(True)


def _oneline(exc) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) is None:
            args.threads = _default_threads()
        _setup_logging(args.log_level)
        rc = args.func(args, argv)
        return int(rc or 0)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0) if isinstance(exc.code, int) else 1
    except UsageError as exc:
        print(_oneline(exc), file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"mammodg: error: {type(exc).__name__}: {_oneline(exc)}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"mammodg: error: {_oneline(exc)}", file=sys.stderr)
        return 2
    finally:
        logging.captureWarnings(False)


def main():
    sys.exit(run())
