"""Batch command line: keyframes, features, train, eval, bench, pipeline.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.

Options may also come from ``--config FILE`` (JSON).  Top-level keys apply
to every subcommand, a section named after the subcommand applies to that
one only, and flags given on the command line override both.  Keys use the
option names with ``-`` replaced by ``_`` (e.g. ``"dedup_threshold": 0.1``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import hog as hog_mod
from . import kaze as kaze_mod
from . import lbp as lbp_mod
from .bench import bench_pipeline, format_table, save_report
from .errors import DataError, DeepfuseError, WorkloadFailure
from .fuse import (SCHEMES, ExtractorConfig, PrepareSummary, append_features, corpus_files,
                   export_features, import_features, preprocess, prepare_dataset)
from .imgcore import GrayImage, load_image, save_pgm
from .keyframe import FrameSequence, KeyframePolicy, SelectionLog, select_keyframes
from .learn import KINDS, SplitSpec, evaluate, load_model, save_model, split_indices, train

log = logging.getLogger("deepfuse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


# -- option groups ------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="JSON file with option values (flags override it)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for every random choice")
    p.add_argument("--threads", type=int, default=1, help="worker cap for extraction and forests")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_extractor(p):
    g = p.add_argument_group("feature extraction")
    g.add_argument("--scheme", choices=SCHEMES, default="hog+kaze")
    g.add_argument("--size", type=int, nargs=2, metavar=("W", "H"), default=[28, 28])
    g.add_argument("--log-scale", action="store_true", help="apply 255*ln(1+v)/ln(256) after resizing")
    g.add_argument("--lbp-preset", choices=sorted(lbp_mod.PRESETS), default="p12-r2")
    g.add_argument("--lbp-P", type=int, help="override the preset neighbour count")
    g.add_argument("--lbp-R", type=float, help="override the preset radius")
    g.add_argument("--lbp-full", action="store_true", help="2^P bins instead of uniform patterns")
    g.add_argument("--lbp-bands", type=int, default=2)
    g.add_argument("--hog-preset", choices=sorted(hog_mod.PRESETS), default="default")
    g.add_argument("--hog-cell", type=int, help="cell size in pixels")
    g.add_argument("--hog-bins", type=int, help="orientation bins")
    g.add_argument("--hog-sobel", action="store_true", help="Sobel instead of central differences")
    g.add_argument("--kaze-preset", choices=sorted(kaze_mod.PRESETS), default="default")
    g.add_argument("--kaze-m", type=int, help="vector length m (multiple of 64)")
    g.add_argument("--kaze-threshold", type=float, help="detector response threshold")
    g.add_argument("--kaze-full-res", action="store_true",
                   help="run KAZE on the source resolution instead of the resized frame")


def extractor_config(a) -> ExtractorConfig:
    lbp = lbp_mod.PRESETS[a.lbp_preset]
    lbp = replace(lbp, P=a.lbp_P or lbp.P, R=a.lbp_R or lbp.R, uniform=not a.lbp_full,
                  bands=a.lbp_bands)
    hog = hog_mod.PRESETS[a.hog_preset]
    hog = replace(hog, cell_size=a.hog_cell or hog.cell_size, bin_count=a.hog_bins or hog.bin_count,
                  gradient="sobel" if a.hog_sobel else hog.gradient)
    kz = kaze_mod.PRESETS[a.kaze_preset]
    kz = replace(kz, m=a.kaze_m or kz.m, detector_threshold=a.kaze_threshold or kz.detector_threshold)
    return ExtractorConfig(scheme=a.scheme, size=tuple(a.size), log_scale=a.log_scale,
                           lbp=lbp, hog=hog, kaze=kz, kaze_full_resolution=a.kaze_full_res)


def _add_learner(p):
    g = p.add_argument_group("classifier")
    g.add_argument("--classifier", default="svc",
                   help=f"one of {', '.join(KINDS)} (aliases: rf, et, gb, xgb, svm)")
    g.add_argument("--hp", action="append", default=[], metavar="KEY=VALUE",
                   help="hyperparameter override, e.g. n_trees=200 or C=10 (repeatable)")
    g.add_argument("--standardize", action="store_true",
                   help="z-score features using training-split statistics")
    g.add_argument("--train-fraction", type=float, default=0.8)
    g.add_argument("--split-seed", type=int, help="defaults to --seed")


def hyperparameters(a) -> dict:
    out = {}
    for item in a.hp:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--hp expects KEY=VALUE, got {item!r}")
        try:
            out[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            out[key.strip()] = value
    return out


def split_spec(a) -> SplitSpec:
    return SplitSpec(a.train_fraction, a.seed if a.split_seed is None else a.split_seed)


def _write_config(path, a, **extra):
    cfg = {k: v for k, v in vars(a).items() if k not in ("func", "config")}
    cfg.update(extra)
    Path(path).write_text(json.dumps(cfg, indent=1, sort_keys=True, default=str) + "\n")


def _ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _config_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".config.json")


# -- subcommands ----------------------------------------------------------------

def cmd_keyframes(a):
    if bool(a.frames) == bool(a.manifest):
        raise UsageError("give exactly one of --frames DIR or --manifest FILE")
    seq = (FrameSequence.from_directory(a.frames, a.fps) if a.frames
           else FrameSequence.from_manifest(a.manifest, a.fps))
    if len(seq) == 0:
        raise DataError(f"no frames found in {a.frames or a.manifest}")
    policy = KeyframePolicy(interval=a.interval, skip_head=a.skip_head, skip_tail=a.skip_tail,
                            skip_enabled=not a.no_skip, skip_auto_disable=a.skip_auto,
                            dedup_threshold=a.dedup_threshold)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    sel = SelectionLog()
    kept = select_keyframes(seq, policy, log_to=sel)
    for i, img in enumerate(kept):
        save_pgm(img, out / f"keyframe_{i:05d}.pgm")
    (out / "selection.tsv").write_text(sel.to_tsv())
    _write_config(out / "effective_config.json", a, policy=asdict(policy))
    print(f"{len(seq)} frames, {len(kept)} keyframes written to {out}")
    return EXIT_OK


def _dump_debug(root, cfg, dump_dir, limit):
    dump = Path(dump_dir)
    dump.mkdir(parents=True, exist_ok=True)
    for rel, _label in corpus_files(root)[:limit]:
        stem = rel.replace("/", "_").rsplit(".", 1)[0]
        small = preprocess(load_image(Path(root) / rel), cfg)
        save_pgm(small, dump / f"{stem}_input.pgm")
        if "lbp" in cfg.components:
            codes = lbp_mod.lbp_code_map(small, cfg.lbp).codes
            top = max(int(codes.max()), 1)
            save_pgm(GrayImage(codes.clip(0) * (255.0 / top)), dump / f"{stem}_lbp.pgm")
        if "hog" in cfg.components:
            field = hog_mod.compute_gradients(small, cfg.hog)
            save_pgm(hog_mod.magnitude_image(field), dump / f"{stem}_hogmag.pgm")
        if "kaze" in cfg.components:
            space = kaze_mod.build_scale_space(small, cfg.kaze)
            for i in range(len(space.levels)):
                save_pgm(GrayImage(space.intensity(i).clip(0, 255)), dump / f"{stem}_kaze{i}.pgm")


def cmd_features(a):
    cfg = extractor_config(a)
    summary = PrepareSummary()
    ds = prepare_dataset(a.corpus, cfg, threads=a.threads, summary=summary)
    _ensure_parent(a.out)
    if a.append and Path(a.out).exists():
        append_features(a.out, ds)
    else:
        export_features(ds, a.out)
    _write_config(_config_path(a.out), a, extractor=cfg.to_dict(), fingerprint=cfg.fingerprint())
    if a.dump_dir:
        _dump_debug(a.corpus, cfg, a.dump_dir, a.dump_limit)
    print(f"{len(ds)} rows x {ds.n_features} columns ({cfg.scheme}, fingerprint "
          f"{ds.param_fingerprint}) -> {a.out}")
    if summary.skipped:
        print(f"skipped {len(summary.skipped)} undecodable file(s):")
        for rel, why in summary.skipped:
            print(f"  {rel}: {why}")
    return EXIT_OK


def cmd_train(a):
    ds = import_features(a.features)
    spec = split_spec(a)
    tr, _te = split_indices(ds.y, spec)
    model = train(a.classifier, ds.subset(tr), hyperparameters(a), a.seed,
                  standardize=a.standardize, threads=a.threads)
    model.training_meta["split"] = asdict(spec)
    model.training_meta["features"] = str(a.features)
    _ensure_parent(a.model)
    save_model(model, a.model)
    _write_config(_config_path(a.model), a, hyperparameters=model.hyperparameters,
                  fingerprint=model.param_fingerprint)
    print(f"trained {model.kind} on {len(tr)} rows x {model.feature_dims} features "
          f"in {model.training_meta['wall_time_s']:.3f} s -> {a.model}")
    if model.training_meta.get("converged") is False:
        print("warning: SMO hit its iteration cap; the best-so-far model was saved")
    return EXIT_OK


def cmd_eval(a):
    model = load_model(a.model)
    ds = import_features(a.features)
    if a.all:
        test = ds
    else:
        split = model.training_meta.get("split")
        spec = SplitSpec(**split) if split and a.train_fraction is None else SplitSpec(
            a.train_fraction or 0.8, a.seed if a.split_seed is None else a.split_seed)
        _tr, te = split_indices(ds.y, spec)
        test = ds.subset(te)
    report = evaluate(model, test)
    print(report.as_text())
    if a.out:
        _ensure_parent(a.out).write_text(json.dumps({"model": str(a.model), "features": str(a.features),
                                           "fingerprint": model.param_fingerprint,
                                           **report.to_dict()}, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_bench(a):
    cfg = extractor_config(a)
    res = bench_pipeline(a.corpus, cfg, a.classifier, a.runs, split_spec(a), a.seed,
                         hyperparameters(a), a.standardize, a.threads)
    if a.out:
        save_report(res, _ensure_parent(a.out))
        _write_config(_config_path(a.out), a, extractor=cfg.to_dict())
    if a.table or not a.out:
        print(format_table([res]))
    print(f"accuracy {res.evaluation.accuracy:.4f} on {res.evaluation.n_test} test rows")
    return EXIT_OK


def cmd_pipeline(a):
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = extractor_config(a)
    summary = PrepareSummary()
    ds = prepare_dataset(a.corpus, cfg, threads=a.threads, summary=summary)
    export_features(ds, out / "features.csv")
    spec = split_spec(a)
    tr, te = split_indices(ds.y, spec)
    model = train(a.classifier, ds.subset(tr), hyperparameters(a), a.seed,
                  standardize=a.standardize, threads=a.threads)
    model.training_meta["split"] = asdict(spec)
    save_model(model, out / "model.dfm")
    report = evaluate(model, ds.subset(te))
    (out / "eval.json").write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    _write_config(out / "effective_config.json", a, extractor=cfg.to_dict(),
                  fingerprint=cfg.fingerprint(), hyperparameters=model.hyperparameters)
    print(f"{len(ds)} rows ({len(summary.skipped)} skipped), scheme {cfg.scheme}, "
          f"classifier {model.kind}")
    print(report.as_text())
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepfuse",
                                     description="Classical-feature deepfake detection pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keyframes", help="select keyframes from a frame directory or manifest")
    _add_common(p)
    p.add_argument("--frames", help="directory of .png/.pgm frames (sorted by name)")
    p.add_argument("--manifest", help="file of 'path' or 'timestamp<TAB>path' lines")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--out", required=True)
    p.add_argument("--interval", type=float, default=0.5, help="seconds between samples")
    p.add_argument("--skip-head", type=int, default=10)
    p.add_argument("--skip-tail", type=int, default=10)
    p.add_argument("--no-skip", action="store_true", help="keep head and tail frames")
    p.add_argument("--skip-auto", action="store_true",
                   help="waive skipping for sequences shorter than head+tail")
    p.add_argument("--dedup-threshold", "--tau", type=float, default=0.05)
    p.set_defaults(func=cmd_keyframes)

    p = sub.add_parser("features", help="extract a feature file from a real/ + fake/ corpus")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--append", action="store_true", help="append rows to an existing file")
    p.add_argument("--dump-dir", help="write debug PGMs (input, LBP codes, HOG magnitude, KAZE levels)")
    p.add_argument("--dump-limit", type=int, default=4, help="images to dump")
    _add_extractor(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train a classifier on the train split of a feature file")
    _add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True, help="output model file")
    _add_learner(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on the test split of a feature file")
    _add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="structured report (JSON)")
    p.add_argument("--all", action="store_true", help="evaluate on every row")
    p.add_argument("--train-fraction", type=float,
                   help="default: the split recorded in the model")
    p.add_argument("--split-seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time extraction, training and inference")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--out", help="report file")
    p.add_argument("--table", action="store_true", help="print the timing table")
    _add_extractor(p)
    _add_learner(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pipeline", help="features, train and eval in one go")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_extractor(p)
    _add_learner(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def _config_defaults(parser, argv):
    """Apply ``--config`` values as parser defaults so explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        data = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from None
    values = {k: v for k, v in data.items() if not isinstance(v, dict)}
    values.update(data.get(known.command, {}) if known.command else {})
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    target = subparsers.choices.get(known.command)
    if target is None:
        return
    dests = {a.dest for a in target._actions}
    unknown = sorted(set(values) - dests)
    if unknown:
        raise UsageError(f"unknown config key(s) for {known.command}: {', '.join(unknown)}")
    target.set_defaults(**values)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _config_defaults(parser, argv)
        a = parser.parse_args(argv)
    except UsageError as exc:
        print(f"deepfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse: --help or a usage error
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except UsageError as exc:
        print(f"deepfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"deepfuse: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except WorkloadFailure as exc:
        code = EXIT_DATA if isinstance(exc.cause, DataError) else EXIT_INTERNAL
        print(f"deepfuse: {exc}", file=sys.stderr)
        return code
    except ValueError as exc:
        print(f"deepfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DeepfuseError, Exception) as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"deepfuse: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
