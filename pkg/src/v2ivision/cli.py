"""Command-line entry point: ``v2ivision <stage> ...``.

Every stage writes ``<output>.manifest.json`` recording the seed, the
parameters and the sha256 of each input and output file. Failures exit with
status 1 and a ``stage=<name> category=<category>`` line on stderr; usage
errors exit with status 2.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, formats, predictor
from ._accel import backend, set_threads
from .calib import ReferenceCapture, calibrate_values, to_impulse_values
from .chparams import extract_all
from .dataset import align, default_tolerance, export_manifest, load_manifest, make_splits, SplitSpec
from .errors import V2IError
from .evaluate import (
    REFERENCE_RMSE,
    emit_table,
    run_cross_validation,
    run_self_validation,
    run_suite,
    run_vehicle_swap,
    write_series,
)
from .pipeline import build_scenario
from .scenarios import RX_VAN, SWAP_SCALES, get_scenario
from .sim import collect_campaign, default_equipment
from .vision import IMAGE_MODES, compose_images, filter_frames, render_run, scene_layers

log = logging.getLogger("v2ivision")

MODE_ALIASES = {"single": "single_mask", "raw": "raw_scene", "full": "full_segmentation"}
MODE_ALIASES.update({m: m for m in IMAGE_MODES})
EXPERIMENT_ALIASES = {"self": "self_val", "cross": "cross_val", "swap": "vehicle_swap"}

PROFILES = {
    "quick": dict(duration=12.0, epochs=3, modes=("single_mask", "raw_scene"), n_seeds=1),
    "full": dict(duration=None, epochs=60, modes=IMAGE_MODES, n_seeds=3),
}


class StageError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------------------
# helpers


def _out(args, name):
    p = Path(name)
    if not p.is_absolute():
        p = Path(args.out_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _need(path):
    p = Path(path)
    if not p.exists():
        raise StageError("missing-input", f"input file not found: {p}")
    return p


def _provenance(args, output, inputs, outputs=(), **params):
    record = {
        "stage": args.command,
        "version": __version__,
        "seed": args.seed,
        "backend": backend(),
        "params": params,
        "inputs": {str(p): formats.sha256_file(p) for p in inputs},
        "outputs": {str(p): formats.sha256_file(p) for p in [output, *outputs]},
    }
    formats.write_json(str(output) + ".manifest.json", record)


def _scenario(args):
    if args.config:
        return formats.load_config(_need(args.config))
    return get_scenario(args.scenario)


def _mode(name):
    try:
        return MODE_ALIASES[name]
    except KeyError:
        raise StageError("usage", f"unknown image mode {name!r}") from None


# ---------------------------------------------------------------------------
# stages


def cmd_simulate(args):
    cfg = _scenario(args)
    if args.seed is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    if args.duration is not None:
        cfg = cfg.replace(duration=args.duration)
    eq = default_equipment(cfg.num_freq_points)
    run = collect_campaign(cfg, eq)
    out = _out(args, args.out)
    ref = _out(args, args.ref_out)
    paths = _out(args, args.paths_out)
    conf = _out(args, args.config_out)
    formats.write_snapshots(out, run.timestamps, run.values, cfg.config_hash())
    formats.write_reference(ref, eq.reference_capture(), eq.h_ref)
    formats.write_paths(paths, run.paths)
    formats.save_config(cfg, conf)
    _provenance(args, out, [], [ref, paths, conf], scenario=cfg.name, config_hash=cfg.config_hash())
    log.info("simulated %d snapshots", len(run.timestamps))


def cmd_calibrate(args):
    _, ts, vals = formats.read_snapshots(_need(args.input))
    ref = formats.read_reference(_need(args.ref))
    out = _out(args, args.out)
    formats.write_snapshots(out, ts, calibrate_values(vals, ref), extra={"kind": "cfr"})
    _provenance(args, out, [args.input, args.ref])


def cmd_extract(args):
    _, ts, vals = formats.read_snapshots(_need(args.input))
    cfg = formats.load_config(_need(args.config))
    table = extract_all(to_impulse_values(vals), ts, cfg)
    out = _out(args, args.out)
    formats.write_chars(out, table)
    _provenance(args, out, [args.input, args.config], transform="ifft, 1/N on inverse")


def cmd_render_masks(args):
    cfg = formats.load_config(_need(args.config))
    fp = RX_VAN.scaled(args.footprint_scale) if args.footprint_scale != 1.0 else RX_VAN
    frames = render_run(cfg, fp)
    out = _out(args, args.out)
    formats.export_masks(frames, out, cfg.grid_shape)
    _provenance(args, out, [args.config], footprint=fp.label)


def cmd_filter(args):
    frames = formats.import_masks(_need(args.input))
    kept, drops = filter_frames(frames)
    shape = frames[0].grid.shape if frames else (0, 0)
    out = _out(args, args.out)
    formats.export_masks(kept, out, shape)
    logp = _out(args, args.log)
    formats.write_drop_log(logp, drops)
    _provenance(args, out, [args.input], [logp], dropped=len(drops))


def cmd_build_dataset(args):
    table = formats.read_chars(_need(args.chars))
    frames, offsets = formats.import_masks(_need(args.masks), with_offsets=True)
    offset_of = {id(f): o for f, o in zip(frames, offsets)}
    samples = align(table, frames, args.tol_ms * 1e-3)
    if len(samples) < 10:
        raise StageError("too-few-samples", f"only {len(samples)} paired samples")
    splits = make_splits(len(samples), SplitSpec(rng_seed=args.seed or 0))
    out = _out(args, args.out)
    header = {
        "mask_file": str(Path(args.masks).resolve()),
        "mask_sha256": formats.sha256_file(args.masks),
        "chars_sha256": formats.sha256_file(args.chars),
        "tol_ms": repr(args.tol_ms),
        "split_seed": str(args.seed or 0),
    }
    if args.config:
        header["config"] = str(Path(args.config).resolve())
        header["config_hash"] = formats.load_config(args.config).config_hash()
    export_manifest(samples, splits, out, [offset_of[id(s.mask)] for s in samples], header)
    _provenance(args, out, [args.chars, args.masks], samples=len(samples))


def _manifest_images(man, mode, config_path=None):
    frames, offsets = formats.import_masks(_need(man.header["mask_file"]), with_offsets=True)
    by_off = dict(zip(offsets, frames))
    try:
        sel = [by_off[int(o)] for o in man.mask_offset]
    except KeyError as exc:
        raise StageError("format", f"manifest offset {exc} not found in mask file") from None
    layers = None
    if mode != "single_mask":
        cpath = config_path or man.header.get("config")
        if not cpath:
            raise StageError("usage", f"{mode} images need --config")
        layers = scene_layers(formats.load_config(_need(cpath)))
    return compose_images(sel, mode, layers)


def cmd_train(args):
    man = load_manifest(_need(args.manifest))
    mode = _mode(args.image_mode)
    images = _manifest_images(man, mode, args.config)
    cfg = predictor.TrainConfig(epochs=args.epochs, target=args.target, rng_seed=args.seed or 0)
    sp = man.splits()
    model = predictor.train(
        images, man.labels[args.target], sp.train, sp.val, cfg,
        progress=lambda e, tr, va: log.info("epoch %d train %.5f val %.5f", e, tr, va),
    )
    out = _out(args, args.out)
    predictor.save_checkpoint(model, out)
    curve = _out(args, str(args.out) + ".curve.csv")
    with open(curve, "w") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for e, (tr, va) in enumerate(model.training_curve):
            fh.write(f"{e},{tr!r},{va!r}\n")
    _provenance(args, out, [args.manifest, man.header["mask_file"]], [curve],
                target=args.target, image_mode=mode, epochs=args.epochs, best_epoch=model.best_epoch)


def cmd_predict(args):
    model = predictor.load_checkpoint(_need(args.model))
    frames = [f for f in formats.import_masks(_need(args.masks)) if f.visible]
    mode = _mode(args.image_mode)
    layers = scene_layers(formats.load_config(_need(args.config))) if mode != "single_mask" else None
    preds = predictor.predict_run(model, compose_images(frames, mode, layers)) if frames else []
    out = _out(args, args.out)
    with open(out, "w") as fh:
        fh.write(f"timestamp,{model.target}\n")
        for f, p in zip(frames, preds):
            fh.write(f"{f.timestamp!r},{float(p)!r}\n")
    _provenance(args, out, [args.model, args.masks])


def cmd_evaluate(args):
    exp = EXPERIMENT_ALIASES[args.experiment]
    mode = _mode(args.image_mode)
    cfg = predictor.TrainConfig(epochs=args.epochs)
    seed = args.seed or 0
    dur = {"duration": args.duration} if args.duration is not None else {}
    data = build_scenario(get_scenario(args.train_scenario, **dur), RX_VAN)
    model = predictor.load_checkpoint(_need(args.model)) if args.model else None
    rep, model = run_self_validation(data, mode, args.target, seed, model=model, cfg=cfg)
    reports = [rep]
    if exp == "cross_val":
        other = build_scenario(get_scenario(args.test_scenario, **dur), RX_VAN)
        reports = [run_cross_validation(model, other, mode, args.target, seed, data.config.name)]
    elif exp == "vehicle_swap":
        if mode != "single_mask":
            raise StageError("usage", "the vehicle swap runs on single-mask models")
        _, reports = run_vehicle_swap(model, data, [RX_VAN.scaled(s) for s in SWAP_SCALES], args.target, seed)
    out = _out(args, args.out)
    emit_table(reports, out)
    series = []
    for r in reports:
        p = _out(args, f"{Path(args.out).stem}.{r.experiment}.{r.target}.{r.meta.get('footprint', r.image_mode)}.series.csv")
        write_series(r, p)
        series.append(p)
    _provenance(args, out, [args.model] if args.model else [], series, experiment=exp, image_mode=mode, target=args.target)


def cmd_demo(args):
    prof = PROFILES[args.profile]
    seed = 7 if args.seed is None else args.seed
    seeds = tuple(seed + i for i in range(prof["n_seeds"]))
    epochs = prof["epochs"] if args.epochs is None else args.epochs
    dur = {"duration": prof["duration"]} if prof["duration"] is not None else {}
    log.info("building scenarios (%s profile)", args.profile)
    data_a = build_scenario(get_scenario("A", **dur), RX_VAN)
    data_b = build_scenario(get_scenario("B", **dur), RX_VAN)
    suite = run_suite(data_a, data_b, prof["modes"], seeds, predictor.TrainConfig(epochs=epochs),
                      SWAP_SCALES, progress=log.info)
    out = _out(args, "report.csv")
    emit_table(suite.reports, out)
    outputs = []
    for (mode, target, s), model in sorted(suite.models.items()):
        p = _out(args, f"models/{mode}.{target}.s{s}.bin")
        predictor.save_checkpoint(model, p)
        outputs.append(p)
    tagged = [(r, r.meta.get("footprint", r.image_mode)) for r in suite.reports]
    tagged += [(r, "baseline") for r in suite.swap_baselines]
    for r, tag in tagged:
        p = _out(args, f"series/{r.experiment}.{tag}.{r.target}.s{r.meta.get('seed')}.csv")
        write_series(r, p)
        outputs.append(p)
    ref = _out(args, "reference_rmse.csv")
    with open(ref, "w") as fh:
        fh.write("experiment,image_mode,target,street_a,street_b\n")
        for (e, m, t), (a, b) in REFERENCE_RMSE.items():
            fh.write(f"{e},{m},{t},{a!r},{b!r}\n")
    outputs.append(ref)
    _provenance(args, out, [], outputs, profile=args.profile, epochs=epochs, seeds=list(seeds),
                samples_a=len(data_a), samples_b=len(data_b))
    print(out)


# ---------------------------------------------------------------------------
# parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random stream of the stage")
    common.add_argument("--config", default=None, help="scenario TOML file")
    common.add_argument("--out-dir", default=".", help="directory for relative output paths")
    common.add_argument("--threads", type=int, default=0, help="cap numba/BLAS threads (0 = library default)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="v2ivision", description="Vision-aided V2I channel prediction toolkit.", parents=[common])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.set_defaults(func=fn)
        return p

    p = add("simulate", cmd_simulate, "synthesize a sounding campaign")
    p.add_argument("--scenario", default="A", choices=("A", "B"))
    p.add_argument("--duration", type=float, default=None, help="truncate the run (seconds)")
    p.add_argument("--out", default="raw.bin")
    p.add_argument("--ref-out", default="ref.bin")
    p.add_argument("--paths-out", default="paths.txt")
    p.add_argument("--config-out", default="scenario.toml")

    p = add("calibrate", cmd_calibrate, "divide out the back-to-back reference")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", default="cfr.bin")

    p = add("extract", cmd_extract, "path loss, K-factor and delay spread per snapshot")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="chars.csv")

    p = add("render-masks", cmd_render_masks, "render target masks for every camera frame")
    p.add_argument("--footprint-scale", type=float, default=1.0)
    p.add_argument("--out", default="masks.bin")

    p = add("filter", cmd_filter, "drop frames where the target is not usable")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="masks.f.bin")
    p.add_argument("--log", default="drops.csv")

    p = add("build-dataset", cmd_build_dataset, "align masks with labels and split")
    p.add_argument("--chars", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--tol-ms", type=float, default=default_tolerance(73.0) * 1e3)
    p.add_argument("--out", default="manifest.tsv")

    p = add("train", cmd_train, "train one regressor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--target", default="pl_db", choices=predictor.TARGETS)
    p.add_argument("--image-mode", default="single", choices=sorted(MODE_ALIASES))
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--out", default="model.bin")

    p = add("predict", cmd_predict, "run a checkpoint over a mask file")
    p.add_argument("--model", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--image-mode", default="single", choices=sorted(MODE_ALIASES))
    p.add_argument("--out", default="preds.csv")

    p = add("evaluate", cmd_evaluate, "run one experiment on the built-in scenarios")
    p.add_argument("--experiment", required=True, choices=sorted(EXPERIMENT_ALIASES))
    p.add_argument("--image-mode", default="single", choices=sorted(MODE_ALIASES))
    p.add_argument("--target", default="pl_db", choices=predictor.TARGETS)
    p.add_argument("--train-scenario", default="A", choices=("A", "B"))
    p.add_argument("--test-scenario", default="B", choices=("A", "B"))
    p.add_argument("--model", default=None, help="checkpoint to evaluate instead of training")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--out", default="report.csv")

    p = add("demo", cmd_demo, "end-to-end reproduction on the built-in scenarios")
    p.add_argument("--profile", default="quick", choices=sorted(PROFILES))
    p.add_argument("--epochs", type=int, default=None, help="override the profile's epoch count")
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    if args.threads:
        set_threads(args.threads)
    try:
        args.func(args)
    except StageError as exc:
        print(f"stage={args.command} category={exc.category} error: {exc}", file=sys.stderr)
        return 1
    except V2IError as exc:
        print(f"stage={args.command} category={exc.category} error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"stage={args.command} category=missing-input error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"stage={args.command} category=io error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
