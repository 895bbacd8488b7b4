"""``bumpdetect`` command-line driver.

Exit codes: 0 ok, 2 usage/config error, 3 I/O error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import tensornet as tn
from .evaluate import accuracy, roc, auc, write_auc_table, write_roc_csv
from .fitdetect import FilterRules, FitError, check_rules, fit_spectrum, significance
from .inspection import (
    feature_maps, plot_roc, plot_spectrum, reconstruct_input, render_filters,
    write_png,
)
from .simulate import (
    GENERATOR_VERSION, ConfigError, DatasetConfig, DatasetManifest, generate_dataset,
    load_composite, split, synth_composite,
)
from .spectra import read_spectrum
from .transform import (
    BENC_VERSION, DEFAULT_AXES, SHAPES, encode, network_input, read_batch,
    write_batch,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def load_config(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"{path}: invalid config ({exc})") from None


def _emit(rows, out):
    lines = "".join(json.dumps(r) + "\n" for r in rows)
    if out:
        Path(out).write_text(lines)
    else:
        sys.stdout.write(lines)


# --- commands ---------------------------------------------------------------

def cmd_generate(args):
    cfg = load_config(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.count is not None:
        cfg["count"] = args.count
    config = DatasetConfig.from_dict(cfg)
    manifest = generate_dataset(config, args.out)
    n_bump = int(manifest.labels.sum())
    lo, hi, n = config.grid
    print(f"wrote {len(manifest)} spectra to {args.out}: "
          f"{n_bump} bump / {len(manifest) - n_bump} no_bump; "
          f"grid {lo:g}-{hi:g} A x {int(n)}")


def cmd_split(args):
    manifest = DatasetManifest.read(args.manifest)
    train, test = split(manifest, args.train_fraction, args.seed)
    out = Path(args.out_dir) if args.out_dir else Path(args.manifest).parent
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("test", test)):
        records = [{**r, "path": os.path.relpath(manifest.spectrum_path(r), out)}
                   for r in part.records]
        part.subset(records).write(out / f"{name}.jsonl")
    print(f"train {len(train)} / test {len(test)} -> {out}")


def _axes(text):
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("axes take wl_min,wl_max,f_min,f_max")
    return vals


def cmd_transform(args):
    manifest = DatasetManifest.read(args.manifest)
    z_em = [r["z_em"] for r in manifest.records]
    data = encode(manifest.spectra(), args.encoding, z_em=z_em,
                  normalize=not args.no_normalize, axes=args.axes,
                  rest_frame=not args.observed_frame)
    write_batch(args.out, args.encoding, data, manifest.labels, manifest.ids)
    print(f"{args.encoding}: {data.shape} -> {args.out}")


def _read_batch(path, model=None):
    encoding, data, labels, ids = read_batch(path)
    if model is not None and data.shape[1:] != model.spec.input_shape:
        raise CliError(f"{path} holds {encoding} data {data.shape[1:]}, but the model "
                       f"expects input {model.spec.input_shape}")
    if ids is None:
        ids = list(range(len(data)))
    return encoding, data, labels, ids


def _load_spec(text, input_dim):
    p = Path(text)
    if p.suffix == ".json" or p.exists():
        try:
            return tn.NetworkSpec.from_dict(json.loads(p.read_text()))
        except FileNotFoundError:
            raise CliError(f"network spec file not found: {text}") from None
    try:
        return tn.preset(text, input_dim)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _prefix_match(source: tn.Model, spec: tn.NetworkSpec):
    """Leading layers shared by ``source`` and ``spec``, leaving the last two for a new head."""
    if source.spec.input_shape != spec.input_shape:
        raise CliError("warm-start model input shape differs from the target network")
    k = 0
    limit = min(len(source.spec.layers), len(spec.layers) - 2)
    while k < limit and source.spec.layers[k] == spec.layers[k]:
        k += 1
    return k


def cmd_train(args):
    encoding, data, labels, _ = _read_batch(args.data)
    if labels is None:
        raise CliError(f"{args.data} carries no labels")
    warm = tn.load(args.warm_start) if args.warm_start else None
    if args.spec:
        spec = _load_spec(args.spec, data.shape[1] if data.ndim == 2 else 4761)
    elif warm is not None:
        spec = warm.spec
    else:
        raise CliError("--spec is required unless --warm-start is given")
    if data.shape[1:] != spec.input_shape:
        raise CliError(f"{encoding} data {data.shape[1:]} does not fit network input "
                       f"{spec.input_shape}")
    x = network_input(encoding, data)
    xv = yv = None
    if args.val_data:
        venc, vdata, yv, _ = _read_batch(args.val_data)
        if venc != encoding:
            raise CliError("validation data uses a different encoding")
        xv = network_input(venc, vdata)
    cfg = tn.TrainConfig(lr=args.lr, decay=args.decay, step_epochs=args.step_epochs,
                         batch_size=args.batch_size, epochs=args.epochs, seed=args.seed,
                         validation_fraction=args.val_fraction if xv is None else 0.0)
    if warm is not None:
        keep = _prefix_match(warm, spec)
        model, history = tn.fine_tune(warm, spec.layers[keep:], x, labels, cfg,
                                      keep=keep, freeze=args.freeze, x_val=xv, y_val=yv)
    else:
        model, history = tn.train(tn.init(spec, args.seed), x, labels, xv, yv, cfg)
    model.meta["encoding"] = encoding
    tn.save(model, args.out)
    hist = args.history or str(args.out) + ".history.csv"
    tn.write_history(history, hist)
    last = history[-1] if history else {}
    print(f"trained {spec.name} ({tn.param_count(spec)} params) for {len(history)} epochs"
          + (f": train_acc {last['train_acc']:.4f} val_acc {last['val_acc']:.4f}"
             if history else "") + f" -> {args.out}")


def _model_encoding(model):
    enc = model.meta.get("encoding")
    if enc is None:
        for name, shp in SHAPES.items():
            if shp == model.spec.input_shape:
                enc = name
    return enc


def cmd_predict(args):
    model = tn.load(args.model)
    encoding = _model_encoding(model)
    if args.spectrum:
        s = read_spectrum(args.spectrum)
        if encoding == "image" and args.z_em is None and not args.observed_frame:
            raise CliError("image models need --z-em (or --observed-frame)")
        data = encode([s], encoding, z_em=args.z_em, rest_frame=not args.observed_frame)
        ids = [Path(args.spectrum).stem]
    elif args.data:
        enc, data, _, ids = _read_batch(args.data, model)
        if enc != encoding:
            raise CliError(f"model expects {encoding} data, {args.data} holds {enc}")
    else:
        raise CliError("give --data or --spectrum")
    classes, scores = tn.predict(model, network_input(encoding, data), args.threshold)
    _emit([{"id": i, "score": float(sc), "class": "bump" if c else "no_bump"}
           for i, sc, c in zip(ids, scores, classes)], args.out)


def cmd_eval(args):
    model = tn.load(args.model)
    encoding = _model_encoding(model)
    enc, data, labels, _ = _read_batch(args.data, model)
    if enc != encoding:
        raise CliError(f"model expects {encoding} data, {args.data} holds {enc}")
    if labels is None:
        raise CliError(f"{args.data} carries no labels")
    classes, scores = tn.predict(model, network_input(encoding, data), args.threshold)
    curve = roc(scores, labels)
    area = auc(curve)
    name = args.name or model.spec.name
    print(f"{name}: accuracy {accuracy(classes, labels):.5f}  AUC {area:.5f}  (n={len(labels)})")
    if args.roc:
        Path(args.roc).write_text(plot_roc([(name, curve)], title=f"ROC {name}"))
    if args.csv:
        write_roc_csv(curve, args.csv)
    if args.auc_table:
        write_auc_table([(name, area)], args.auc_table)


def _fit_one(spectrum, composite, z_em, z_abs, rules, n_sig, snr, seed, ident):
    result = fit_spectrum(spectrum, composite, z_em, z_abs)
    sig = None
    if n_sig:
        if snr is None:
            raise CliError("--significance needs --snr (or a manifest with snr)")
        sig = significance(result, composite, z_em, z_abs, snr, n_sig, seed,
                           wavelengths=spectrum.wavelengths)
    reason = check_rules(result, rules, sig)
    row = {"id": ident, **result.to_dict(), "accepted": reason is None, "reason": reason}
    if sig is not None:
        row["significance"] = sig
    return row


def cmd_fit(args):
    composite = load_composite(args.composite) if args.composite else synth_composite()
    try:
        rules = FilterRules.from_dict(load_config(args.rules)) if args.rules else FilterRules()
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad rules config: {exc}") from None
    rows = []
    if args.manifest:
        manifest = DatasetManifest.read(args.manifest)
        for r in manifest.records:
            rows.append(_fit_one(manifest.load_spectrum(r), composite, r["z_em"], r["z_abs"],
                                 rules, args.significance, r.get("snr"), args.seed, r["id"]))
    elif args.spectrum:
        if args.z_em is None or args.z_abs is None:
            raise CliError("--z-em and --z-abs are required with --spectrum")
        rows.append(_fit_one(read_spectrum(args.spectrum), composite, args.z_em, args.z_abs,
                             rules, args.significance, args.snr, args.seed,
                             Path(args.spectrum).stem))
    else:
        raise CliError("give --spectrum or --manifest")
    _emit(rows, args.out)


def _as_image(x):
    x = np.asarray(x)
    return x.reshape(69, 69) if x.shape == (4761,) else x


def cmd_viz(args):
    if args.what == "plot":
        s = read_spectrum(args.spectrum)
        overlays = [(Path(p).stem, read_spectrum(p)) for p in args.overlay or ()]
        Path(args.out).write_text(plot_spectrum(s, overlays, title=Path(args.spectrum).stem))
        return
    model = tn.load(args.model)
    if args.what == "filters":
        write_png(render_filters(model, args.layer), args.out)
    elif args.what == "maps":
        enc, data, _, _ = _read_batch(args.data, model)
        maps = feature_maps(model, network_input(enc, data[args.index]), args.layer)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for k, m in enumerate(maps):
            write_png(m, out / f"map_{k:03d}.png")
        print(f"{len(maps)} feature maps -> {out}")
    elif args.what == "reconstruct":
        img, traj = reconstruct_input(model, args.target_class, args.steps,
                                      args.step_size, args.seed)
        write_png(_as_image(img), args.out)
        print(f"target logit {traj[0]:.4f} -> {traj[-1]:.4f}")


# --- parser -----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="bumpdetect",
                                description="Simulate, encode, train and evaluate 2175 A bump detectors.")
    p.add_argument("--version", action="version",
                   version=f"bumpdetect {__version__} (simulator {GENERATOR_VERSION}, "
                           f"BENC v{BENC_VERSION}, BMPK v{tn.io.VERSION})")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a labeled dataset")
    g.add_argument("--config", help="TOML config with DatasetConfig keys")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, help="master seed (overrides config)")
    g.add_argument("--count", type=int, help="number of samples (overrides config)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("split", help="stratified train/test split of a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--train-fraction", type=float, default=22 / 30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", help="defaults to the manifest directory")
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("transform", help="encode a manifest into a BENC batch")
    t.add_argument("--manifest", required=True)
    t.add_argument("--encoding", required=True, choices=("vector", "matrix", "image"))
    t.add_argument("--out", required=True)
    t.add_argument("--no-normalize", action="store_true",
                   help="skip median normalization (vector/matrix)")
    t.add_argument("--axes", type=_axes, default=DEFAULT_AXES,
                   help="image axes wl_min,wl_max,f_min,f_max (default %(default)s)")
    t.add_argument("--observed-frame", action="store_true",
                   help="draw images in the observed frame instead of the rest frame")
    t.set_defaults(func=cmd_transform)

    tr = sub.add_parser("train", help="train a network on a BENC batch")
    tr.add_argument("--data", required=True)
    tr.add_argument("--spec", help="preset (FC2-400, CNN4-REF, CNN2-SMALL, IMG-CNN) or JSON file")
    tr.add_argument("--epochs", type=int, default=10)
    tr.add_argument("--lr", type=float, default=0.01)
    tr.add_argument("--decay", type=float, default=0.1)
    tr.add_argument("--step-epochs", type=int, help="decay interval (default: a third of the run)")
    tr.add_argument("--batch-size", type=int, default=32)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--val-data", help="BENC batch used for val_acc")
    tr.add_argument("--val-fraction", type=float, default=0.0,
                    help="hold out this fraction when --val-data is absent")
    tr.add_argument("--out", required=True, help="model file")
    tr.add_argument("--history", help="history CSV (default <out>.history.csv)")
    tr.add_argument("--warm-start", help="model whose leading layers are reused")
    tr.add_argument("--freeze", action="store_true", help="keep reused layers fixed")
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="score encoded data or one spectrum file")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data")
    pr.add_argument("--spectrum")
    pr.add_argument("--z-em", type=float, help="emission redshift (image models)")
    pr.add_argument("--observed-frame", action="store_true")
    pr.add_argument("--threshold", type=float, default=0.5)
    pr.add_argument("--out", help="JSON Lines output (default stdout)")
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("eval", help="accuracy, ROC and AUC on labeled data")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--threshold", type=float, default=0.5)
    ev.add_argument("--roc", help="ROC plot (SVG)")
    ev.add_argument("--csv", help="ROC points (threshold,fpr,tpr)")
    ev.add_argument("--auc-table", help="model,auc CSV")
    ev.add_argument("--name", help="model name in outputs")
    ev.set_defaults(func=cmd_eval)

    f = sub.add_parser("fit", help="traditional curve-fitting detector")
    f.add_argument("--spectrum")
    f.add_argument("--manifest", help="fit every record, using its redshifts")
    f.add_argument("--composite", help="rest-frame composite (default: built-in)")
    f.add_argument("--z-em", type=float)
    f.add_argument("--z-abs", type=float)
    f.add_argument("--rules", help="TOML filter rules")
    f.add_argument("--significance", type=int, default=0, metavar="N",
                   help="number of null trials (0 = skip)")
    f.add_argument("--snr", type=float, help="noise level for the null trials")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", help="JSON Lines output (default stdout)")
    f.set_defaults(func=cmd_fit)

    v = sub.add_parser("viz", help="filters, feature maps, reconstructions, plots")
    vs = v.add_subparsers(dest="what", required=True)
    vf = vs.add_parser("filters")
    vf.add_argument("--model", required=True)
    vf.add_argument("--layer", type=int, default=0)
    vf.add_argument("--out", required=True)
    vm = vs.add_parser("maps")
    vm.add_argument("--model", required=True)
    vm.add_argument("--data", required=True)
    vm.add_argument("--index", type=int, default=0)
    vm.add_argument("--layer", type=int, required=True)
    vm.add_argument("--out", required=True, help="output directory")
    vr = vs.add_parser("reconstruct")
    vr.add_argument("--model", required=True)
    vr.add_argument("--target-class", type=int, default=1)
    vr.add_argument("--steps", type=int, default=200)
    vr.add_argument("--step-size", type=float, default=0.1)
    vr.add_argument("--seed", type=int, default=0)
    vr.add_argument("--out", required=True)
    vp = vs.add_parser("plot")
    vp.add_argument("--spectrum", required=True)
    vp.add_argument("--overlay", action="append")
    vp.add_argument("--out", required=True)
    v.set_defaults(func=cmd_viz)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, tn.ShapeError, FitError, tn.ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except tn.TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
