"""``hierattn`` command line: crop, balance, train, eval, bench, params, gradcheck, plot-roc."""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
IMAGE_EXTS = (".png", ".jpg", ".jpeg")

log = logging.getLogger("hierattn")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# config files -----------------------------------------------------------------

def _coerce(raw: str, kind):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    if kind is bool or kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int or kind == "int":
        return int(raw)
    if kind is float or kind == "float":
        return float(raw)
    return raw


def read_config(path: Path) -> dict:
    """Flat ``key = value`` file; keys must be training or model options."""
    from .training import TrainConfig
    kinds = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    kinds.update(variant="str", input_size="int", attention="str")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from exc
    out = {}
    for key, raw in parser["config"].items():
        if key not in kinds:
            raise UsageError(f"{path}: unknown key {key!r}")
        try:
            out[key] = _coerce(raw, kinds[key])
        except ValueError as exc:
            raise UsageError(f"{path}: {key}: {exc}") from exc
    return out


# helpers ----------------------------------------------------------------------

def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("HIERATTN_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"HIERATTN_SEED must be an integer, got {env!r}") from None


def _images_under(root: Path) -> list[Path]:
    return sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_EXTS)


def _crop_one(args: tuple[str, str]) -> str:
    from .data.imaging import crop_image, read_image, write_image
    src, dst = args
    try:
        img = read_image(src)
    except ValueError as exc:
        return f"failed:{exc}"
    out, region = crop_image(img)
    write_image(dst, out)
    return "cropped" if region is not None else "passthrough"


def _load_manifest(path):
    from .data.manifest import ManifestError, load_manifest
    try:
        return load_manifest(path)
    except ManifestError as exc:
        raise DataError(str(exc)) from exc


def _load_ckpt(path):
    from .checkpoint import load_checkpoint
    from .serialize import FormatError
    try:
        return load_checkpoint(path)
    except (OSError, FormatError) as exc:
        raise DataError(f"cannot load checkpoint {path}: {exc}") from exc


# subcommands ------------------------------------------------------------------

def cmd_crop(a) -> int:
    src, dst = Path(a.input), Path(a.out)
    if not src.is_dir():
        raise DataError(f"input directory {src} does not exist")
    files = _images_under(src)
    jobs = [(str(f), str(dst / f.relative_to(src))) for f in files]
    if a.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=a.jobs) as ex:
            results = list(ex.map(_crop_one, jobs))
    else:
        results = [_crop_one(j) for j in jobs]
    counts = {"cropped": 0, "passthrough": 0, "failed": 0}
    for (f, _), r in zip(jobs, results):
        kind = r.split(":", 1)[0]
        counts[kind] += 1
        if kind == "failed":
            log.warning("skipped %s: %s", f, r.split(":", 1)[1])
    print(f"total={len(jobs)} cropped={counts['cropped']} passthrough={counts['passthrough']} "
          f"failed={counts['failed']}")
    return EXIT_DATA if jobs and counts["failed"] == len(jobs) else EXIT_OK


def cmd_balance(a) -> int:
    from .data.augment import AugmentationSpec
    from .data.manifest import Manifest
    from .data.sampling import balance_dataset
    m = _load_manifest(a.manifest)
    out = Path(a.out) if a.out else Path(a.manifest).parent
    strategy = "random" if a.strategy in ("random", "rand") else a.strategy
    try:
        bal = balance_dataset(m, strategy, a.target, out_dir=out / "augmented", spec=AugmentationSpec(),
                              seed=resolve_seed(a.seed))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    name = a.name or Path(a.manifest).stem.upper()
    prefix = "IH" if strategy == "ih" else "Rand"
    dest = out / f"{prefix}{name}{len(bal)}.csv"
    # re-anchor relative paths at the new manifest's directory
    recs = [dataclasses.replace(r, path=os.path.relpath(bal.resolve(r).resolve(), out.resolve()))
            for r in bal.records]
    Manifest(recs, bal.class_names, root=out).save(dest)
    counts = " ".join(f"{k}={v}" for k, v in bal.counts.items())
    print(f"wrote {dest} records={len(bal)} {counts}")
    return EXIT_OK


def _train_config(a, file_cfg: dict):
    from .training import TrainConfig
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    values = {k: v for k, v in file_cfg.items() if k in fields}
    flags = {"epochs": a.epochs, "batch_size": a.batch_size, "fold": a.fold, "folds": a.folds,
             "warmup_epochs": a.warmup_epochs, "lr_peak": a.lr_peak, "lr_floor": a.lr_floor,
             "weight_decay": a.weight_decay, "survival_prob": a.survival_prob}
    values.update({k: v for k, v in flags.items() if v is not None})
    if a.freeze_warmup:
        values["freeze_warmup"] = True
    values["seed"] = resolve_seed(a.seed if a.seed is not None else file_cfg.get("seed"))
    if "warmup_epochs" not in values and values.get("epochs", 500) <= 30:
        values["warmup_epochs"] = max(0, values["epochs"] // 10)
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(a) -> int:
    from .checkpoint import model_from_checkpoint, save_checkpoint
    from .model import build_model, model_config
    from .training import TrainingError, fit, load_pretrained_partial
    from .training.fit import load_arrays
    from .training.transfer import backbone_state
    file_cfg = read_config(Path(a.config)) if a.config else {}
    cfg = _train_config(a, file_cfg)
    m = _load_manifest(a.manifest)
    variant = a.variant or file_cfg.get("variant", "tiny")
    overrides = {"num_classes": len(m.class_names), "survival_prob": cfg.survival_prob}
    for k in ("input_size", "attention"):
        v = getattr(a, k, None) if getattr(a, k, None) is not None else file_cfg.get(k)
        if v is not None:
            overrides[k] = v
    try:
        mcfg = model_config(variant, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        data = load_arrays(m, mcfg.input_size)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    out = Path(a.out)
    folds = range(cfg.folds) if a.all_folds else [cfg.fold]
    for k in folds:
        fold_cfg = dataclasses.replace(cfg, fold=k)
        fold_out = out / f"fold{k}" if a.all_folds else out
        model = build_model(mcfg, seed=cfg.seed)
        freeze = None
        if a.pretrained:
            ck = _load_ckpt(a.pretrained)
            try:
                model, freeze = load_pretrained_partial(model, backbone_state(model_from_checkpoint(ck)))
            except (ValueError, KeyError) as exc:
                raise DataError(str(exc)) from exc
        try:
            hist = fit(model, data, fold_cfg, out_dir=fold_out, freeze=freeze,
                       log=(print if a.verbose else log.info))
        except TrainingError as exc:
            raise NumericError(str(exc)) from exc
        save_checkpoint(model, fold_out / "final.hack")
        print(f"fold {k}: best val_top1={hist.best_val:.4f} at epoch {hist.best_epoch}; "
              f"history at {fold_out / 'history.csv'}")
    return EXIT_OK


def cmd_eval(a) -> int:
    from .checkpoint import model_from_checkpoint
    from .metrics import confusion, emit_plot_data, macro_auc, roc_ovr, top1_accuracy
    from .ops import softmax
    from .serialize import atomic_write
    from .tensor import Tensor
    from .training.fit import load_arrays, predict_logits, to_input
    ck = _load_ckpt(a.checkpoint)
    m = _load_manifest(a.manifest)
    if len(m.class_names) != ck.num_classes:
        raise DataError(f"manifest has {len(m.class_names)} classes, checkpoint {ck.num_classes}")
    model = model_from_checkpoint(ck, **({"input_size": a.input_size} if a.input_size else {}))
    try:
        imgs, labels = load_arrays(m, model.cfg.input_size)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    logits = predict_logits(model, to_input(imgs))
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    probs = softmax(Tensor(logits.astype(np.float64))).data
    out = Path(a.out)
    cm = confusion(logits, labels, ck.num_classes)
    present = [c for c in range(ck.num_classes) if 0 < (labels == c).sum() < labels.size]
    curves = [roc_ovr(probs, labels, c) for c in present]
    rows = [("top1", top1_accuracy(logits, labels)), ("samples", len(labels))]
    if present:
        rows.append(("macro_auc", macro_auc(probs, labels, present)))
    atomic_write(out / "metrics.csv", "metric,value\n" + "".join(f"{k},{v}\n" for k, v in rows))
    header = "true\\pred," + ",".join(m.class_names) + "\n"
    body = "".join(f"{m.class_names[i]}," + ",".join(map(str, row)) + "\n" for i, row in enumerate(cm.counts))
    atomic_write(out / "confusion.csv", header + body)
    emit_plot_data(dict(zip((m.class_names[c] for c in present), ((c.fpr, c.tpr) for c in curves))),
                   out / "roc.csv", svg=out / "roc.svg", xlabel="false positive rate", ylabel="true positive rate")
    for k, v in rows:
        print(f"{k}={v}")
    return EXIT_OK


def cmd_bench(a) -> int:
    from .metrics import bench_inference
    from .model import build_model, model_config
    try:
        cfg = model_config(a.variant, **({"input_size": a.input_size} if a.input_size else {}))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    r = bench_inference(build_model(cfg, seed=resolve_seed(a.seed)), iterations=a.iters, warmup=a.warmup)
    print(f"variant={r.variant} input={r.input_size} iterations={r.iterations} "
          f"mean_ms={r.mean_ms:.3f} std_ms={r.std_ms:.3f}")
    return EXIT_OK


def cmd_params(a) -> int:
    from .model import build_model, count_params, param_table
    try:
        m = build_model(a.variant)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = param_table(m)
    width = max(len(n) for n, _ in rows)
    for name, n in rows:
        print(f"{name:<{width}}  {n:>10,d}")
    total = count_params(m)
    print(f"{'total':<{width}}  {total:>10,d}  ({total / 1e6:.2f} M)")
    return EXIT_OK


def cmd_gradcheck(a) -> int:
    from .gradsuite import run_suite

    def report(r):
        if a.verbose or not r.ok:
            print(f"{r.name:<24} {r.error:.3e} {'ok' if r.ok else 'FAIL'}")
    results = run_suite(seed=resolve_seed(a.seed), include_model=not a.ops_only, report=report)
    worst = max(r.error for r in results)
    print(f"cases={len(results)} max_rel_err={worst:.3e}")
    failed = [r for r in results if not r.ok or r.error > a.tol]
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_plot_roc(a) -> int:
    from .metrics import read_plot_csv, render_svg
    try:
        series = read_plot_csv(a.csv)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    svg = Path(a.out) if a.out else Path(a.csv).with_suffix(".svg")
    render_svg(series, svg, xlabel="false positive rate", ylabel="true positive rate")
    print(f"wrote {svg}")
    return EXIT_OK


# parser -----------------------------------------------------------------------

def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $HIERATTN_SEED, then 0)")
    common.add_argument("--precision", choices=("float32", "float64"), default="float32",
                        help="floating point precision for tensors")
    common.add_argument("-v", "--verbose", action="store_true", help="print progress")

    p = Parser(prog="hierattn", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    c = sub.add_parser("crop", parents=[common], help="crop scope circles from a directory of images")
    c.add_argument("--in", dest="input", required=True, help="input image directory (searched recursively)")
    c.add_argument("--out", required=True, help="output directory; relative layout is preserved")
    c.add_argument("--jobs", type=int, default=1, help="worker processes")
    c.set_defaults(func=cmd_crop)

    b = sub.add_parser("balance", parents=[common], help="balance a manifest to a per-class target")
    b.add_argument("--manifest", required=True, help="input manifest CSV")
    b.add_argument("--strategy", choices=("ih", "random", "rand"), required=True, help="undersampling strategy")
    b.add_argument("--target", type=int, required=True, help="records per class")
    b.add_argument("--out", default=None, help="output directory (default: next to the manifest)")
    b.add_argument("--name", default=None, help="dataset name used in the output file name")
    b.add_argument("--jobs", type=int, default=1, help="worker cap (balancing runs in one process)")
    b.set_defaults(func=cmd_balance)

    t = sub.add_parser("train", parents=[common], help="train on one fold (or all) of a manifest")
    t.add_argument("--manifest", required=True, help="training manifest CSV")
    t.add_argument("--variant", choices=("xs", "s", "tiny"), default=None, help="model plan")
    t.add_argument("--config", default=None, help="flat key = value file of training options")
    t.add_argument("--out", required=True, help="directory for history.csv and checkpoints")
    t.add_argument("--epochs", type=int, default=None, help="number of epochs")
    t.add_argument("--batch-size", type=int, default=None, help="mini-batch size")
    t.add_argument("--folds", type=int, default=None, help="number of cross-validation folds")
    g = t.add_mutually_exclusive_group()
    g.add_argument("--fold", type=int, default=None, help="held-out fold index")
    g.add_argument("--all-folds", action="store_true", help="train one model per fold")
    t.add_argument("--warmup-epochs", type=int, default=None, help="warm-up length in epochs")
    t.add_argument("--lr-peak", type=float, default=None, help="learning rate after warm-up")
    t.add_argument("--lr-floor", type=float, default=None, help="initial and final learning rate")
    t.add_argument("--weight-decay", type=float, default=None, help="decoupled weight decay")
    t.add_argument("--survival-prob", type=float, default=None, help="stochastic depth survival probability")
    t.add_argument("--input-size", type=int, default=None, help="square input side")
    t.add_argument("--pretrained", default=None, help="checkpoint whose backbone is transferred")
    t.add_argument("--freeze-warmup", action="store_true", help="freeze transferred layers during warm-up")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a manifest")
    e.add_argument("--checkpoint", required=True, help="checkpoint file")
    e.add_argument("--manifest", required=True, help="evaluation manifest CSV")
    e.add_argument("--out", required=True, help="directory for metrics, confusion and ROC outputs")
    e.add_argument("--input-size", type=int, default=None, help="square input side")
    e.set_defaults(func=cmd_eval)

    be = sub.add_parser("bench", parents=[common], help="time single-image inference")
    be.add_argument("--variant", choices=("xs", "s", "tiny"), required=True, help="model plan")
    be.add_argument("--iters", type=int, default=1000, help="timed iterations")
    be.add_argument("--warmup", type=int, default=10, help="untimed warm-up iterations (>= 10)")
    be.add_argument("--input-size", type=int, default=None, help="square input side")
    be.set_defaults(func=cmd_bench)

    pa = sub.add_parser("params", parents=[common], help="per-layer parameter table")
    pa.add_argument("--variant", choices=("xs", "s", "tiny"), required=True, help="model plan")
    pa.set_defaults(func=cmd_params)

    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    gc.add_argument("--tol", type=float, default=1e-3, help="fail above this relative error")
    gc.add_argument("--ops-only", action="store_true", help="skip the end-to-end model case")
    gc.set_defaults(func=cmd_gradcheck)

    pr = sub.add_parser("plot-roc", parents=[common], help="render a series,x,y CSV as an SVG line plot")
    pr.add_argument("--csv", required=True, help="plot-data CSV (e.g. roc.csv from eval)")
    pr.add_argument("--out", default=None, help="SVG path (default: next to the CSV)")
    pr.set_defaults(func=cmd_plot_roc)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from .tensor import NonFiniteError, precision
    dtype = np.float64 if a.precision == "float64" else np.float32
    try:
        with precision(dtype):
            return a.func(a)
    except UsageError as exc:
        print(f"hierattn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"hierattn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, NonFiniteError, FloatingPointError) as exc:
        print(f"hierattn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
