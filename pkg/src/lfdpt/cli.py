"""Command-line interface: ``lfdpt <command> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data/format error,
3 numeric failure. Logs go to stderr, tables to stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import format_items, load_checkpoint, parse_items, save_checkpoint
from .errors import (ConfigurationError, DimensionError, DptError, FormatError, NumericError,
                     UsageError)
from .lightfield import (SyntheticScene, bicubic_resize, crop_patches, export_pgm,
                         generate_scene, read_lfr, rgb_to_ycbcr, write_lfr, ycbcr_to_rgb)
from .metrics import evaluate_many
from .model import ABLATIONS, DptConfig, DptModel, count_params, estimate_flops
from .rng import stream
from .train import TrainConfig, evaluate_bicubic, predict, run_ablation, sweep_k, train

log = logging.getLogger("lfdpt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

MODEL_KEYS = {"a", "channels", "k", "alpha", "n_imdb", "imdb_channels", "ablation",
              "salsa.patch", "salsa.stride", "salsa.scaled", "salsa.tokenizer",
              "salsa.qkv_bias"}
TRAIN_KEYS = {"lr0", "halve_every", "epochs", "batch", "patch", "max_steps", "augment"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- configuration -----------------------------------------------------------

def resolve_items(args) -> dict[str, str]:
    """Config file entries overridden by explicitly given flags."""
    items: dict[str, str] = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        items.update(parse_items(path.read_text(), str(path)))
    for key in sorted(MODEL_KEYS | TRAIN_KEYS):
        value = getattr(args, key.replace(".", "_"), None)
        if value is not None:
            items[key] = str(value).lower() if isinstance(value, bool) else str(value)
    for entry in args.set or []:
        if "=" not in entry:
            raise UsageError(f"--set expects key=value, got {entry!r}")
        k, v = entry.split("=", 1)
        items[k.strip()] = v.strip()
    unknown = set(items) - MODEL_KEYS - TRAIN_KEYS
    if unknown:
        raise UsageError(f"unknown configuration keys: {sorted(unknown)}")
    return items


def model_config(items: dict[str, str]) -> DptConfig:
    return DptConfig.from_items({k: v for k, v in items.items() if k in MODEL_KEYS})


def train_config(items: dict[str, str], seed: int, alpha: int) -> TrainConfig:
    base = TrainConfig()
    try:
        max_steps = items.get("max_steps")
        augment = items.get("augment", str(base.augment)).lower()
        if augment not in ("true", "false"):
            raise ConfigurationError(f"augment must be true or false, got {augment!r}")
        return TrainConfig(
            lr0=float(items.get("lr0", base.lr0)),
            halve_every=int(items.get("halve_every", base.halve_every)),
            epochs=int(items.get("epochs", base.epochs)),
            batch=int(items.get("batch", base.batch)),
            seed=seed, alpha=alpha,
            patch=int(items.get("patch", base.patch)),
            max_steps=None if max_steps in (None, "", "none") else int(max_steps),
            augment=augment == "true",
        )
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad training configuration: {exc}") from exc


def write_manifest(out_dir: Path, command: str, seed: int, items: dict[str, str],
                   artifacts: list[Path], started: float) -> None:
    entries = {"command": command, "seed": str(seed)}
    entries.update({f"config.{k}": v for k, v in sorted(items.items())})
    entries["artifacts"] = ",".join(str(p.relative_to(out_dir)) for p in artifacts)
    entries["wall_time_s"] = f"{time.time() - started:.3f}"
    (out_dir / "manifest.txt").write_text(format_items(entries))


# -- data helpers --------------------------------------------------------------

def to_luma(lf: np.ndarray) -> np.ndarray:
    if lf.shape[2] == 1:
        return lf
    if lf.shape[2] == 3:
        return rgb_to_ycbcr(lf)[:, :, :1]
    raise DimensionError(f"fields must have 1 or 3 channels, got {lf.shape[2]}")


def load_scenes(data_dir) -> list[tuple[np.ndarray, np.ndarray]]:
    """(HR, LR) luma pairs from ``scene_*_hr.lfr`` / ``scene_*_lr.lfr`` files."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"dataset directory {data_dir} not found")
    hr_files = sorted(data_dir.glob("scene_*_hr.lfr"))
    if not hr_files:
        raise FormatError(f"{data_dir}: no scene_*_hr.lfr files")
    pairs = []
    for hr_path in hr_files:
        lr_path = hr_path.with_name(hr_path.name.replace("_hr.lfr", "_lr.lfr"))
        if not lr_path.is_file():
            raise FormatError(f"{hr_path} has no LR partner {lr_path.name}")
        pairs.append((to_luma(read_lfr(hr_path)), to_luma(read_lfr(lr_path))))
    shapes = {(hr.shape, lr.shape) for hr, lr in pairs}
    if len(shapes) != 1:
        raise DimensionError(f"{data_dir}: scenes disagree in shape: {sorted(shapes)}")
    return pairs


def data_geometry(pairs) -> tuple[int, int]:
    hr, lr = pairs[0]
    if hr.shape[0] != hr.shape[1]:
        raise DimensionError(f"angular grid must be square, got {hr.shape[:2]}")
    alpha = hr.shape[3] // lr.shape[3]
    if alpha * lr.shape[3] != hr.shape[3] or alpha * lr.shape[4] != hr.shape[4]:
        raise DimensionError(f"HR {hr.shape} and LR {lr.shape} are not an integer pair")
    return hr.shape[0], alpha


def fit_items_to_data(items: dict[str, str], pairs) -> dict[str, str]:
    """Fill A and alpha from the data; reject explicit values that disagree."""
    a, alpha = data_geometry(pairs)
    items = dict(items)
    for key, value in (("a", a), ("alpha", alpha)):
        if key in items and int(items[key]) != value:
            raise ConfigurationError(f"config {key}={items[key]} but the data has {key}={value}")
        items[key] = str(value)
    return items


def training_patches(pairs, patch: int):
    out = []
    for hr, lr in pairs:
        out.extend(crop_patches(hr, lr, patch))
    return out


# -- commands ----------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    if args.alpha not in (2, 4):
        raise UsageError(f"--alpha must be 2 or 4, got {args.alpha}")
    if args.scenes < 1 or args.a < 1 or args.hw < 1:
        raise UsageError("--scenes, --a and --hw must be positive")
    if args.hw % args.alpha:
        raise UsageError(f"--hw {args.hw} is not divisible by alpha {args.alpha}")
    if args.channels not in (1, 3):
        raise UsageError("--channels must be 1 or 3")
    started = time.time()
    rng = stream(args.seed, "data")
    scenes = []
    for _ in range(args.scenes):
        disparity = float(rng.uniform(-args.max_disparity, args.max_disparity))
        scenes.append(SyntheticScene(disparity=disparity, seed=int(rng.integers(2**31))))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, scene in enumerate(scenes):
        hr, lr = generate_scene(scene, args.a, args.channels, args.hw, args.hw, args.alpha)
        for tag, lf in (("hr", hr), ("lr", lr)):
            p = out / f"scene_{i:03d}_{tag}.lfr"
            write_lfr(p, lf)
            written.append(p)
        log.info("scene %d: disparity %.4f, seed %d", i, scene.disparity, scene.seed)
    items = {"scenes": str(args.scenes), "a": str(args.a), "hw": str(args.hw),
             "alpha": str(args.alpha), "channels": str(args.channels),
             "max_disparity": repr(args.max_disparity)}
    write_manifest(out, "gen-data", args.seed, items, written, started)
    print(f"wrote {len(written)} files to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    items = resolve_items(args)
    pairs = load_scenes(args.data)
    items = fit_items_to_data(items, pairs)
    mcfg = model_config(items)
    tcfg = train_config(items, args.seed, mcfg.alpha)
    patches = training_patches(pairs, tcfg.patch)
    model = DptModel(mcfg, seed=args.seed)
    log.info("training %s on %d patches, %d parameters", mcfg.ablation, len(patches),
             count_params(model))
    result = train(model, patches, tcfg,
                   on_step=lambda s, e, lr, loss: log.debug("step %d loss %.6f", s, loss))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = save_checkpoint(model, out / "checkpoint")
    loss_log = out / "loss.tsv"
    loss_log.write_text("step\tepoch\tlr\tloss\n" + "".join(
        f"{s}\t{e}\t{lr!r}\t{loss!r}\n" for s, e, lr, loss in result.steps))
    write_manifest(out, "train", args.seed, items, [ckpt, loss_log], started)
    final = result.steps[-1][3] if result.steps else float("nan")
    print(f"steps\t{len(result.steps)}\nfinal_loss\t{final:.6f}\nparams\t{count_params(model)}")
    return EXIT_OK


def cmd_sr(args) -> int:
    started = time.time()
    if args.baseline is None and args.checkpoint is None:
        raise UsageError("sr needs --checkpoint or --baseline bicubic")
    if args.alpha not in (2, 4):
        raise UsageError(f"--alpha must be 2 or 4, got {args.alpha}")
    field = read_lfr(args.input)
    if field.shape[2] not in (1, 3):
        raise DimensionError(f"input must have 1 or 3 channels, got {field.shape[2]}")
    ycc = rgb_to_ycbcr(field) if field.shape[2] == 3 else field
    luma = ycc[:, :, :1]
    if args.baseline == "bicubic":
        alpha = args.alpha
        sr_luma = bicubic_resize(luma, alpha)
    else:
        model = load_checkpoint(args.checkpoint)
        alpha = model.config.alpha
        sr_luma = predict(model, luma)
    if field.shape[2] == 3:
        chroma = bicubic_resize(ycc[:, :, 1:], alpha)
        result = np.clip(ycbcr_to_rgb(np.concatenate([sr_luma, chroma], axis=2)), 0.0, 1.0)
    else:
        result = sr_luma
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    out_path = out / args.output
    write_lfr(out_path, result)
    artifacts = [out_path]
    if args.pgm:
        artifacts += export_pgm(np.clip(sr_luma, 0.0, 1.0), out / "pgm")
    items = {"input": str(args.input), "baseline": str(args.baseline),
             "checkpoint": str(args.checkpoint), "alpha": str(alpha)}
    write_manifest(out, "sr", args.seed, items, artifacts, started)
    print(f"wrote {out_path} with shape {'x'.join(map(str, result.shape))}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if len(args.pred) != len(args.truth):
        raise UsageError("--pred and --truth need the same number of files")
    preds = [to_luma(read_lfr(p)) for p in args.pred]
    truths = [to_luma(read_lfr(p)) for p in args.truth]
    for p, t, name in zip(preds, truths, args.pred):
        if p.shape != t.shape:
            raise DimensionError(f"{name}: prediction {p.shape} and truth {t.shape} differ")
    report = evaluate_many(preds, truths)
    sys.stdout.write(report.to_tsv())
    print(f"# mean_psnr={report.mean_psnr:.6f} mean_ssim={report.mean_ssim:.6f} "
          f"n_views={report.n_views}")
    return EXIT_OK


def parse_shape(text: str) -> tuple[int, int, int, int]:
    try:
        dims = tuple(int(t) for t in text.lower().replace("x", ",").split(","))
    except ValueError:
        raise UsageError(f"--shape expects AxAxHxW, got {text!r}") from None
    if len(dims) != 4 or dims[0] != dims[1] or min(dims) < 1:
        raise UsageError(f"--shape expects AxAxHxW with a square grid, got {text!r}")
    return dims


def cmd_count_params(args) -> int:
    a, _, h, w = parse_shape(args.shape)
    items = resolve_items(args)
    items.setdefault("a", str(a))
    model = DptModel(model_config(items), seed=args.seed)
    macs = estimate_flops(model, a, h, w)
    print("params\tmacs\tgmacs\tshape")
    print(f"{count_params(model)}\t{macs}\t{macs / 1e9:.4f}\t{a}x{a}x{h}x{w}")
    return EXIT_OK


def _experiment_inputs(args):
    items = resolve_items(args)
    pairs = load_scenes(args.data)
    items = fit_items_to_data(items, pairs)
    eval_pairs = load_scenes(args.eval_data) if args.eval_data else pairs
    if data_geometry(eval_pairs) != data_geometry(pairs):
        raise DimensionError("evaluation data geometry differs from training data")
    mcfg = model_config(items)
    tcfg = train_config(items, args.seed, mcfg.alpha)
    return items, mcfg, tcfg, training_patches(pairs, tcfg.patch), eval_pairs


def _print_results(label: str, results, baseline) -> None:
    print(f"{label}\tparams\tpsnr\tssim\tfinal_loss")
    print(f"bicubic\t0\t{baseline.mean_psnr:.4f}\t{baseline.mean_ssim:.4f}\t-")
    for r in results:
        print(f"{r.name}\t{r.params}\t{r.report.mean_psnr:.4f}\t{r.report.mean_ssim:.4f}\t"
              f"{r.final_loss:.6f}")


def cmd_ablate(args) -> int:
    variants = args.variants.split(",") if args.variants else list(ABLATIONS)
    bad = [v for v in variants if v not in ABLATIONS]
    if bad:
        raise UsageError(f"unknown variants {bad}; choose from {list(ABLATIONS)}")
    _, mcfg, tcfg, patches, eval_pairs = _experiment_inputs(args)
    results = run_ablation(variants, patches, eval_pairs, mcfg, tcfg)
    _print_results("variant", results, evaluate_bicubic(eval_pairs, mcfg.alpha))
    return EXIT_OK


def cmd_sweep_k(args) -> int:
    try:
        values = [int(v) for v in args.values.split(",")]
    except ValueError:
        raise UsageError(f"--values expects comma-separated integers, got {args.values!r}") from None
    if any(v not in (1, 2, 3, 4) for v in values):
        raise UsageError(f"K values must lie in 1..4, got {values}")
    _, mcfg, tcfg, patches, eval_pairs = _experiment_inputs(args)
    results = sweep_k(values, patches, eval_pairs, mcfg, tcfg)
    _print_results("k", results, evaluate_bicubic(eval_pairs, mcfg.alpha))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def _add_common(p) -> None:
    p.add_argument("--seed", type=int, default=0, help="root seed for all random streams")
    p.add_argument("--config", help="key=value configuration file; flags win")
    p.add_argument("--out-dir", default="out", help="directory for outputs and the run manifest")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _add_model_flags(p) -> None:
    p.add_argument("--channels", type=int)
    p.add_argument("--k", type=int, help="attention blocks per transformer")
    p.add_argument("--n-imdb", dest="n_imdb", type=int)
    p.add_argument("--imdb-channels", dest="imdb_channels", type=int)
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="any model/training key, e.g. salsa.stride=4,4")


def _add_train_flags(p) -> None:
    p.add_argument("--data", required=True, help="directory produced by gen-data")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--patch", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lfdpt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="render synthetic HR/LR light-field pairs")
    _add_common(p)
    p.add_argument("--scenes", type=int, default=4)
    p.add_argument("--a", type=int, default=3, help="angular extent A")
    p.add_argument("--hw", type=int, default=64, help="HR spatial extent")
    p.add_argument("--alpha", type=int, default=2)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--max-disparity", dest="max_disparity", type=float, default=1.0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint and loss log")
    _add_common(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sr", help="super-resolve one LFR file")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", choices=["bicubic"])
    p.add_argument("--alpha", type=int, default=2, help="factor for --baseline bicubic")
    p.add_argument("--output", default="sr.lfr")
    p.add_argument("--pgm", action="store_true", help="also export per-view 16-bit PGMs")
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("eval", help="per-view PSNR/SSIM of predictions against truth")
    _add_common(p)
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--truth", nargs="+", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("count-params", help="parameter count and forward MACs")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--shape", default="5x5x32x32", help="input shape AxAxHxW")
    p.set_defaults(func=cmd_count_params)

    for name, func, helptext in (("ablate", cmd_ablate, "train and score ablation variants"),
                                 ("sweep-k", cmd_sweep_k, "train and score several K")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        _add_model_flags(p)
        _add_train_flags(p)
        p.add_argument("--eval-data", dest="eval_data", help="held-out scenes (default: --data)")
        if name == "ablate":
            p.add_argument("--variants", help="comma-separated subset of variants")
        else:
            p.add_argument("--values", default="1,2,3,4")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"lfdpt: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
                        force=True)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (FormatError, DimensionError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except DptError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
