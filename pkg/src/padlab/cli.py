"""Command-line surface.

Exit codes: 0 success, 1 usage/config errors, 2 data errors, 3 numeric or
divergence errors. Every command writes identical bytes when re-run with
identical inputs (the wall_seconds run-log column is the one documented
exception and is excluded from determinism checks).
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import sys
from pathlib import Path

from . import stats
from .cost import COST_FAMILIES, cost_table
from .data import (AugmentConfig, EvalAugment, TrainAugment, gen_border_task,
                   load_cifar_binary, save_cifar_binary)
from .errors import (ConfigError, DataError, NumericError, PadlabError,
                     TrainingDivergedError)
from .models import FAMILIES, ModelSpec, build_model, normalize_family
from .nn import PaddingMode
from .rng import Rng
from .training import (Checkpoint, RunLog, TrainConfig, evaluate, run_dir,
                       save_run, split_train_val, train_run)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# experiment config

_DATASET_KEYS = {
    "border": {"kind", "n", "size", "seed", "val_fraction"},
    "cifar-binary": {"kind", "train_path", "val_path"},
}
_TRAIN_KEYS = {"base_lr", "momentum", "weight_decay", "epochs", "lr_step",
               "lr_gamma", "batch_size", "seeds", "early_stop_top1"}
_TOP_KEYS = {"arch", "pad_channel", "num_classes", "input_size",
             "input_channels", "padding_mode", "dataset", "train", "augment",
             "out_dir"}
_AUG_TOP = {"train", "eval", "normalize_mean", "normalize_std"}
_AUG_TRAIN = {"random_resized_crop_size", "horizontal_flip_prob", "scale", "aspect"}
_AUG_EVAL = {"resize_size", "center_crop_size"}


def _reject_unknown(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


class Experiment:
    """Validated experiment config: model spec, train config, dataset recipe."""

    def __init__(self, raw: dict):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _reject_unknown(raw, _TOP_KEYS, "config")
        for key in ("arch", "dataset"):
            if key not in raw:
                raise ConfigError(f"config needs {key!r}")
        ds = raw["dataset"]
        if not isinstance(ds, dict) or "kind" not in ds:
            raise ConfigError("dataset needs a 'kind'")
        if ds["kind"] not in _DATASET_KEYS:
            raise ConfigError(f"unknown dataset kind {ds['kind']!r}")
        _reject_unknown(ds, _DATASET_KEYS[ds["kind"]], f"dataset.{ds['kind']}")
        if ds["kind"] == "border":
            for key in ("n", "size", "seed"):
                if key not in ds:
                    raise ConfigError(f"border dataset needs {key!r}")
        else:
            for key in ("train_path", "val_path"):
                if key not in ds:
                    raise ConfigError(f"cifar-binary dataset needs {key!r}")
        self.dataset = ds

        default_classes = 2 if ds["kind"] == "border" else 10
        try:
            mode = PaddingMode(raw.get("padding_mode", "zero"))
        except ValueError:
            raise ConfigError(f"unknown padding_mode {raw.get('padding_mode')!r}")
        self.spec = ModelSpec(
            family=raw["arch"],
            pad_channel=bool(raw.get("pad_channel", False)),
            num_classes=int(raw.get("num_classes", default_classes)),
            input_channels=int(raw.get("input_channels", 3)),
            input_size=int(raw.get("input_size",
                                   ds.get("size", 32) if ds["kind"] == "border" else 32)),
            padding_mode=mode,
        )

        tr = raw.get("train", {})
        _reject_unknown(tr, _TRAIN_KEYS, "train")
        if "seeds" in tr:
            tr = dict(tr, seeds=tuple(int(s) for s in tr["seeds"]))
        self.train_cfg = TrainConfig(**tr)

        self.augment = self._parse_augment(raw.get("augment"))
        self.out_dir = raw.get("out_dir", "runs")

    def _parse_augment(self, raw):
        if raw is None:
            return None
        _reject_unknown(raw, _AUG_TOP, "augment")
        if "train" not in raw or "eval" not in raw:
            raise ConfigError("augment needs both 'train' and 'eval'")
        _reject_unknown(raw["train"], _AUG_TRAIN, "augment.train")
        _reject_unknown(raw["eval"], _AUG_EVAL, "augment.eval")
        ta = dict(raw["train"])
        for key in ("scale", "aspect"):
            if key in ta:
                ta[key] = tuple(float(v) for v in ta[key])
        return AugmentConfig(
            train=TrainAugment(**ta),
            eval=EvalAugment(**raw["eval"]),
            normalize_mean=tuple(raw.get("normalize_mean", (0.0, 0.0, 0.0))),
            normalize_std=tuple(raw.get("normalize_std", (1.0, 1.0, 1.0))),
        )

    def load_datasets(self):
        ds = self.dataset
        if ds["kind"] == "border":
            images = gen_border_task(int(ds["n"]), int(ds["size"]),
                                     Rng(int(ds["seed"])))
            return split_train_val(images, float(ds.get("val_fraction", 0.2)))
        train = load_cifar_binary(ds["train_path"])
        val = load_cifar_binary(ds["val_path"])
        return train, val


def load_experiment(path) -> Experiment:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    return Experiment(raw)


# ---------------------------------------------------------------------------
# commands

def cmd_cost(args) -> int:
    if not args.all and not args.arch:
        raise ConfigError("need --arch or --all")
    families = COST_FAMILIES if args.all else (args.arch,)
    if not args.all:
        if normalize_family(args.arch) not in FAMILIES:
            raise ConfigError(f"unknown arch {args.arch!r}; known: {FAMILIES}")
    report = cost_table(families, args.input_size, args.num_classes)
    if args.pad_channel:
        report.rows = [r for r in report.rows if r.variant == "pc"]
    text = report.to_csv() if args.format == "csv" else report.to_text()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _parse_seeds(expr: str):
    if ".." in expr:
        lo, hi = expr.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in expr.split(",") if s != ""]


def _run_one_seed(config_path: str, seed: int) -> dict:
    exp = load_experiment(config_path)
    train_images, val_images = exp.load_datasets()
    try:
        log, best, _ = train_run(exp.spec, exp.train_cfg, train_images,
                                 val_images, seed, exp.augment)
    except TrainingDivergedError as exc:
        partial = getattr(exc, "runlog", None)
        if partial is not None and partial.records:
            d = run_dir(exp.out_dir, partial.spec_id, seed)
            d.mkdir(parents=True, exist_ok=True)
            (d / "runlog.csv").write_text(partial.to_csv())
        raise
    d = save_run(exp.out_dir, log, best)
    return {"seed": seed, "dir": str(d), "best_epoch": best.epoch,
            "best_top1": best.val_top1, "epochs": len(log.records)}


def cmd_train(args) -> int:
    exp = load_experiment(args.config)
    if args.seed is not None:
        seeds = [args.seed]
    elif args.seeds is not None:
        seeds = _parse_seeds(args.seeds)
    else:
        seeds = list(exp.train_cfg.seeds)
    results = []
    if args.parallel and len(seeds) > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=args.parallel) as pool:
            futures = [pool.submit(_run_one_seed, args.config, s) for s in seeds]
            results = [f.result() for f in futures]
    else:
        for s in seeds:
            results.append(_run_one_seed(args.config, s))
    for r in results:
        print(f"seed {r['seed']}: best top-1 {r['best_top1']:.3f} "
              f"at epoch {r['best_epoch']} ({r['epochs']} epochs) -> {r['dir']}")
    return 0


def cmd_eval(args) -> int:
    exp = load_experiment(args.config)
    model = build_model(exp.spec, Rng(0))
    ckpt = Checkpoint.load(args.checkpoint)
    ckpt.apply_to(model)
    _, val_images = exp.load_datasets()
    top1 = evaluate(model, val_images, exp.augment)
    print(f"val top-1 {top1!r} (checkpoint recorded {ckpt.val_top1!r} "
          f"at epoch {ckpt.epoch})")
    return 0


def _best_top1_from_glob(pattern: str) -> list[tuple[str, float]]:
    paths = sorted(globmod.glob(pattern, recursive=True))
    out = []
    for p in paths:
        log = RunLog.from_csv(Path(p).read_text())
        out.append((log.spec_id, log.best_top1()))
    return out


def cmd_compare(args) -> int:
    if args.fixture:
        groups = stats.load_reference_runs()
    else:
        if not args.runs_a or not args.runs_b:
            raise ConfigError("need --runs-a and --runs-b globs (or --fixture)")
        side_a = _best_top1_from_glob(args.runs_a)
        side_b = _best_top1_from_glob(args.runs_b)
        if len(side_a) < 2 or len(side_b) < 2:
            raise ConfigError(
                f"need at least 2 runs per side, got {len(side_a)} and {len(side_b)}")
        ids_a = {s for s, _ in side_a}
        ids_b = {s for s, _ in side_b}
        if len(ids_a) == 1 and len(ids_b) == 1:
            a, b = ids_a.pop(), ids_b.pop()
            label = a if b == a + "-pc" else f"{a}-vs-{b}"
        else:
            label = "runs"
        groups = [stats.RunGroup(label, "base", [v for _, v in side_a]),
                  stats.RunGroup(label, "pc", [v for _, v in side_b])]
    report = stats.summarize(groups, use_welch=args.welch)
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).with_suffix(".csv").write_text(report.to_csv())
        if args.svg:
            base = Path(args.out)
            base.with_name(base.stem + "_means.svg").write_text(
                stats.bar_chart_svg(report, "mean"))
            base.with_name(base.stem + "_stdevs.svg").write_text(
                stats.bar_chart_svg(report, "stdev"))
    return 0


def cmd_gen_data(args) -> int:
    if args.task != "border":
        raise ConfigError(f"unknown task {args.task!r}")
    if args.size != 32:
        raise ConfigError("the binary record layout stores 32x32 images")
    images = gen_border_task(args.n, args.size, Rng(args.seed))
    save_cifar_binary(images, args.out)
    ones = sum(img.label for img in images)
    print(f"wrote {len(images)} records to {args.out} "
          f"({ones} boundary-positive)")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck_suite import run_suite
    results = run_suite(trials=args.trials)
    worst_overall = 0.0
    for name, worst in results:
        flag = "ok" if worst < 1e-4 else "FAIL"
        print(f"{name:<40} max rel err {worst:.3e}  {flag}")
        worst_overall = max(worst_overall, worst)
    if worst_overall >= 1e-4:
        print(f"worst {worst_overall:.3e} exceeds 1e-4")
        return 3
    print(f"all layers pass at 1e-4 (worst {worst_overall:.3e})")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> _Parser:
    parser = _Parser(prog="padlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cost", help="parameter/MAC cost tables")
    p.add_argument("--arch", help=f"one of {', '.join(FAMILIES)}")
    p.add_argument("--all", action="store_true",
                   help="all four full-size families")
    p.add_argument("--pad-channel", action="store_true",
                   help="print only the pad-channel rows")
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--num-classes", type=int, default=1000)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out", help="also write the table to this file")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("train", help="run seeded training from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="comma list or lo..hi range")
    p.add_argument("--parallel", type=int, default=0,
                   help="run seeds concurrently with this many processes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the config's val set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="two-group comparison of best top-1")
    p.add_argument("--runs-a", help="glob of baseline runlog.csv files")
    p.add_argument("--runs-b", help="glob of treated runlog.csv files")
    p.add_argument("--fixture", action="store_true",
                   help="use the committed reference run fixture")
    p.add_argument("--welch", action="store_true",
                   help="Welch test instead of pooled variance")
    p.add_argument("--out", help="output path stem for CSV (and SVG)")
    p.add_argument("--svg", action="store_true", help="also write bar charts")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    p.add_argument("--task", default="border")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gradcheck", help="finite-difference checks per layer")
    p.add_argument("--trials", type=int, default=3)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        code = args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, PadlabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
