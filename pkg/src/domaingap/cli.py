"""Command-line front end.

Exit status: 0 on success, 1 on a usage error (usage text on stderr), 2 on a
data or configuration error (one ``error: ...`` line on stderr).  Every
subcommand resolves and validates all of its inputs before computing anything.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cyclegan as cg
from . import segnet as sn
from . import toydata
from .config import RunConfig, load_config
from .dataset import Dataset, DatasetRef, available_indices, write_manifest, write_pair
from .exceptions import ConfigError, DatasetError, DomainGapError
from .features import FEATURE_NAMES, gap_report
from .imgproc import CropRect, crop_pair, resample_bilinear, resample_nearest
from .parallel import worker_count
from .segmetrics import write_reports

log = logging.getLogger("domaingap")

# the empirical-style toy set uses its own geometry stream
EMPIRICAL_SEED_OFFSET = 7919


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    # defaults are suppressed so a flag given before the subcommand is not reset by it
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base random seed (default 0)")
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file (schema in domaingap.config)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="domaingap", description="Measure and reduce the synthetic-to-empirical domain gap.",
                     parents=[common])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def group(name, help_):
        p = sub.add_parser(name, help=help_)
        g = p.add_subparsers(dest="action", metavar="ACTION", parser_class=_Parser)
        g.required = True
        return g

    toy = group("toydata", "procedural two-domain toy data")
    p = toy.add_parser("gen", help="generate one toy set", parents=[common])
    p.add_argument("--style", choices=toydata.STYLES, default="X_clean")
    p.add_argument("--n", type=int, default=None, help="number of images (config toydata.n)")
    p.add_argument("--size", type=int, default=None, help="image side (config toydata.image_size)")

    p = sub.add_parser("preprocess", help="centre-crop and resample a dataset", parents=[common])
    p.add_argument("--input", required=True, help="dataset directory")
    p.add_argument("--size", type=int, required=True, help="output side length")
    p.add_argument("--crop", type=int, default=None, help="square centre crop applied before resampling")

    gap = group("gap", "colour and texture gap between image sets")
    p = gap.add_parser("report", help="hue correlations and Haralick features per class", parents=[common])
    p.add_argument("--set-a", required=True, help="first dataset directory")
    p.add_argument("--set-b", required=True, help="second dataset directory")
    p.add_argument("--set-c", default=None, help="optional third dataset directory")
    p.add_argument("--names", nargs="+", default=None, help="display names (default A B C)")
    p.add_argument("--n-images", type=int, default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--hue-mode", choices=("pooled", "mean"), default=None)
    p.add_argument("--classes", type=int, nargs="+", default=None, help="class ids to report (default all 8)")

    tr = group("translate", "cycle-consistent image translation")
    p = tr.add_parser("train", help="train the translator on two unpaired sets", parents=[common])
    p.add_argument("--x", required=True, help="source-domain dataset directory")
    p.add_argument("--y", required=True, help="target-domain dataset directory")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--preset", choices=("toy", "paper", "micro"), default=None,
                   help="network size preset (overrides config translator)")
    p = tr.add_parser("apply", help="translate a dataset, keeping its label maps", parents=[common])
    p.add_argument("--model", required=True, help="directory written by 'translate train'")
    p.add_argument("--input", required=True, help="dataset directory")
    p.add_argument("--direction", choices=("x_to_y", "y_to_x"), default="x_to_y")

    seg = group("seg", "segmentation network")
    p = seg.add_parser("train", help="train (and optionally fine-tune) the segmentation network", parents=[common])
    p.add_argument("--train", required=True, help="dataset reference, e.g. synthetic[1-80]")
    p.add_argument("--finetune", default=None, help="dataset reference for fine-tuning")
    p.add_argument("--dataset", action="append", default=[], metavar="NAME=DIR")
    p.add_argument("--iterations", type=int, default=None)
    p = seg.add_parser("eval", help="confusion matrix and IOU on a test set", parents=[common])
    p.add_argument("--model", required=True, help="segnet.dgck written by 'seg train'")
    p.add_argument("--test", required=True, help="dataset reference, e.g. empirical[41-50]")
    p.add_argument("--dataset", action="append", default=[], metavar="NAME=DIR")
    p.add_argument("--strict-L", "--strict-l", dest="strict_l", action="store_true",
                   help="average IOU over all classes, absent ones as 0")

    ex = group("experiment", "bootstrap / fine-tune / test schemes A-G")
    p = ex.add_parser("run", help="one scheme", parents=[common])
    p.add_argument("--scheme", required=True)
    p.add_argument("--dataset", action="append", default=[], metavar="NAME=DIR")
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--paper-ranges", action="store_true", help="use the full-size index ranges")
    p = ex.add_parser("all", help="every scheme, every seed", parents=[common])
    p.add_argument("--dataset", action="append", default=[], metavar="NAME=DIR")
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--paper-ranges", action="store_true", help="use the full-size index ranges")

    p = sub.add_parser("paper-pipeline", parents=[common],
                       help="toy data, gap before, translation, gap after, experiments A-G, summary")
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _out(args, default: str | None = None) -> Path:
    out = getattr(args, "out", None) or default
    if out is None:
        raise ConfigError("--out is required")
    return Path(out)


def _dataset_dir(path) -> Dataset:
    d = Dataset(path)
    if not d.indices:
        raise DatasetError(f"dataset {path} contains no images")
    return d


def _roots(args, cfg: RunConfig) -> dict[str, Path]:
    roots = {k: Path(v) for k, v in cfg.datasets.items()}
    for item in args.dataset:
        name, sep, path = item.partition("=")
        if not sep or not name:
            raise ConfigError(f"--dataset expects NAME=DIR, got {item!r}")
        roots[name] = Path(path)
    return roots


def _seeds(args, cfg: RunConfig) -> list[int]:
    return list(args.seeds) if args.seeds else cfg.resolved_seeds(args.seed)


def _copy_labels(src: Dataset, dst: Path) -> None:
    (dst / "label").mkdir(parents=True, exist_ok=True)
    for i in src.indices:
        p = src.label_path(i)
        if p.is_file():
            shutil.copyfile(p, dst / "label" / p.name)


# ---------------------------------------------------------------------------
# commands


def cmd_toydata_gen(args, cfg: RunConfig) -> None:
    td = cfg.toydata
    n = args.n if args.n is not None else td.n
    size = args.size if args.size is not None else td.image_size
    spec = replace(td, image_size=size).spec(args.seed, args.style)
    if n < 1:
        raise ConfigError("--n must be positive")
    toydata.generate(spec, n, _out(args))


def cmd_preprocess(args, cfg: RunConfig) -> None:
    src = _dataset_dir(args.input)
    out = _out(args)
    if args.size < 1 or (args.crop is not None and args.crop < 1):
        raise ConfigError("--size and --crop must be positive")
    if out.resolve() == src.root.resolve():
        raise ConfigError("--out must differ from --input")
    for i, (image, labels) in zip(src.indices, src.pairs()):
        if args.crop is not None:
            image, labels = crop_pair(image, labels, CropRect.centered(*labels.shape, args.crop))
        image = resample_bilinear(image, args.size, args.size)
        labels = resample_nearest(labels, args.size, args.size)
        write_pair(out, i, image, labels)
    write_manifest(out, {"source": str(src.root), "crop": args.crop, "size": args.size, "n": len(src)})


def cmd_gap_report(args, cfg: RunConfig) -> None:
    paths = [args.set_a, args.set_b] + ([args.set_c] if args.set_c else [])
    names = args.names or ["A", "B", "C"][: len(paths)]
    if len(names) != len(paths) or len(set(names)) != len(names):
        raise ConfigError("--names must give one distinct name per set")
    n_images = args.n_images if args.n_images is not None else cfg.gap.n_images
    levels = args.levels if args.levels is not None else cfg.gap.levels
    hue_mode = args.hue_mode or cfg.gap.hue_mode
    replace(cfg.gap, n_images=n_images, levels=levels, hue_mode=hue_mode).validate()
    sets = {name: _dataset_dir(p).head(n_images) for name, p in zip(names, paths)}
    gap_report(sets, n_images, levels, classes=args.classes, hue_mode=hue_mode).write(_out(args))


def _translator_cfg(args, cfg: RunConfig) -> cg.TranslatorConfig:
    base = cfg.translator
    if getattr(args, "preset", None):
        keep = {k: getattr(base, k) for k in ("iterations", "image_size", "checkpoint_every")}
        base = getattr(cg.TranslatorConfig, args.preset)(**(keep if args.preset != "micro" else {}))
    over = {"seed": args.seed}
    if getattr(args, "iterations", None) is not None:
        over["iterations"] = args.iterations
    return replace(base, **over).validate()


def train_translator_dir(x: Dataset, y: Dataset, tcfg: cg.TranslatorConfig, out: Path) -> cg.CycleGANTranslator:
    est = cg.CycleGANTranslator(**tcfg.to_dict())
    ckpt = out / "checkpoints" if tcfg.checkpoint_every else None
    est.fit(x.images(), y.images(), checkpoint_dir=ckpt)
    est.save(out)
    return est


def apply_translator_dir(est: cg.CycleGANTranslator, src: Dataset, out: Path, direction: str) -> Dataset:
    images = src.images()
    translated = est.transform(images) if direction == "x_to_y" else est.inverse_transform(images)
    for i, image in zip(src.indices, translated):
        write_pair(out, i, image, None)
    _copy_labels(src, out)
    write_manifest(out, {"source": str(src.root), "direction": direction, "n": len(src)})
    return Dataset(out)


def cmd_translate_train(args, cfg: RunConfig) -> None:
    tcfg = _translator_cfg(args, cfg)
    x, y = _dataset_dir(args.x), _dataset_dir(args.y)
    out = _out(args)
    train_translator_dir(x, y, tcfg, out)


def cmd_translate_apply(args, cfg: RunConfig) -> None:
    model = Path(args.model)
    if not (model / "translator.dgck").is_file():
        raise DatasetError(f"{model} holds no translator.dgck")
    src = _dataset_dir(args.input)
    out = _out(args)
    if out.resolve() == src.root.resolve():
        raise ConfigError("--out must differ from --input")
    apply_translator_dir(cg.CycleGANTranslator.load(model), src, out, args.direction)


def cmd_seg_train(args, cfg: RunConfig) -> None:
    roots = _roots(args, cfg)
    scfg = replace(cfg.segnet, seed=args.seed)
    if args.iterations is not None:
        scfg = replace(scfg, iterations=args.iterations)
    scfg.validate()
    train = Dataset.from_ref(args.train, roots)
    ft = Dataset.from_ref(args.finetune, roots) if args.finetune else None
    out = _out(args)
    pairs = list(train.pairs())
    net = sn.build_segnet(scfg, pairs[0][0].shape[0])
    curve = sn.train_segnet(net, pairs, scfg, stage=0)
    if ft is not None:
        curve += sn.train_segnet(net, ft, scfg, iterations=scfg.finetune_iterations, stage=1)
    out.mkdir(parents=True, exist_ok=True)
    sn.save_segnet(net, out / "segnet.dgck")
    (out / "loss_curve.csv").write_text("iteration,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(curve)))


def cmd_seg_eval(args, cfg: RunConfig) -> None:
    roots = _roots(args, cfg)
    model = Path(args.model)
    if not model.is_file():
        raise DatasetError(f"model file {model} does not exist")
    test = Dataset.from_ref(args.test, roots)
    out = _out(args)
    net = sn.load_segnet(model)
    cm, report = sn.evaluate(net, test)
    if args.strict_l:
        from .segmetrics import mean_iou

        report = mean_iou(cm, strict_l=True)
    write_reports(out, cm, report)


def cmd_experiment_run(args, cfg: RunConfig) -> None:
    table = sn.PAPER_SCHEMES if args.paper_ranges else sn.TOY_SCHEMES
    scheme = sn.get_scheme(args.scheme, table)
    roots = _roots(args, cfg)
    sn.check_scheme(scheme, roots)
    out = _out(args)
    results = sn.run_all([scheme.id], _seeds(args, cfg), cfg.segnet, roots, table)
    results.write(out / f"experiment_{scheme.id}.csv")


def cmd_experiment_all(args, cfg: RunConfig) -> None:
    table = sn.PAPER_SCHEMES if args.paper_ranges else sn.TOY_SCHEMES
    roots = _roots(args, cfg)
    schemes = [sn.get_scheme(s, table) for s in cfg.schemes]
    for s in schemes:
        sn.check_scheme(s, roots)
    out = _out(args)
    results = sn.run_all([s.id for s in schemes], _seeds(args, cfg), cfg.segnet, roots, table)
    results.write(out / "experiments.csv")


def run_pipeline(out: Path, cfg: RunConfig, seed: int, seeds: list[int]) -> dict:
    """Toy data, gap before, translation per seed, gap after, experiments, summary.

    Every file under ``out/reports`` is a deterministic function of the
    arguments.
    """
    cfg.validate()
    data, reports = out / "data", out / "reports"
    td = cfg.toydata
    syn_dir, emp_dir = data / "synthetic", data / "empirical"
    toydata.generate(td.spec(seed, "X_clean"), td.n, syn_dir)
    toydata.generate(td.spec(seed + EMPIRICAL_SEED_OFFSET, "Y_textured"), td.n, emp_dir)
    syn, emp = Dataset(syn_dir), Dataset(emp_dir)
    gcfg = cfg.gap
    n_gap = min(gcfg.n_images, td.n)

    pre = gap_report({"X": syn, "Y": emp}, n_gap, gcfg.levels, hue_mode=gcfg.hue_mode)
    pre.write(reports / "gap_pre")

    def seed_job(s):
        tcfg = replace(cfg.translator, seed=s)
        tdir = out / "translators" / f"seed{s}"
        est = train_translator_dir(syn, emp, tcfg, tdir)
        trans = apply_translator_dir(est, syn, data / f"translated_seed{s}", "x_to_y")
        post = gap_report({"X": syn, "T": trans, "Y": emp}, n_gap, gcfg.levels, hue_mode=gcfg.hue_mode)
        post.write(reports / f"gap_post_seed{s}")
        roots = {"synthetic": syn_dir, "empirical": emp_dir, "translated": trans.root}
        table = sn.run_all(list(cfg.schemes), [s], cfg.segnet, roots, workers=1)
        cyc = [r["cyc_xy"] for r in est.loss_history_]
        k = min(100, len(cyc))
        gap_x, gap_t = post.feature_gap("X", "Y"), post.feature_gap("T", "Y")
        return table, {
            "seed": s,
            "hue_correlation_XY": post.mean_correlation("X", "Y"),
            "hue_correlation_TY": post.mean_correlation("T", "Y"),
            "feature_gap_XY": gap_x,
            "feature_gap_TY": gap_t,
            "features_shrunk": [f for f in FEATURE_NAMES if gap_t[f] < gap_x[f]],
            "cycle_l1_first100": float(np.mean(cyc[:k])) if cyc else None,
            "cycle_l1_last100": float(np.mean(cyc[-k:])) if cyc else None,
            "scheme_mean_iou": {r.scheme: r.report.mean_iou for r in table.results},
        }

    with ThreadPoolExecutor(max_workers=min(worker_count(), len(seeds))) as pool:
        outcomes = list(pool.map(seed_job, seeds))

    results = sn.ResultsTable(sorted((r for t, _ in outcomes for r in t.results), key=lambda r: (r.scheme, r.seed)))
    results.write(reports / "experiments.csv")
    summary = {
        "seed": seed,
        "seeds": seeds,
        "config": cfg.to_dict(),
        "hue_correlation_XY_pre": pre.mean_correlation("X", "Y"),
        "per_seed": [o for _, o in outcomes],
        "scheme_means": {s: results.scheme_mean(s) for s in sorted({r.scheme for r in results.results})},
    }
    reports.mkdir(parents=True, exist_ok=True)
    (reports / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_paper_pipeline(args, cfg: RunConfig) -> None:
    out = _out(args)
    seeds = _seeds(args, cfg)
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory {out} is not empty")
    run_pipeline(out, cfg, args.seed, seeds)


COMMANDS = {
    ("toydata", "gen"): cmd_toydata_gen,
    ("preprocess", None): cmd_preprocess,
    ("gap", "report"): cmd_gap_report,
    ("translate", "train"): cmd_translate_train,
    ("translate", "apply"): cmd_translate_apply,
    ("seg", "train"): cmd_seg_train,
    ("seg", "eval"): cmd_seg_eval,
    ("experiment", "run"): cmd_experiment_run,
    ("experiment", "all"): cmd_experiment_all,
    ("paper-pipeline", None): cmd_paper_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    args.seed = getattr(args, "seed", 0)
    try:
        cfg = load_config(getattr(args, "config", None))
        COMMANDS[(args.command, getattr(args, "action", None))](args, cfg)
    except (DomainGapError, ValueError, OSError) as e:
        msg = " ".join(str(e).split())
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
