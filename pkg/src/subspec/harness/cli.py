"""Command line interface.

    subspec [--config PATH] [--seed N] [--out DIR] [--threads N] COMMAND ...

Commands: extract, train, evaluate, sweep, fusion-curve, gen-toy, arch.
Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..crnn import CrnnModel
from ..dsp import BandScheme
from ..errors import ConfigError, SubspecError
from . import pipeline
from .config import ExperimentConfig
from .reports import write_architecture
from .toy import generate_toy_dataset

log = logging.getLogger("subspec")

# inner cut points (kHz) of the N_ss sweep; f_L = 0 and f_H = 22.05 kHz
TABLE1_SCHEMES = [(), (10,), (6, 10), (3, 6, 10), (3, 6, 10, 15), (3, 6, 10, 13, 16)]


def _parse_khz_list(text: str) -> tuple[float, ...]:
    text = text.strip()
    if text in ("", "-"):
        return ()
    return tuple(float(v) for v in text.split(","))


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.with_(training=replace(cfg.training, seed=args.seed))
    if args.out is not None:
        cfg = cfg.with_(output_dir=str(args.out))
    return cfg


def _threads(n):
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def cmd_extract(args):
    cfg = _load_config(args)
    summary = pipeline.run_extract(cfg)
    for i, path in enumerate(summary.cache_files):
        state = "written" if i in summary.computed_bands else "up to date"
        print(f"band {i}: {path} ({state})")


def cmd_train(args):
    cfg = _load_config(args)
    summary = pipeline.run_train(cfg)
    for path in summary.checkpoints:
        print(path)


def cmd_evaluate(args):
    cfg = _load_config(args)
    weights = _parse_khz_list(args.weights) if args.weights else None
    result = pipeline.run_evaluate(cfg, weights=weights or None)
    for f in result.folds:
        print(f"fold {f.test_fold}: weights {f.weights.label()} accuracy {f.accuracy:.4f} "
              f"(uniform {f.uniform_accuracy:.4f}, bands {', '.join(f'{a:.4f}' for a in f.band_accuracies)})")
    print(f"mean accuracy {result.row.mean_accuracy:.4f} -> {result.report_path}")


def cmd_sweep(args):
    cfg = _load_config(args)
    if args.schemes:
        inner = [_parse_khz_list(s) for s in args.schemes]
    else:
        inner = TABLE1_SCHEMES
    f_h = cfg.spectrogram.nyquist_hz / 1000
    schemes = [BandScheme.from_khz(0, s, f_h) for s in inner]
    networks = ("cnn", "crnn") if args.ablation else (cfg.training.network,)
    mixup = (False, True) if args.ablation else (cfg.mixup.enabled,)
    fusion = (False, True) if args.ablation else (True,)
    result = pipeline.run_sweep(cfg, schemes, networks=networks, mixup=mixup, fusion=fusion)
    for name, path in result.paths.items():
        print(f"{name}: {path}")
    failed = [r for r in result.rows if r.status != "ok"]
    if failed:
        print(f"{len(failed)} sweep entries failed; see status column", file=sys.stderr)
        return 2
    return 0


def cmd_fusion_curve(args):
    cfg = _load_config(args)
    curve, path = pipeline.run_fusion_curve(cfg)
    for w1, acc in curve:
        print(f"{w1:.1f} {acc:.4f}")
    print(path)


def cmd_gen_toy(args):
    paths = generate_toy_dataset(args.dir, seed=args.seed or 0, low_only=args.low_only,
                                 clips_per_class=args.clips_per_class)
    print(f"wrote {len(paths)} clips to {args.dir}")


def cmd_arch(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    model = CrnnModel(args.classes)
    write_architecture(out / "table2.csv", model)
    for name, shape in model.table_shapes():
        print(f"{name:6s} {shape}")
    print(f"parameters: {model.param_count()}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subspec", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--threads", type=int, default=0, help="BLAS thread limit (0 = library default)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("extract", help="compute per-band feature caches").set_defaults(func=cmd_extract)
    sub.add_parser("train", help="train one branch per band and fold").set_defaults(func=cmd_train)
    ev = sub.add_parser("evaluate", help="fuse branch scores and report accuracy")
    ev.add_argument("--weights", help="explicit fusion weights, e.g. 0.4,0.2,0.2,0.2")
    ev.set_defaults(func=cmd_evaluate)
    sw = sub.add_parser("sweep", help="run extract/train/evaluate over band schemes")
    sw.add_argument("--scheme", dest="schemes", action="append",
                    help="inner cut points in kHz, e.g. 3,6,10 ('-' for the whole band); repeatable")
    sw.add_argument("--ablation", action="store_true",
                    help="also vary network (cnn/crnn), mixup and fusion")
    sw.set_defaults(func=cmd_sweep)
    sub.add_parser("fusion-curve", help="accuracy against the first band's weight (2 bands)").set_defaults(
        func=cmd_fusion_curve)
    gt = sub.add_parser("gen-toy", help="write the synthetic mini-ESC dataset")
    gt.add_argument("dir")
    gt.add_argument("--low-only", action="store_true", help="confine all class content below 8 kHz")
    gt.add_argument("--clips-per-class", type=int, default=40)
    gt.set_defaults(func=cmd_gen_toy)
    ar = sub.add_parser("arch", help="print layer output sizes and write table2.csv")
    ar.add_argument("--classes", type=int, default=50)
    ar.set_defaults(func=cmd_arch)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _threads(args.threads):
            return args.func(args) or 0
    except SubspecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
