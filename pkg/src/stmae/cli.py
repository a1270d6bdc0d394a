"""Command-line entry point.

    stmae synth      --config configs/synthetic.json
    stmae cache-flow --config ...
    stmae pretrain   --config ...
    stmae train      --config ... [--pretrained PATH]
    stmae eval       --config ... [--checkpoint PATH] [--out DIR]
    stmae ablate     --config ... [--rows 1 2 3 4]
    stmae sweep      --config ... --set sweep.memory_items=[32]

Exit codes: 0 success, 2 configuration error, 3 runtime or numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import zipfile
from pathlib import Path

from .config import ConfigError, load_config, save_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

logger = logging.getLogger("stmae")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stmae", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="run config JSON")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, e.g. model.k_top=4 (value parsed as JSON)")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--run-dir", help="overrides the config run_dir")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    add("synth", "generate the synthetic benchmark described in the config").add_argument(
        "--force", action="store_true", help="regenerate even if the data exists")
    add("cache-flow", "precompute optical flow for train and test videos")
    add("pretrain", "pretrain the appearance and motion autoencoders")
    tr = add("train", "pretrain (cached) and train the full model")
    tr.add_argument("--pretrained", help="pretrain checkpoint to start from")
    ev = add("eval", "score test videos and report frame-level AUC")
    ev.add_argument("--checkpoint", help="main checkpoint (default <run_dir>/checkpoints/main.ckpt)")
    ev.add_argument("--out", help="output directory (default <run_dir>/eval)")
    ab = add("ablate", "run ablation rows")
    ab.add_argument("--rows", type=int, nargs="+")
    add("sweep", "memory size / top-k sensitivity sweep")
    return p


def _config(args):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.run_dir is not None:
        overrides.append(f"run_dir={json.dumps(args.run_dir)}")
    return load_config(args.config, overrides)


def run(args) -> int:
    from . import pipeline as pl
    from .flow import cache_flows, get_provider

    cfg = _config(args)
    Path(cfg.run_dir).mkdir(parents=True, exist_ok=True)
    if args.command != "eval":
        save_config(cfg, Path(cfg.run_dir) / "config.json")

    if args.command == "synth":
        if not cfg.synth:
            raise ConfigError("config has no 'synth' section")
        if args.force:
            for root in (cfg.data.train_root, cfg.data.test_root):
                shutil.rmtree(root, ignore_errors=True)
        pl.ensure_data(cfg)
        print(f"synthetic data under {cfg.data.train_root} and {cfg.data.test_root}")
    elif args.command == "cache-flow":
        pl.ensure_data(cfg)
        provider = get_provider(cfg.flow.input_provider)
        for split in ("train", "test"):
            for v in pl.load_split(cfg, split):
                cache_flows(v, provider, pl.flow_cache_dir(cfg))
        print(f"flows cached in {pl.flow_cache_dir(cfg)}")
    elif args.command == "pretrain":
        pl.ensure_data(cfg)
        print(pl.run_pretrain(cfg))
    elif args.command == "train":
        pl.ensure_data(cfg)
        train = pl.prepare_clips(pl.load_split(cfg, "train"), cfg.model.k_in,
                                 get_provider(cfg.flow.input_provider), pl.flow_cache_dir(cfg))
        pre = Path(args.pretrained) if args.pretrained else pl.run_pretrain(cfg, train)
        out = Path(cfg.run_dir) / "checkpoints" / "main.ckpt"
        pl.train_main(cfg, train, pre, out, pl.MetricsLog(Path(cfg.run_dir) / "metrics.csv"))
        print(out)
    elif args.command == "eval":
        ckpt_path = Path(args.checkpoint or Path(cfg.run_dir) / "checkpoints" / "main.ckpt")
        if not ckpt_path.exists():
            raise ConfigError(f"checkpoint {ckpt_path} does not exist")
        model, _ = pl.load_model(ckpt_path)
        test = pl.prepare_clips(pl.load_split(cfg, "test"), model.k_in,
                                get_provider(cfg.flow.input_provider), pl.flow_cache_dir(cfg))
        _, report = pl.evaluate(model, cfg, test, Path(args.out or Path(cfg.run_dir) / "eval"))
        print(f"AUC {report['auc']:.4f}  ({report['seconds_per_frame'] * 1e3:.1f} ms/frame)")
    elif args.command == "ablate":
        for row in pl.run_ablation(cfg, args.rows):
            print(f"model {row['model']}: AUC {row['auc']:.4f}")
    elif args.command == "sweep":
        for row in pl.run_sweep(cfg):
            print(f"N={row['N']} k={row['k']}: AUC {row['auc']:.4f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return run(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        # a missing config file is a configuration problem
        if Path(args.config) == Path(exc.filename or ""):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FloatingPointError, RuntimeError, OSError, ValueError, KeyError, zipfile.BadZipFile) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
