"""``est`` command line: synth, train, eval, gradcheck, profile, inspect.

Exit codes: 0 success, 2 configuration error, 3 artifact mismatch,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig, load_config
from .container import read_container, write_container
from .errors import ConfigError, DimensionError, FormatError, NumericError
from .model import EST, profile
from .pipeline import generate_permutation_table
from .synth import SynthConfig, synth_dataset
from .training import (Trainer, evaluate, inspect_attention, model_gradcheck,
                       random_inputs)

log = logging.getLogger("est")

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH, EXIT_NUMERIC = 0, 2, 3, 4


class ArtifactMismatch(Exception):
    pass


def _load_data(path: str, what: str):
    if not path:
        raise ConfigError(f"{what} path is not set")
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return read_container(path)


def _load_model(cfg: RunConfig, checkpoint_path: str) -> EST:
    if not Path(checkpoint_path).is_file():
        raise ConfigError(f"checkpoint not found: {checkpoint_path}")
    state = checkpoint.load(checkpoint_path)
    if "query" in state and state["query"].shape[0] != cfg.d:
        raise ArtifactMismatch(f"checkpoint width d={state['query'].shape[0]} does not match "
                               f"config width d={cfg.d}")
    model = EST(cfg.model_config())
    try:
        model.load_state_dict(state)
    except DimensionError as exc:
        raise ArtifactMismatch(str(exc)) from exc
    return model


def _emit(obj) -> None:
    print(json.dumps(obj))


def cmd_synth(args) -> int:
    try:
        h, w, c = (int(x) for x in args.geometry.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"--geometry must look like 32x32x1, got {args.geometry!r}") from exc
    if args.classes < 1 or args.per_class < 1:
        raise ConfigError("--classes and --per-class must be positive")
    cfg = SynthConfig(num_classes=args.classes, per_class=args.per_class, height=h, width=w,
                      channels=c, frames=args.frames, noise=args.noise)
    ds = synth_dataset(cfg, args.seed)
    write_container(ds, args.out)
    log.info("wrote %d videos to %s", len(ds), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.out_dir:
        cfg = cfg.with_overrides([f"out_dir={args.out_dir}"])
    train = _load_data(cfg.train_data, "train_data")
    if train.num_classes != cfg.num_classes:
        raise ArtifactMismatch(f"dataset has {train.num_classes} classes, config "
                               f"num_classes={cfg.num_classes}")
    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.to_text(), encoding="utf-8")

    model = EST(cfg.model_config())
    table = generate_permutation_table(cfg.n, cfg.num_shuffle_types, cfg.table_seed)
    trainer = Trainer(model, train, table, cfg.train_config(), cfg.pipeline_config())
    with open(run_dir / "metrics.jsonl", "w", encoding="utf-8") as metrics:
        def on_epoch(stats):
            if not np.isfinite(stats.loss_cls):
                raise NumericError(f"non-finite loss at epoch {stats.epoch}")
            metrics.write(json.dumps(stats.to_dict()) + "\n")
            metrics.flush()
            log.info("epoch %d lr=%.3g loss_cls=%.4f acc=%.3f order_acc=%s", stats.epoch,
                     stats.lr, stats.loss_cls, stats.train_acc, stats.order_acc)
        trainer.fit(on_epoch)
    checkpoint.save(model.params, run_dir / "checkpoint.estw")

    eval_data = _load_data(cfg.test_data, "test_data") if cfg.test_data else train
    report = evaluate(model, eval_data, cfg.eval_seed, pcfg=cfg.pipeline_config())
    report.loss_trace = [s.loss_cls for s in trainer.history]
    (run_dir / "eval_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set)
    model = _load_model(cfg, args.checkpoint)
    data = _load_data(args.data, "--data")
    _emit(evaluate(model, data, cfg.eval_seed, pcfg=cfg.pipeline_config()).to_dict())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config, args.set)
    model = EST(cfg.model_config())
    frames, labels, orders = random_inputs(model, cfg.gradcheck_videos, cfg.seed)
    report = model_gradcheck(model, frames, labels, orders, cfg.lambda_ssop,
                             cfg.gradcheck_h, cfg.gradcheck_tol)
    _emit(report.to_dict())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_profile(args) -> int:
    cfg = load_config(args.config, args.set)
    counts = profile(cfg.model_config())
    _emit({"params": counts["parameter_count"], "macs": counts["mac_count"],
           "ssop_head_macs": counts["ssop_head_macs"]})
    return EXIT_OK


def cmd_inspect(args) -> int:
    cfg = load_config(args.config, args.set)
    model = _load_model(cfg, args.checkpoint)
    data = _load_data(args.data, "--data")
    result = inspect_attention(model, data, cfg.eval_seed, pcfg=cfg.pipeline_config())
    for rec in result.records:
        _emit(rec)
    _emit({"histogram": result.histogram.tolist(), "entropy": result.entropy})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="est", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic ESTV dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--geometry", default="32x32x1", help="HxWxC")
    p.add_argument("--frames", type=int, default=105)
    p.add_argument("--noise", type=float, default=SynthConfig.noise)
    p.set_defaults(func=cmd_synth)

    def with_config(name, help_, func, checkpoint=False, data=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
        if data:
            p.add_argument("--data", required=True)
        p.set_defaults(func=func)
        return p

    with_config("train", "train a model", cmd_train).add_argument("--out-dir", default="")
    with_config("eval", "evaluate a checkpoint", cmd_eval, checkpoint=True, data=True)
    with_config("gradcheck", "finite-difference gradient check", cmd_gradcheck)
    with_config("profile", "parameter and MAC counts", cmd_profile)
    with_config("inspect", "decoder attention over snippets", cmd_inspect,
                checkpoint=True, data=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactMismatch, FormatError) as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
